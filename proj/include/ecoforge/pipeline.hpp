#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ecoforge/clock.hpp"
#include "ecoforge/exec_env.hpp"
#include "ecoforge/judge.hpp"
#include "ecoforge/llm.hpp"
#include "ecoforge/types.hpp"

namespace ecoforge {

struct PipelineConfig {
  int max_stage3_iterations = 20;
  int max_self_corrections = 6;
  double temperature_initial = 0.2;
  double temperature_step = 0.2;
  double temperature_cap = 0.8;
  int fixed_unsuccessful_budget = 4;  // models without temperature support
  bool reset_temperature_on_improvement = true;
};

/// Throws ConfigError when budgets or the ladder are out of range.
void validate(const PipelineConfig& cfg);

/// Mutable state of the stage-3 loop, exposed for state-machine tests.
struct PipelineState {
  int temperature_rung = 0;  // temperature = initial + rung * step
  int iterations_done = 0;
  int unsuccessful_streak = 0;
  std::string context_bundle;
  std::string active_plan;
};

/// Ladder decision after an iteration that produced no new best.
struct TempDecision {
  bool stop = false;
  double next_temperature = 0.0;  // meaningful when !stop and supported
};

/// Temperature ladder per the adaptive schedule: step until the next value
/// would exceed the cap, then stop. Models without temperature support stop
/// after `fixed_unsuccessful_budget` consecutive non-improving iterations
/// instead. Mutates the rung/streak counters in `state`.
TempDecision adapt_temperature(PipelineState& state, const PipelineConfig& cfg,
                               bool supports_temperature);

/// Result of the compile-run-fix loop around one candidate.
struct SelfCorrectResult {
  CodeArtifact code;                 // last code version attempted
  CompileResult compile;             // of `code`
  std::optional<ExecResult> exec;    // of `code`, when it compiled
  int corrections = 0;               // correction prompts issued
  bool exhausted = false;            // budget ran out before a clean run
};

struct TrialSetup {
  std::string app_id;
  std::string device_id;
  CodeArtifact source;
  std::string doc_corpus;  // pre-loaded excerpt text; empty skips the doc summary
};

/// Everything a trial needs injected.
struct TrialDeps {
  ExecutionEnv* env = nullptr;
  LlmGateway* gateway = nullptr;
  const TemplateRegistry* templates = nullptr;
  ModelProfile generator;
  ModelProfile judge;
  Clock* clock = nullptr;
};

/// Drives one complete trial through stages 0-4. Stage methods are public so
/// tests can exercise the state machine piecewise; `run()` is the normal
/// entry point.
class TrialRunner {
 public:
  TrialRunner(TrialSetup setup, PipelineConfig cfg, TrialDeps deps);

  TrialRecord run();

  /// Stage 0: baseline build + measured run of the unmodified source.
  /// Throws SourceBuildFailed / SourceExecFailed.
  EnergyReport stage0_profile();
  /// Stage 1: single zero-shot attempt, no self-correction.
  void stage1_vanilla();
  /// Stage 2: context bundle (doc summary if docs exist, code summary) and
  /// the first refactoring plan, both over the current best code.
  void stage2_context();
  /// Stage 3: one iteration. Returns false when the loop must stop.
  bool stage3_iterate();
  /// Stage 4: final comparison (when a best exists) and record assembly.
  TrialRecord stage4_finalize();

  /// Compile-run-fix loop; `corrections` counts LLM fix requests.
  SelfCorrectResult self_correct(CodeArtifact code, int budget,
                                 const std::string& label_prefix = "self_correct");

  const PipelineState& state() const { return state_; }
  StopReason stop_reason() const { return stop_reason_; }

 private:
  std::string ask(const std::string& label, TemplateId id,
                  const std::map<std::string, std::string>& slots,
                  std::optional<double> temperature);
  double current_temperature() const;
  std::optional<double> generation_temperature() const;
  /// Measured energy of the current best code (source until replaced).
  double best_energy_j() const { return best_energy_j_; }
  void adopt_best(const CodeArtifact& code, double energy_j, BestRef ref);
  Verdict screen_candidate(const CodeArtifact& candidate, const std::string& candidate_stdout,
                           const EnergyReport& candidate_energy, const std::string& label);

  TrialSetup setup_;
  PipelineConfig cfg_;
  TrialDeps deps_;
  PipelineState state_;

  std::string system_prompt_;
  double trial_start_s_ = 0.0;

  // stage 0 outputs
  EnergyReport source_energy_;
  std::optional<PowerProfile> source_profile_;
  std::string source_stdout_;
  bool stage0_done_ = false;

  // best tracking
  CodeArtifact best_code_;
  double best_energy_j_ = 0.0;
  std::optional<BestRef> best_ref_;

  // accumulating record
  std::optional<CandidateRecord> vanilla_;
  std::vector<CandidateRecord> stage3_;
  std::vector<LlmExchange> transcript_;
  int plans_issued_ = 0;
  StopReason stop_reason_ = StopReason::MaxIterations;
  bool stopped_ = false;
};

/// Reads `<dir>/*.txt` (sorted by filename) into one bundle; missing or empty
/// directory yields "".
std::string load_doc_corpus(const std::filesystem::path& dir);

}  // namespace ecoforge
