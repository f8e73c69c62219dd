#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ecoforge {

enum class Dialect { Cuda, Hip };

/// Where a piece of code came from inside a trial.
enum class CodeOrigin { Source, Vanilla, Stage3 };

enum class VerdictDecision { Valid, Invalid };

/// Why stage 3 stopped iterating.
enum class StopReason {
  TemperatureExhausted,      // ladder stepped past the cap
  MaxIterations,             // iteration budget consumed
  UnsuccessfulBudgetExhausted  // fixed budget for temperature-less models
};

std::string_view to_string(Dialect d);
std::string_view to_string(CodeOrigin o);
std::string_view to_string(VerdictDecision v);
std::string_view to_string(StopReason r);
Dialect dialect_from_string(std::string_view s);         // throws ConfigError
CodeOrigin code_origin_from_string(std::string_view s);  // throws ConfigError
VerdictDecision verdict_from_string(std::string_view s);
StopReason stop_reason_from_string(std::string_view s);

/// One complete source file as it moves through the pipeline.
struct CodeArtifact {
  Dialect dialect = Dialect::Cuda;
  std::string source_text;
  CodeOrigin origin = CodeOrigin::Source;
  /// Stage-3 iteration that produced it; 0 for Source and Vanilla.
  int iteration_index = 0;
  /// Sampling temperature of the generating request, absent for Source and
  /// for models that do not expose temperature.
  std::optional<double> temperature_used;

  bool operator==(const CodeArtifact&) const = default;
};

/// Non-empty line count of a source text (derived, never stored authoritatively).
int lines_of_code(const std::string& source_text);

/// Throws Error if the artifact breaks its invariants (empty text,
/// iteration_index out of place for its origin).
void validate(const CodeArtifact& a);

/// One power reading. `t_s` is seconds relative to the profile's start;
/// `power_w` is raw watts from the backend (>= 0) until idle subtraction,
/// which happens inside the energy computation, never in stored samples.
struct PowerSample {
  double t_s = 0.0;
  double power_w = 0.0;
  bool operator==(const PowerSample&) const = default;
};

/// A full sampling session around one program execution.
struct PowerProfile {
  std::vector<PowerSample> samples;
  double idle_pre_w = 0.0;   // mean of the pre-run idle window
  double idle_post_w = 0.0;  // mean of the post-run idle window
  double exec_start_t = 0.0; // window edges, same timebase as samples
  double exec_end_t = 0.0;
  double sample_interval_s = 0.0;
  bool operator==(const PowerProfile&) const = default;
};

/// Net-of-idle energy summary for one execution window.
struct EnergyReport {
  double net_energy_j = 0.0;
  double mean_net_power_w = 0.0;
  double runtime_s = 0.0;
  double idle_power_w = 0.0;  // the subtracted baseline
  bool operator==(const EnergyReport&) const = default;
};

/// One-line human/prompt rendering of an energy report.
std::string describe(const EnergyReport& e);

struct Verdict {
  VerdictDecision decision = VerdictDecision::Invalid;
  std::string rationale;
  bool operator==(const Verdict&) const = default;
};

/// Everything recorded about one generated candidate.
struct CandidateRecord {
  CodeArtifact code;
  bool compile_ok = false;
  bool exec_ok = false;
  int self_correction_count = 0;
  std::optional<EnergyReport> energy;   // present iff compiled and executed
  std::optional<Verdict> verdict;       // present iff energy was measured
  std::optional<PowerProfile> profile;  // sample log behind `energy`
  bool operator==(const CandidateRecord&) const = default;
};

/// Screening gate: compiled, executed, and judged Valid. Derived on demand,
/// deliberately not a stored flag.
bool passed_screening(const CandidateRecord& c);

void validate(const CandidateRecord& c);

/// Which candidate a trial settled on.
struct BestRef {
  CodeOrigin kind = CodeOrigin::Vanilla;  // Vanilla or Stage3
  int index = 0;                          // into stage3_candidates when Stage3
  bool operator==(const BestRef&) const = default;
};

/// One prompt/reply exchange, archived for replay.
struct LlmExchange {
  std::string label;  // e.g. "stage3.iter2.judge"
  std::string system_prompt;
  std::string user_prompt;
  std::optional<double> temperature;
  std::string reply;
  bool operator==(const LlmExchange&) const = default;
};

/// Complete record of one pipeline trial; the unit the archive persists.
struct TrialRecord {
  std::string app_id;
  std::string device_id;
  EnergyReport source_energy;
  std::optional<PowerProfile> source_profile;
  std::optional<CandidateRecord> vanilla;      // absent if stage 1 yielded no code
  std::vector<CandidateRecord> stage3_candidates;
  std::optional<BestRef> best;                 // absent when nothing beat the source
  std::optional<std::string> comparison_report;
  StopReason stop_reason = StopReason::MaxIterations;
  double wall_time_s = 0.0;
  int plans_issued = 0;
  std::vector<LlmExchange> transcript;
  bool operator==(const TrialRecord&) const = default;
};

/// Resolves a BestRef to the candidate it names. Throws Error on a dangling ref.
const CandidateRecord& resolve_best(const TrialRecord& t);

/// Cross-field invariants: best points at a screened candidate whose energy is
/// strictly below source, comparison_report present iff best is, candidates
/// individually valid. Throws Error on violation.
void validate(const TrialRecord& t);

}  // namespace ecoforge
