#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ecoforge/build_exec.hpp"
#include "ecoforge/clock.hpp"
#include "ecoforge/power.hpp"
#include "ecoforge/types.hpp"

namespace ecoforge {

/// What the pipeline needs from the outside world for one candidate: build
/// it, run it cheaply (self-correction), run it under the power sampler.
/// LiveEnv talks to a real toolchain and power backend; MockEnv replays a
/// script on a virtual timeline, which is what makes trials reproducible
/// byte for byte.
class ExecutionEnv {
 public:
  virtual ~ExecutionEnv() = default;
  virtual CompileResult compile_code(const CodeArtifact& code) = 0;
  /// Plain run, no profiling; used inside the self-correction loop.
  virtual ExecResult run_plain(const CompileResult& built) = 0;
  /// Run bracketed by idle sampling windows; the measurement of record.
  virtual std::pair<ExecResult, PowerProfile> run_measured(const CompileResult& built) = 0;
};

/// Real toolchain + real power backend + real clock.
class LiveEnv final : public ExecutionEnv {
 public:
  LiveEnv(ToolchainConfig toolchain, PowerBackend& backend, ProfileOptions profile_opts,
          std::filesystem::path workdir, std::vector<std::string> app_args, Clock& clock);

  CompileResult compile_code(const CodeArtifact& code) override;
  ExecResult run_plain(const CompileResult& built) override;
  std::pair<ExecResult, PowerProfile> run_measured(const CompileResult& built) override;

 private:
  ToolchainConfig toolchain_;
  PowerBackend* backend_;
  ProfileOptions profile_opts_;
  std::filesystem::path workdir_;
  std::vector<std::string> app_args_;
  Clock* clock_;
};

/// One scripted build/run outcome for a source text.
struct MockOutcome {
  bool compile_ok = true;
  std::string compile_diagnostics;
  int exit_code = 0;
  std::string stdout_text;
  std::string stderr_text;
  double duration_s = 1.0;      // simulated execution time
  double load_power_w = 100.0;  // device draw while executing
};

/// Script keyed by source-text content hash or by marker substrings; first
/// matching rule wins. A lookup miss throws MockScriptMiss so fixture holes
/// surface immediately.
class MockToolchain {
 public:
  struct Rule {
    std::optional<std::string> source_hash_hex;
    std::vector<std::string> source_contains;
    MockOutcome outcome;
    std::string note;
  };

  MockToolchain() = default;
  explicit MockToolchain(std::vector<Rule> rules) : rules_(std::move(rules)) {}
  /// JSON: {"rules": [{"contains": [...], "hash": "...", "compile_ok": ..,
  /// "diagnostics": .., "exit_code": .., "stdout": .., "stderr": ..,
  /// "duration_s": .., "load_power_w": ..}]}.
  static MockToolchain from_file(const std::filesystem::path& script);
  void add_rule(Rule r) { rules_.push_back(std::move(r)); }

  const MockOutcome& lookup(const std::string& source_text) const;

 private:
  std::vector<Rule> rules_;
};

/// Scripted environment on a virtual timeline: compiles consume no time, a
/// plain run advances the clock by the scripted duration, a measured run
/// synthesizes the exact-grid power profile around it.
class MockEnv final : public ExecutionEnv {
 public:
  MockEnv(MockToolchain script, double idle_power_w, ProfileOptions profile_opts, Clock& clock);

  CompileResult compile_code(const CodeArtifact& code) override;
  ExecResult run_plain(const CompileResult& built) override;
  std::pair<ExecResult, PowerProfile> run_measured(const CompileResult& built) override;

 private:
  const MockOutcome& outcome_for(const CompileResult& built);

  MockToolchain script_;
  double idle_power_w_;
  ProfileOptions profile_opts_;
  Clock* clock_;
  std::map<std::string, const MockOutcome*> built_;  // token path -> outcome
  std::map<std::string, std::string> built_source_;  // token path -> source text
  int built_serial_ = 0;
};

}  // namespace ecoforge
