#include "ecoforge/exec_env.hpp"

#include <fmt/core.h>

#include <fstream>
#include <nlohmann/json.hpp>

#include "ecoforge/errors.hpp"

namespace ecoforge {

LiveEnv::LiveEnv(ToolchainConfig toolchain, PowerBackend& backend, ProfileOptions profile_opts,
                 std::filesystem::path workdir, std::vector<std::string> app_args, Clock& clock)
    : toolchain_(std::move(toolchain)), backend_(&backend), profile_opts_(profile_opts),
      workdir_(std::move(workdir)), app_args_(std::move(app_args)), clock_(&clock) {}

CompileResult LiveEnv::compile_code(const CodeArtifact& code) {
  return compile(code, toolchain_, workdir_);
}

ExecResult LiveEnv::run_plain(const CompileResult& built) {
  if (!built.ok || !built.binary_path) throw Error("run_plain: candidate did not build");
  return execute(*built.binary_path, app_args_, toolchain_.exec_timeout_s,
                 toolchain_.capture_limit_bytes);
}

std::pair<ExecResult, PowerProfile> LiveEnv::run_measured(const CompileResult& built) {
  if (!built.ok || !built.binary_path) throw Error("run_measured: candidate did not build");
  std::vector<std::string> argv;
  argv.push_back(built.binary_path->string());
  argv.insert(argv.end(), app_args_.begin(), app_args_.end());
  return profile_execution(*backend_, argv, profile_opts_, *clock_);
}

MockToolchain MockToolchain::from_file(const std::filesystem::path& script) {
  std::ifstream in(script);
  if (!in) throw ConfigError(fmt::format("cannot open mock toolchain script {}", script.string()));
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("mock toolchain script {} is not valid JSON: {}",
                                  script.string(), e.what()));
  }
  std::vector<Rule> rules;
  for (const auto& jr : doc.value("rules", nlohmann::json::array())) {
    Rule r;
    if (jr.contains("hash")) r.source_hash_hex = jr.at("hash").get<std::string>();
    if (jr.contains("contains"))
      r.source_contains = jr.at("contains").get<std::vector<std::string>>();
    r.note = jr.value("note", "");
    r.outcome.compile_ok = jr.value("compile_ok", true);
    r.outcome.compile_diagnostics = jr.value("diagnostics", "");
    r.outcome.exit_code = jr.value("exit_code", 0);
    r.outcome.stdout_text = jr.value("stdout", "");
    r.outcome.stderr_text = jr.value("stderr", "");
    r.outcome.duration_s = jr.value("duration_s", 1.0);
    r.outcome.load_power_w = jr.value("load_power_w", 100.0);
    rules.push_back(std::move(r));
  }
  return MockToolchain(std::move(rules));
}

const MockOutcome& MockToolchain::lookup(const std::string& source_text) const {
  for (const auto& r : rules_) {
    if (r.source_hash_hex && *r.source_hash_hex != content_hash_hex(source_text)) continue;
    bool all = true;
    for (const auto& needle : r.source_contains) {
      if (source_text.find(needle) == std::string::npos) {
        all = false;
        break;
      }
    }
    if (!all) continue;
    return r.outcome;
  }
  throw MockScriptMiss(fmt::format(
      "mock toolchain script has no rule for source (hash {}, head: {})",
      content_hash_hex(source_text), source_text.substr(0, 80)));
}

MockEnv::MockEnv(MockToolchain script, double idle_power_w, ProfileOptions profile_opts,
                 Clock& clock)
    : script_(std::move(script)), idle_power_w_(idle_power_w), profile_opts_(profile_opts),
      clock_(&clock) {}

CompileResult MockEnv::compile_code(const CodeArtifact& code) {
  const MockOutcome& o = script_.lookup(code.source_text);
  CompileResult res;
  res.diagnostics = o.compile_diagnostics;
  res.ok = o.compile_ok;
  if (res.ok) {
    std::string token = fmt::format("mock://{}-{}", content_hash_hex(code.source_text),
                                    built_serial_++);
    built_[token] = &script_.lookup(code.source_text);
    built_source_[token] = code.source_text;
    res.binary_path = token;
  }
  return res;
}

const MockOutcome& MockEnv::outcome_for(const CompileResult& built) {
  if (!built.ok || !built.binary_path) throw Error("mock run: candidate did not build");
  auto it = built_.find(built.binary_path->string());
  if (it == built_.end())
    throw Error(fmt::format("mock run: unknown binary token {}", built.binary_path->string()));
  return *it->second;
}

ExecResult MockEnv::run_plain(const CompileResult& built) {
  const MockOutcome& o = outcome_for(built);
  clock_->sleep_s(o.duration_s);
  ExecResult r;
  r.exit_code = o.exit_code;
  r.ok = o.exit_code == 0;
  r.stdout_text = o.stdout_text;
  r.stderr_text = o.stderr_text;
  r.wall_time_s = o.duration_s;
  return r;
}

std::pair<ExecResult, PowerProfile> MockEnv::run_measured(const CompileResult& built) {
  const MockOutcome& o = outcome_for(built);
  PowerProfile p = synthesize_profile(idle_power_w_, o.load_power_w, o.duration_s, profile_opts_);
  // Advance the virtual timeline by the whole sampling session.
  clock_->sleep_s(p.samples.empty() ? 0.0 : p.samples.back().t_s + p.sample_interval_s);
  ExecResult r;
  r.exit_code = o.exit_code;
  r.ok = o.exit_code == 0;
  r.stdout_text = o.stdout_text;
  r.stderr_text = o.stderr_text;
  r.wall_time_s = o.duration_s;
  return {std::move(r), std::move(p)};
}

}  // namespace ecoforge
