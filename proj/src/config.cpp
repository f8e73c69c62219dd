#include "ecoforge/config.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "ecoforge/errors.hpp"

namespace ecoforge {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

bool valid_id(const std::string& id) {
  if (id.empty()) return false;
  return std::all_of(id.begin(), id.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '-' || c == '_' || c == '.';
  });
}

}  // namespace

IniDoc IniDoc::parse(const std::string& text) {
  IniDoc doc;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ConfigError(fmt::format("config line {}: unterminated section header", lineno));
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty())
        throw ConfigError(fmt::format("config line {}: empty section name", lineno));
      doc.sections_[section];  // sections may legitimately be empty
      continue;
    }
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(fmt::format("config line {}: expected key = value", lineno));
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw ConfigError(fmt::format("config line {}: empty key", lineno));
    if (section.empty())
      throw ConfigError(fmt::format("config line {}: key outside any [section]", lineno));
    doc.sections_[section][key] = value;
  }
  return doc;
}

IniDoc IniDoc::from_file(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError(fmt::format("cannot open config file {}", file.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

bool IniDoc::has(const std::string& section, const std::string& key) const {
  auto s = sections_.find(section);
  return s != sections_.end() && s->second.count(key) > 0;
}

std::string IniDoc::require(const std::string& section, const std::string& key) const {
  if (!has(section, key))
    throw ConfigError(fmt::format("config is missing [{}] {}", section, key));
  return sections_.at(section).at(key);
}

std::string IniDoc::get_or(const std::string& section, const std::string& key,
                           const std::string& fallback) const {
  return has(section, key) ? sections_.at(section).at(key) : fallback;
}

double IniDoc::number_or(const std::string& section, const std::string& key,
                         double fallback) const {
  if (!has(section, key)) return fallback;
  const std::string& v = sections_.at(section).at(key);
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("config [{}] {}: '{}' is not a number", section, key, v));
  }
}

long IniDoc::integer_or(const std::string& section, const std::string& key,
                        long fallback) const {
  if (!has(section, key)) return fallback;
  const std::string& v = sections_.at(section).at(key);
  try {
    std::size_t used = 0;
    long n = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("config [{}] {}: '{}' is not an integer", section, key, v));
  }
}

bool IniDoc::flag_or(const std::string& section, const std::string& key, bool fallback) const {
  if (!has(section, key)) return fallback;
  std::string v = sections_.at(section).at(key);
  std::transform(v.begin(), v.end(), v.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
  if (v == "false" || v == "no" || v == "0" || v == "off") return false;
  throw ConfigError(fmt::format("config [{}] {}: '{}' is not a boolean", section, key, v));
}

std::vector<std::string> IniDoc::sections_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [name, _] : sections_)
    if (name.rfind(prefix, 0) == 0) out.push_back(name);
  return out;
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string token;
  for (char c : value) {
    if (c == ' ' || c == '\t' || c == ',') {
      if (!token.empty()) out.push_back(std::move(token));
      token.clear();
    } else {
      token += c;
    }
  }
  if (!token.empty()) out.push_back(std::move(token));
  return out;
}

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal();
}

}  // namespace

RunConfig load_run_config(const fs::path& file) {
  IniDoc doc = IniDoc::from_file(file);
  RunConfig cfg;
  cfg.config_dir = fs::absolute(file).parent_path();

  cfg.archive_root = resolve(cfg.config_dir, doc.get_or("archive", "root", "archive"));
  cfg.templates_dir = resolve(cfg.config_dir, doc.require("templates", "dir"));
  if (!fs::is_directory(cfg.templates_dir))
    throw ConfigError(
        fmt::format("config [templates] dir: {} is not a directory", cfg.templates_dir.string()));
  if (doc.has("docs", "dir")) cfg.docs_dir = resolve(cfg.config_dir, doc.require("docs", "dir"));
  cfg.workdir = resolve(cfg.config_dir, doc.get_or("toolchain", "workdir", "build-scratch"));

  cfg.pipeline.max_stage3_iterations =
      static_cast<int>(doc.integer_or("pipeline", "max_stage3_iterations", 20));
  cfg.pipeline.max_self_corrections =
      static_cast<int>(doc.integer_or("pipeline", "max_self_corrections", 6));
  cfg.pipeline.temperature_initial = doc.number_or("pipeline", "temperature_initial", 0.2);
  cfg.pipeline.temperature_step = doc.number_or("pipeline", "temperature_step", 0.2);
  cfg.pipeline.temperature_cap = doc.number_or("pipeline", "temperature_cap", 0.8);
  cfg.pipeline.fixed_unsuccessful_budget =
      static_cast<int>(doc.integer_or("pipeline", "fixed_unsuccessful_budget", 4));
  cfg.pipeline.reset_temperature_on_improvement =
      doc.flag_or("pipeline", "reset_temperature_on_improvement", true);
  validate(cfg.pipeline);

  cfg.profile.sample_interval_s = doc.number_or("profile", "sample_interval_s", 0.01);
  cfg.profile.pre_idle_s = doc.number_or("profile", "pre_idle_s", 5.0);
  cfg.profile.post_idle_s = doc.number_or("profile", "post_idle_s", 15.0);
  cfg.profile.exec_timeout_s = doc.number_or("profile", "exec_timeout_s", 600.0);
  if (!(cfg.profile.sample_interval_s > 0))
    throw ConfigError("config [profile] sample_interval_s must be > 0");

  cfg.metrics.k_list.clear();
  for (const auto& tok : split_list(doc.get_or("metrics", "k_list", "1 3 5"))) {
    try {
      cfg.metrics.k_list.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("config [metrics] k_list: '{}' is not an integer", tok));
    }
    if (cfg.metrics.k_list.back() < 1)
      throw ConfigError(fmt::format("config [metrics] k_list: k must be >= 1, got {}", tok));
  }
  std::string mode = doc.get_or("metrics", "mode", "exhaustive");
  if (mode == "exhaustive") {
    cfg.metrics.mode = EstimatorMode::Exhaustive;
  } else if (mode == "mc" || mode == "monte-carlo") {
    cfg.metrics.mode = EstimatorMode::MonteCarlo;
  } else {
    throw ConfigError(fmt::format("config [metrics] mode: unknown mode '{}'", mode));
  }
  cfg.metrics.mc.samples = doc.integer_or("metrics", "mc_samples", 100000);
  cfg.metrics.mc.seed = static_cast<std::uint64_t>(doc.integer_or("metrics", "seed", 0));

  std::string tk = doc.get_or("toolchain", "kind", "mock");
  if (tk == "mock") {
    cfg.toolchain_kind = ToolchainKind::Mock;
    cfg.toolchain_script = resolve(cfg.config_dir, doc.require("toolchain", "script"));
  } else if (tk == "cuda" || tk == "hip") {
    cfg.toolchain_kind = tk == "cuda" ? ToolchainKind::Cuda : ToolchainKind::Hip;
    cfg.toolchain = tk == "cuda" ? default_cuda_toolchain() : default_hip_toolchain();
    if (doc.has("toolchain", "invocation"))
      cfg.toolchain.invocation = split_list(doc.require("toolchain", "invocation"));
    if (doc.has("toolchain", "flags"))
      cfg.toolchain.fixed_flags = split_list(doc.require("toolchain", "flags"));
    cfg.toolchain.compile_timeout_s =
        doc.number_or("toolchain", "compile_timeout_s", cfg.toolchain.compile_timeout_s);
    cfg.toolchain.exec_timeout_s = cfg.profile.exec_timeout_s;
    cfg.toolchain.capture_limit_bytes = static_cast<std::size_t>(
        doc.integer_or("toolchain", "capture_limit_kib", 256) * 1024);
    cfg.profile.capture_limit_bytes = cfg.toolchain.capture_limit_bytes;
  } else {
    throw ConfigError(fmt::format("config [toolchain] kind: unknown kind '{}'", tk));
  }

  std::string pk = doc.get_or("power", "kind", "mock");
  if (pk == "mock") {
    cfg.power_kind = PowerKind::Mock;
    cfg.idle_power_w = doc.number_or("power", "idle_w", 0.0);
    if (!(cfg.idle_power_w >= 0)) throw ConfigError("config [power] idle_w must be >= 0");
  } else if (pk == "nvidia-smi") {
    cfg.power_kind = PowerKind::NvidiaSmi;
  } else if (pk == "rocm-smi") {
    cfg.power_kind = PowerKind::RocmSmi;
  } else if (pk == "trace") {
    cfg.power_kind = PowerKind::Trace;
    cfg.power_trace = resolve(cfg.config_dir, doc.require("power", "trace"));
  } else if (pk == "replay") {
    cfg.power_kind = PowerKind::Replay;
    cfg.power_transcript = resolve(cfg.config_dir, doc.require("power", "transcript"));
  } else {
    throw ConfigError(fmt::format("config [power] kind: unknown kind '{}'", pk));
  }
  if ((cfg.toolchain_kind == ToolchainKind::Mock) != (cfg.power_kind == PowerKind::Mock))
    throw ConfigError("mock toolchain and mock power must be configured together: the mock "
                      "execution environment synthesizes its own profiles");

  std::string lk = doc.get_or("llm", "kind", "mock");
  if (lk == "mock") {
    cfg.llm_kind = LlmKind::Mock;
    cfg.llm_script = resolve(cfg.config_dir, doc.require("llm", "script"));
  } else if (lk == "http") {
    cfg.llm_kind = LlmKind::Http;
    cfg.llm_base_url = doc.require("llm", "base_url");
  } else {
    throw ConfigError(fmt::format("config [llm] kind: unknown kind '{}'", lk));
  }
  cfg.generator.model_id = doc.get_or("llm", "generator_model", "mock-generator");
  cfg.generator.supports_temperature =
      doc.flag_or("llm", "generator_supports_temperature", true);
  cfg.judge.model_id = doc.get_or("llm", "judge_model", cfg.generator.model_id);
  cfg.judge.supports_temperature =
      doc.flag_or("llm", "judge_supports_temperature", cfg.generator.supports_temperature);
  cfg.retry.max_attempts = static_cast<int>(doc.integer_or("llm", "retry_max_attempts", 3));
  cfg.retry.initial_backoff_s = doc.number_or("llm", "retry_initial_backoff_s", 0.5);
  cfg.retry.backoff_multiplier = doc.number_or("llm", "retry_backoff_multiplier", 2.0);
  if (cfg.retry.max_attempts < 1) throw ConfigError("config [llm] retry_max_attempts must be >= 1");

  for (const auto& section : doc.sections_with_prefix("app:")) {
    AppSpec app;
    app.id = section.substr(4);
    if (!valid_id(app.id))
      throw ConfigError(fmt::format("config app id '{}' must be [A-Za-z0-9._-]+", app.id));
    app.source_path = resolve(cfg.config_dir, doc.require(section, "source"));
    if (!fs::is_regular_file(app.source_path))
      throw ConfigError(fmt::format("config app '{}': source {} does not exist", app.id,
                                    app.source_path.string()));
    app.dialect = dialect_from_string(doc.get_or(section, "dialect", "cuda"));
    app.device_id = doc.require(section, "device");
    if (!valid_id(app.device_id))
      throw ConfigError(fmt::format("config device id '{}' must be [A-Za-z0-9._-]+",
                                    app.device_id));
    app.args = split_list(doc.get_or(section, "args", ""));
    cfg.apps.push_back(std::move(app));
  }
  if (cfg.apps.empty()) throw ConfigError("config declares no [app:<id>] sections");

  return cfg;
}

}  // namespace ecoforge
