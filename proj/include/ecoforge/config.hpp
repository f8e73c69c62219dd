#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ecoforge/build_exec.hpp"
#include "ecoforge/llm.hpp"
#include "ecoforge/metrics.hpp"
#include "ecoforge/pipeline.hpp"
#include "ecoforge/power.hpp"
#include "ecoforge/types.hpp"

namespace ecoforge {

/// Minimal INI-style document: [section] headers, key = value lines, full-line
/// comments starting with '#' or ';'. Later duplicate keys win.
class IniDoc {
 public:
  static IniDoc parse(const std::string& text);
  static IniDoc from_file(const std::filesystem::path& file);

  bool has(const std::string& section, const std::string& key) const;
  std::string require(const std::string& section, const std::string& key) const;
  std::string get_or(const std::string& section, const std::string& key,
                     const std::string& fallback) const;
  double number_or(const std::string& section, const std::string& key, double fallback) const;
  long integer_or(const std::string& section, const std::string& key, long fallback) const;
  bool flag_or(const std::string& section, const std::string& key, bool fallback) const;
  std::vector<std::string> sections_with_prefix(const std::string& prefix) const;

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

/// Whitespace/comma separated token list ("1 3 5" or "1,3,5").
std::vector<std::string> split_list(const std::string& value);

struct AppSpec {
  std::string id;
  std::filesystem::path source_path;
  Dialect dialect = Dialect::Cuda;
  std::string device_id;
  std::vector<std::string> args;
};

enum class ToolchainKind { Mock, Cuda, Hip };
enum class PowerKind { Mock, NvidiaSmi, RocmSmi, Trace, Replay };
enum class LlmKind { Mock, Http };

/// Everything `run` needs, resolved and validated. Relative paths in the file
/// are taken relative to the config file's directory.
struct RunConfig {
  std::filesystem::path config_dir;
  std::filesystem::path archive_root;
  std::filesystem::path templates_dir;
  std::filesystem::path docs_dir;  // empty: no doc corpus
  std::filesystem::path workdir;   // compile scratch space

  PipelineConfig pipeline;
  ProfileOptions profile;
  MetricsOptions metrics;

  ToolchainKind toolchain_kind = ToolchainKind::Mock;
  std::filesystem::path toolchain_script;  // mock kind
  ToolchainConfig toolchain;               // live kinds

  PowerKind power_kind = PowerKind::Mock;
  double idle_power_w = 0.0;                // mock kind
  std::filesystem::path power_trace;        // trace kind
  std::filesystem::path power_transcript;   // replay kind

  LlmKind llm_kind = LlmKind::Mock;
  std::filesystem::path llm_script;  // mock kind
  std::string llm_base_url;          // http kind
  ModelProfile generator;
  ModelProfile judge;
  RetryPolicy retry;

  std::vector<AppSpec> apps;
};

/// Parses and cross-validates the run configuration. Throws ConfigError with
/// a actionable message on any inconsistency.
RunConfig load_run_config(const std::filesystem::path& file);

}  // namespace ecoforge
