#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ecoforge/config.hpp"
#include "ecoforge/metrics.hpp"

namespace ecoforge::cli {

/// Process exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;       // bad flags, malformed config, unknown app
inline constexpr int kExitEnvironment = 3;  // toolchain, power backend, LLM transport
inline constexpr int kExitEmptyInput = 4;   // metrics/report over an archive with nothing in it

struct RunRequest {
  std::filesystem::path config_file;
  std::string app_filter;     // empty: every configured app
  std::string device_filter;  // empty: every device
  int trials = 1;             // per selected app
  std::optional<std::filesystem::path> archive_override;
};

/// Runs trials and persists each one as it completes. Prints one summary line
/// per trial. Never returns 0 unless every requested trial was persisted.
int cmd_run(const RunRequest& req, std::ostream& out, std::ostream& err);

struct MetricsRequest {
  std::filesystem::path archive_root;
  std::vector<int> k_list{1, 3, 5};
  EstimatorMode mode = EstimatorMode::Exhaustive;
  std::uint64_t seed = 0;
  long mc_samples = 100000;
  std::optional<std::filesystem::path> out_dir;  // metrics.csv target; default archive root
};

/// Aggregates the archive into success/efficiency tables and metrics.csv.
int cmd_metrics(const MetricsRequest& req, std::ostream& out, std::ostream& err);

struct ReportRequest {
  std::filesystem::path archive_root;
  std::optional<std::filesystem::path> rules_file;  // default: built-in ruleset
  int top_n = 10;
};

/// Categorizes the optimizations named in archived comparison reports and
/// prints the distribution overall, per device, and the most frequent items.
int cmd_report(const ReportRequest& req, std::ostream& out, std::ostream& err);

}  // namespace ecoforge::cli
