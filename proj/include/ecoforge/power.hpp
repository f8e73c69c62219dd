#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ecoforge/build_exec.hpp"
#include "ecoforge/clock.hpp"
#include "ecoforge/types.hpp"

namespace ecoforge {

/// Source of instantaneous device power readings. Implementations never return
/// a negative value; anything unreadable throws BackendUnavailable.
class PowerBackend {
 public:
  virtual ~PowerBackend() = default;
  virtual std::string name() const = 0;
  virtual double read_power_w() = 0;
};

/// Parses one `nvidia-smi --query-gpu=power.draw --format=csv,noheader,nounits`
/// output: a bare watts number per line, first line wins.
double parse_nvidia_smi_power(const std::string& tool_output);

/// Parses `rocm-smi --showpower` output by locating the
/// "Average Graphics Package Power (W)" field.
double parse_rocm_smi_power(const std::string& tool_output);

/// Backend that shells out to a vendor query tool for every sample.
class CliQueryBackend final : public PowerBackend {
 public:
  using Parser = double (*)(const std::string&);
  CliQueryBackend(std::string name, std::vector<std::string> argv, Parser parser,
                  double query_timeout_s = 5.0);
  std::string name() const override { return name_; }
  double read_power_w() override;

 private:
  std::string name_;
  std::vector<std::string> argv_;
  Parser parser_;
  double timeout_s_;
};

std::unique_ptr<PowerBackend> make_nvidia_smi_backend();
std::unique_ptr<PowerBackend> make_rocm_smi_backend();

/// Backend that replays a recorded transcript of tool outputs (one record per
/// read, separated by a line of "---"). Lets archived sessions re-run without
/// hardware. Repeats the final record once the transcript is exhausted.
class ReplayBackend final : public PowerBackend {
 public:
  using Parser = double (*)(const std::string&);
  ReplayBackend(std::string name, std::vector<std::string> records, Parser parser);
  static ReplayBackend from_transcript_file(const std::filesystem::path& file, Parser parser,
                                            std::string name = "replay");
  std::string name() const override { return name_; }
  double read_power_w() override;

 private:
  std::string name_;
  std::vector<std::string> records_;
  Parser parser_;
  std::size_t next_ = 0;
};

/// Piecewise-constant power trace over time offsets; the value at offset t is
/// the value of the last point at or before t.
class SyntheticTrace {
 public:
  SyntheticTrace() = default;
  explicit SyntheticTrace(std::vector<std::pair<double, double>> points);
  /// One "offset watts" pair per line; '#' comments allowed.
  static SyntheticTrace parse(const std::string& text);
  static SyntheticTrace from_file(const std::filesystem::path& file);
  double power_at(double offset_s) const;
  const std::vector<std::pair<double, double>>& points() const { return points_; }

 private:
  std::vector<std::pair<double, double>> points_;
};

/// Backend that follows a synthetic trace against an injected clock.
class SyntheticBackend final : public PowerBackend {
 public:
  SyntheticBackend(SyntheticTrace trace, Clock& clock);
  std::string name() const override { return "synthetic"; }
  double read_power_w() override;
  void reset_epoch();

 private:
  SyntheticTrace trace_;
  Clock* clock_;
  double epoch_;
};

/// Sampling cadence and idle-window sizing around a measured execution.
struct ProfileOptions {
  double sample_interval_s = 0.01;
  double pre_idle_s = 5.0;
  double post_idle_s = 15.0;
  double exec_timeout_s = 600.0;
  std::size_t capture_limit_bytes = 256 * 1024;
};

/// Mean of power readings taken at the given cadence for `duration_s`.
/// Pre: duration_s >= interval_s > 0.
double estimate_idle(PowerBackend& backend, double duration_s, double interval_s, Clock& clock);

/// Samples idle, runs the command while sampling, samples idle again.
/// The returned profile brackets the execution window with [exec_start_t,
/// exec_end_t) and carries the two idle-window means. Execution failures and
/// timeouts come back inside ExecResult; the profile is returned either way.
/// Must run on a real clock (the child process runs concurrently).
std::pair<ExecResult, PowerProfile> profile_execution(PowerBackend& backend,
                                                      const std::vector<std::string>& argv,
                                                      const ProfileOptions& opts, Clock& clock);

/// Net-of-idle energy per the trapezoid-free discrete sum: with idle power
/// taken as the mean of the pre and post idle-window means,
///   E = dt * sum over in-window samples of max(P_i - idle, 0).
/// Throws EmptyWindow when no sample falls inside the execution window.
EnergyReport compute_net_energy(const PowerProfile& profile);

/// Builds the profile a constant-load execution would produce on an exact
/// sample grid: idle_w for the pre window, load_w for `duration_s`, idle_w for
/// the post window. Timestamps are i * interval, so counts are exact and runs
/// are reproducible bit for bit. Used by the mock execution environment.
PowerProfile synthesize_profile(double idle_w, double load_w, double duration_s,
                                const ProfileOptions& opts);

/// Samples an arbitrary trace on the same exact grid with the execution window
/// at [pre_idle_s, pre_idle_s + duration_s). Test aid for oracle comparisons.
PowerProfile profile_from_trace(const SyntheticTrace& trace, double duration_s,
                                const ProfileOptions& opts);

}  // namespace ecoforge
