#include "ecoforge/power.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "ecoforge/errors.hpp"

namespace ecoforge {

namespace {

double checked_watts(double w, const std::string& who) {
  if (!std::isfinite(w) || w < 0)
    throw BackendUnavailable(fmt::format("{}: implausible power reading {}", who, w));
  return w;
}

double mean(const std::vector<double>& xs) {
  double s = 0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

}  // namespace

double parse_nvidia_smi_power(const std::string& tool_output) {
  std::istringstream in(tool_output);
  std::string line;
  while (std::getline(in, line)) {
    std::size_t a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    std::size_t b = line.find_last_not_of(" \t\r");
    std::string token = line.substr(a, b - a + 1);
    try {
      std::size_t used = 0;
      double w = std::stod(token, &used);
      if (used != token.size()) throw std::invalid_argument(token);
      return checked_watts(w, "nvidia-smi");
    } catch (const BackendUnavailable&) {
      throw;
    } catch (const std::exception&) {
      throw BackendUnavailable(fmt::format("nvidia-smi: cannot parse power line '{}'", token));
    }
  }
  throw BackendUnavailable("nvidia-smi: empty power query output");
}

double parse_rocm_smi_power(const std::string& tool_output) {
  // Typical line:
  //   GPU[0] : Average Graphics Package Power (W): 37.0
  static const std::string key = "Average Graphics Package Power (W)";
  std::istringstream in(tool_output);
  std::string line;
  while (std::getline(in, line)) {
    std::size_t at = line.find(key);
    if (at == std::string::npos) continue;
    std::size_t colon = line.find(':', at + key.size());
    std::string rest = line.substr(colon == std::string::npos ? at + key.size() : colon + 1);
    try {
      return checked_watts(std::stod(rest), "rocm-smi");
    } catch (const BackendUnavailable&) {
      throw;
    } catch (const std::exception&) {
      throw BackendUnavailable(fmt::format("rocm-smi: cannot parse power value in '{}'", line));
    }
  }
  throw BackendUnavailable("rocm-smi: no 'Average Graphics Package Power' line in output");
}

CliQueryBackend::CliQueryBackend(std::string name, std::vector<std::string> argv, Parser parser,
                                 double query_timeout_s)
    : name_(std::move(name)), argv_(std::move(argv)), parser_(parser),
      timeout_s_(query_timeout_s) {}

double CliQueryBackend::read_power_w() {
  ExecResult r;
  try {
    r = run_command(argv_, timeout_s_, 64 * 1024);
  } catch (const Error& e) {
    throw BackendUnavailable(fmt::format("{}: {}", name_, e.what()));
  }
  if (!r.ok)
    throw BackendUnavailable(
        fmt::format("{}: query exited with {}: {}", name_, r.exit_code, r.stderr_text));
  return parser_(r.stdout_text);
}

std::unique_ptr<PowerBackend> make_nvidia_smi_backend() {
  return std::make_unique<CliQueryBackend>(
      "nvidia-smi",
      std::vector<std::string>{"nvidia-smi", "--query-gpu=power.draw",
                               "--format=csv,noheader,nounits"},
      &parse_nvidia_smi_power);
}

std::unique_ptr<PowerBackend> make_rocm_smi_backend() {
  return std::make_unique<CliQueryBackend>(
      "rocm-smi", std::vector<std::string>{"rocm-smi", "--showpower"}, &parse_rocm_smi_power);
}

ReplayBackend::ReplayBackend(std::string name, std::vector<std::string> records, Parser parser)
    : name_(std::move(name)), records_(std::move(records)), parser_(parser) {
  if (records_.empty()) throw BackendUnavailable("replay backend: empty transcript");
}

ReplayBackend ReplayBackend::from_transcript_file(const std::filesystem::path& file,
                                                  Parser parser, std::string name) {
  std::ifstream in(file);
  if (!in) throw BackendUnavailable(fmt::format("replay backend: cannot open {}", file.string()));
  std::vector<std::string> records;
  std::string record, line;
  while (std::getline(in, line)) {
    if (line == "---") {
      records.push_back(record);
      record.clear();
    } else {
      record += line;
      record += '\n';
    }
  }
  if (!record.empty()) records.push_back(record);
  return ReplayBackend(std::move(name), std::move(records), parser);
}

double ReplayBackend::read_power_w() {
  const std::string& rec = records_[std::min(next_, records_.size() - 1)];
  if (next_ < records_.size()) ++next_;
  return parser_(rec);
}

SyntheticTrace::SyntheticTrace(std::vector<std::pair<double, double>> points)
    : points_(std::move(points)) {
  std::sort(points_.begin(), points_.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
}

SyntheticTrace SyntheticTrace::parse(const std::string& text) {
  std::vector<std::pair<double, double>> pts;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    double t, w;
    if (ls >> t >> w) pts.emplace_back(t, w);
  }
  if (pts.empty()) throw BackendUnavailable("synthetic trace: no points");
  return SyntheticTrace(std::move(pts));
}

SyntheticTrace SyntheticTrace::from_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw BackendUnavailable(fmt::format("synthetic trace: cannot open {}", file.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

double SyntheticTrace::power_at(double offset_s) const {
  if (points_.empty()) throw BackendUnavailable("synthetic trace: no points");
  double w = points_.front().second;
  for (const auto& [t, v] : points_) {
    if (t > offset_s) break;
    w = v;
  }
  return w;
}

SyntheticBackend::SyntheticBackend(SyntheticTrace trace, Clock& clock)
    : trace_(std::move(trace)), clock_(&clock), epoch_(clock.now_s()) {}

double SyntheticBackend::read_power_w() {
  return checked_watts(trace_.power_at(clock_->now_s() - epoch_), "synthetic");
}

void SyntheticBackend::reset_epoch() { epoch_ = clock_->now_s(); }

double estimate_idle(PowerBackend& backend, double duration_s, double interval_s, Clock& clock) {
  if (!(interval_s > 0) || duration_s < interval_s)
    throw Error("estimate_idle: need duration >= interval > 0");
  std::vector<double> readings;
  double t0 = clock.now_s();
  for (long i = 0;; ++i) {
    double target = static_cast<double>(i) * interval_s;
    if (target >= duration_s) break;
    clock.sleep_s(t0 + target - clock.now_s());
    readings.push_back(checked_watts(backend.read_power_w(), backend.name()));
  }
  return mean(readings);
}

std::pair<ExecResult, PowerProfile> profile_execution(PowerBackend& backend,
                                                      const std::vector<std::string>& argv,
                                                      const ProfileOptions& opts, Clock& clock) {
  if (!(opts.sample_interval_s > 0)) throw Error("profile_execution: interval must be > 0");

  PowerProfile p;
  p.sample_interval_s = opts.sample_interval_s;
  const double t0 = clock.now_s();

  std::exception_ptr sampler_error;
  auto take_sample = [&] {
    p.samples.push_back({clock.now_s() - t0, backend.read_power_w()});
  };
  // Drift-free cadence: targets are multiples of the interval from t0.
  long tick = 0;
  auto sleep_until_next_tick = [&] {
    ++tick;
    clock.sleep_s(t0 + static_cast<double>(tick) * opts.sample_interval_s - clock.now_s());
  };

  while (clock.now_s() - t0 < opts.pre_idle_s) {
    take_sample();
    sleep_until_next_tick();
  }

  ExecResult exec;
  std::atomic<bool> done{false};
  double exec_start = 0, exec_end = 0;
  std::thread worker([&] {
    exec_start = clock.now_s() - t0;
    exec = run_command(argv, opts.exec_timeout_s, opts.capture_limit_bytes);
    exec_end = clock.now_s() - t0;
    done.store(true, std::memory_order_release);
  });
  try {
    while (!done.load(std::memory_order_acquire)) {
      take_sample();
      sleep_until_next_tick();
    }
  } catch (...) {
    sampler_error = std::current_exception();
  }
  worker.join();
  if (sampler_error) std::rethrow_exception(sampler_error);
  p.exec_start_t = exec_start;
  p.exec_end_t = exec_end;

  double post_until = (clock.now_s() - t0) + opts.post_idle_s;
  while (clock.now_s() - t0 < post_until) {
    take_sample();
    sleep_until_next_tick();
  }

  std::vector<double> pre, post;
  for (const auto& s : p.samples) {
    if (s.t_s < p.exec_start_t) pre.push_back(s.power_w);
    if (s.t_s >= p.exec_end_t) post.push_back(s.power_w);
  }
  p.idle_pre_w = pre.empty() ? 0.0 : mean(pre);
  p.idle_post_w = post.empty() ? 0.0 : mean(post);
  return {std::move(exec), std::move(p)};
}

EnergyReport compute_net_energy(const PowerProfile& profile) {
  if (!(profile.sample_interval_s > 0)) throw Error("profile has no sampling interval");
  if (!(profile.exec_end_t > profile.exec_start_t))
    throw EmptyWindow("execution window is empty or inverted");

  const double idle = (profile.idle_pre_w + profile.idle_post_w) / 2.0;
  double net_sum = 0;
  long in_window = 0;
  for (const auto& s : profile.samples) {
    if (s.t_s >= profile.exec_start_t && s.t_s < profile.exec_end_t) {
      net_sum += std::max(s.power_w - idle, 0.0);
      ++in_window;
    }
  }
  if (in_window == 0)
    throw EmptyWindow("no power samples fell inside the execution window");

  EnergyReport r;
  r.idle_power_w = idle;
  r.net_energy_j = profile.sample_interval_s * net_sum;
  r.runtime_s = profile.exec_end_t - profile.exec_start_t;
  r.mean_net_power_w = r.net_energy_j / r.runtime_s;
  return r;
}

PowerProfile synthesize_profile(double idle_w, double load_w, double duration_s,
                                const ProfileOptions& opts) {
  if (!(opts.sample_interval_s > 0)) throw Error("synthesize_profile: interval must be > 0");
  const double dt = opts.sample_interval_s;
  const long pre_n = std::lround(opts.pre_idle_s / dt);
  const long exec_n = std::max(std::lround(duration_s / dt), 1l);
  const long post_n = std::lround(opts.post_idle_s / dt);

  PowerProfile p;
  p.sample_interval_s = dt;
  p.exec_start_t = static_cast<double>(pre_n) * dt;
  p.exec_end_t = static_cast<double>(pre_n + exec_n) * dt;
  p.samples.reserve(static_cast<std::size_t>(pre_n + exec_n + post_n + 1));
  for (long i = 0; i <= pre_n + exec_n + post_n; ++i) {
    double t = static_cast<double>(i) * dt;
    bool in_exec = i >= pre_n && i < pre_n + exec_n;
    p.samples.push_back({t, in_exec ? load_w : idle_w});
  }
  p.idle_pre_w = idle_w;
  p.idle_post_w = idle_w;
  return p;
}

PowerProfile profile_from_trace(const SyntheticTrace& trace, double duration_s,
                                const ProfileOptions& opts) {
  if (!(opts.sample_interval_s > 0)) throw Error("profile_from_trace: interval must be > 0");
  const double dt = opts.sample_interval_s;
  const long pre_n = std::lround(opts.pre_idle_s / dt);
  const long exec_n = std::max(std::lround(duration_s / dt), 1l);
  const long post_n = std::lround(opts.post_idle_s / dt);

  PowerProfile p;
  p.sample_interval_s = dt;
  p.exec_start_t = static_cast<double>(pre_n) * dt;
  p.exec_end_t = static_cast<double>(pre_n + exec_n) * dt;
  std::vector<double> pre, post;
  for (long i = 0; i <= pre_n + exec_n + post_n; ++i) {
    double t = static_cast<double>(i) * dt;
    double w = trace.power_at(t);
    p.samples.push_back({t, w});
    if (t < p.exec_start_t) pre.push_back(w);
    if (t >= p.exec_end_t) post.push_back(w);
  }
  p.idle_pre_w = pre.empty() ? 0.0 : mean(pre);
  p.idle_post_w = post.empty() ? 0.0 : mean(post);
  return p;
}

}  // namespace ecoforge
