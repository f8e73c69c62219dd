#include "ecoforge/metrics.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <random>

#include "ecoforge/errors.hpp"

namespace ecoforge {

namespace {

// Unbiased draw from [0, bound) on top of the engine's raw 64-bit output
// (multiply-shift with rejection). The standard distributions are not
// implementation-stable; this is, which keeps Monte Carlo tables portable.
std::uint64_t bounded_u64(std::mt19937_64& rng, std::uint64_t bound) {
  while (true) {
    std::uint64_t x = rng();
    unsigned __int128 m = static_cast<unsigned __int128>(x) * bound;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < bound) {
      std::uint64_t threshold = (0 - bound) % bound;
      if (lo < threshold) continue;
    }
    return static_cast<std::uint64_t>(m >> 64);
  }
}

double binom(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (int j = 1; j <= k; ++j) r = r * static_cast<double>(n - k + j) / static_cast<double>(j);
  return r;
}

// C(n, k) when it fits in 64 bits, nullopt otherwise. The running value after
// step j is C(n-k+j, j), so the division is always exact.
std::optional<std::uint64_t> exact_binom(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 r = 1;
  for (int j = 1; j <= k; ++j) {
    r = r * static_cast<unsigned>(n - k + j) / static_cast<unsigned>(j);
    if (r > std::numeric_limits<std::uint64_t>::max()) return std::nullopt;
  }
  return static_cast<std::uint64_t>(r);
}

double mean_of(std::span<const double> xs) {
  double s = 0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

}  // namespace

double pass_at_k(int n, int c, int k) {
  if (n < 1) throw DomainError("pass_at_k: n must be positive");
  if (k < 1 || k > n) throw DomainError(fmt::format("pass_at_k: k={} outside [1, n={}]", k, n));
  if (c < 0 || c > n) throw DomainError(fmt::format("pass_at_k: c={} outside [0, n={}]", c, n));
  if (c == 0) return 0.0;
  if (n - c < k) return 1.0;  // C(n-c, k) = 0: some success is guaranteed
  // Exact integer binomials when they fit: one division, one rounding.
  auto miss = exact_binom(n - c, k);
  auto total = exact_binom(n, k);
  if (miss && total)
    return 1.0 - static_cast<double>(*miss) / static_cast<double>(*total);
  // Product form of C(n-c,k)/C(n,k); every factor is in (0,1], no overflow.
  double fail = 1.0;
  for (int i = 0; i < k; ++i)
    fail *= static_cast<double>(n - c - i) / static_cast<double>(n - i);
  return 1.0 - fail;
}

double er_at_k_valid(std::span<const double> valid_energies, double source_mean_energy_j, int k,
                     EstimatorMode mode, const McOptions& mc) {
  if (k < 1) throw DomainError("er_at_k_valid: k must be positive");
  if (valid_energies.empty()) return 0.0;  // no valid candidates: zero reduction by convention
  if (!(source_mean_energy_j > 0)) throw DomainError("er_at_k_valid: source mean must be > 0");

  std::vector<double> r;
  r.reserve(valid_energies.size());
  for (double e : valid_energies) {
    if (!(e > 0)) throw DomainError("er_at_k_valid: every valid energy must be > 0");
    r.push_back(std::max(0.0, (source_mean_energy_j - e) / source_mean_energy_j));
  }

  const int c = static_cast<int>(r.size());
  const int kk = std::min(k, c);
  if (kk == c) return *std::max_element(r.begin(), r.end());  // whole set, both modes

  if (mode == EstimatorMode::Exhaustive) {
    // With r sorted ascending, r[i] is the max of exactly C(i, kk-1) of the
    // C(c, kk) subsets (pick the other kk-1 from the i smaller values).
    std::sort(r.begin(), r.end());
    double acc = 0.0;
    double weight = 1.0;  // C(kk-1, kk-1)
    for (int i = kk - 1; i < c; ++i) {
      if (i > kk - 1)
        weight = weight * static_cast<double>(i) / static_cast<double>(i - kk + 1);
      acc += r[static_cast<std::size_t>(i)] * weight;
    }
    return acc / binom(c, kk);
  }

  // Monte Carlo: partial Fisher-Yates gives a uniform kk-subset per sample.
  if (mc.samples < 1) throw DomainError("er_at_k_valid: Monte Carlo needs samples >= 1");
  std::mt19937_64 rng(mc.seed);
  std::vector<std::uint32_t> idx(static_cast<std::size_t>(c));
  for (int i = 0; i < c; ++i) idx[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(i);
  double acc = 0.0;
  for (long s = 0; s < mc.samples; ++s) {
    double best = 0.0;
    for (int j = 0; j < kk; ++j) {
      auto pick = static_cast<std::size_t>(j) +
                  static_cast<std::size_t>(bounded_u64(rng, static_cast<std::uint64_t>(c - j)));
      std::swap(idx[static_cast<std::size_t>(j)], idx[pick]);
      best = std::max(best, r[idx[static_cast<std::size_t>(j)]]);
    }
    acc += best;
  }
  return acc / static_cast<double>(mc.samples);
}

double er_at_k(double pass_k, double er_k_valid) {
  if (pass_k < 0 || pass_k > 1) throw DomainError("er_at_k: pass@k outside [0,1]");
  if (er_k_valid < 0 || er_k_valid > 1) throw DomainError("er_at_k: er@k^valid outside [0,1]");
  return pass_k * er_k_valid;
}

std::string_view to_string(Arm a) { return a == Arm::Vanilla ? "vanilla" : "pipeline"; }

double TrialOutcomeSet::source_mean_energy_j() const {
  if (source_energies_j.empty()) throw DomainError("outcome set has no source energies");
  return mean_of(source_energies_j);
}

std::vector<TrialOutcomeSet> build_outcome_sets(const std::vector<TrialRecord>& trials) {
  std::map<std::pair<std::string, std::string>, std::vector<const TrialRecord*>> groups;
  for (const auto& t : trials) groups[{t.app_id, t.device_id}].push_back(&t);

  std::vector<TrialOutcomeSet> sets;
  for (const auto& [key, group] : groups) {
    TrialOutcomeSet vanilla{key.first, key.second, Arm::Vanilla, 0, {}, {}};
    TrialOutcomeSet pipeline{key.first, key.second, Arm::Pipeline, 0, {}, {}};
    for (const TrialRecord* t : group) {
      vanilla.n += 1;
      pipeline.n += 1;
      vanilla.source_energies_j.push_back(t->source_energy.net_energy_j);
      pipeline.source_energies_j.push_back(t->source_energy.net_energy_j);

      if (t->vanilla && passed_screening(*t->vanilla))
        vanilla.valid_candidate_energies_j.push_back(t->vanilla->energy->net_energy_j);

      double best = 0.0;
      bool any = false;
      auto consider = [&](const CandidateRecord& c) {
        if (!passed_screening(c)) return;
        double e = c.energy->net_energy_j;
        if (!any || e < best) best = e;
        any = true;
      };
      if (t->vanilla) consider(*t->vanilla);
      for (const auto& c : t->stage3_candidates) consider(c);
      if (any) pipeline.valid_candidate_energies_j.push_back(best);
    }
    sets.push_back(std::move(vanilla));
    sets.push_back(std::move(pipeline));
  }
  return sets;
}

MetricsResult aggregate(const std::vector<TrialRecord>& trials, const MetricsOptions& opts) {
  MetricsResult result;
  result.mode = opts.mode;
  result.seed = opts.mc.seed;
  if (trials.empty()) throw DomainError("aggregate: no trials");

  auto sets = build_outcome_sets(trials);

  for (const auto& set : sets) {
    if (set.arm == Arm::Vanilla) {
      bool any_attempt = false;
      for (const auto& t : trials)
        if (t.app_id == set.app_id && t.device_id == set.device_id && t.vanilla)
          any_attempt = true;
      if (!any_attempt)
        result.warnings.push_back(
            fmt::format("missing arm: no vanilla attempts recorded for {} on {}; "
                        "vanilla rows reflect zero passes",
                        set.app_id, set.device_id));
    }
    for (int k : opts.k_list) {
      if (k < 1 || k > set.n) {
        result.warnings.push_back(fmt::format("skipping k={} for {} on {} ({} arm): n={}", k,
                                              set.app_id, set.device_id, to_string(set.arm),
                                              set.n));
        continue;
      }
      MetricsRow row;
      row.app_id = set.app_id;
      row.device_id = set.device_id;
      row.arm = set.arm;
      row.k = k;
      row.n = set.n;
      row.c = set.c();
      row.pass = pass_at_k(set.n, set.c(), k);
      row.er_valid = er_at_k_valid(set.valid_candidate_energies_j, set.source_mean_energy_j(),
                                   k, opts.mode, opts.mc);
      row.er = er_at_k(row.pass, row.er_valid);
      result.rows.push_back(std::move(row));
    }
  }

  // Cross-app: arithmetic mean over apps for each (device, arm, k).
  std::map<std::tuple<std::string, Arm, int>, std::vector<const MetricsRow*>> by_device;
  for (const auto& row : result.rows)
    by_device[{row.device_id, row.arm, row.k}].push_back(&row);
  for (const auto& [key, rows] : by_device) {
    MetricsRow agg;
    agg.device_id = std::get<0>(key);
    agg.arm = std::get<1>(key);
    agg.k = std::get<2>(key);
    for (const MetricsRow* r : rows) {
      agg.n += r->n;
      agg.c += r->c;
      agg.pass += r->pass;
      agg.er_valid += r->er_valid;
      agg.er += r->er;
    }
    auto count = static_cast<double>(rows.size());
    agg.pass /= count;
    agg.er_valid /= count;
    agg.er /= count;
    result.cross_app.push_back(std::move(agg));
  }

  // Cross-device: mean of the cross-app rows for each (arm, k).
  std::map<std::pair<Arm, int>, std::vector<const MetricsRow*>> by_arm;
  for (const auto& row : result.cross_app) by_arm[{row.arm, row.k}].push_back(&row);
  for (const auto& [key, rows] : by_arm) {
    MetricsRow agg;
    agg.arm = key.first;
    agg.k = key.second;
    for (const MetricsRow* r : rows) {
      agg.n += r->n;
      agg.c += r->c;
      agg.pass += r->pass;
      agg.er_valid += r->er_valid;
      agg.er += r->er;
    }
    auto count = static_cast<double>(rows.size());
    agg.pass /= count;
    agg.er_valid /= count;
    agg.er /= count;
    result.cross_device.push_back(std::move(agg));
  }
  return result;
}

std::string format_percent(double fraction) { return fmt::format("{:.1f}%", fraction * 100.0); }

namespace {

void append_row(std::string& out, const MetricsRow& r, bool with_ids) {
  if (with_ids)
    out += fmt::format("{:<16} {:<14} ", r.app_id.empty() ? "-" : r.app_id,
                       r.device_id.empty() ? "-" : r.device_id);
  out += fmt::format("{:<9} {:>2}  {:>3} {:>3}  {:>8} {:>11} {:>8}\n", to_string(r.arm), r.k,
                     r.n, r.c, format_percent(r.pass), format_percent(r.er_valid),
                     format_percent(r.er));
}

}  // namespace

std::string format_metrics_tables(const MetricsResult& m) {
  std::string out;
  out += fmt::format("mode: {}   seed: {}\n\n",
                     m.mode == EstimatorMode::Exhaustive ? "exhaustive" : "monte-carlo", m.seed);
  out += fmt::format("{:<16} {:<14} {:<9} {:>2}  {:>3} {:>3}  {:>8} {:>11} {:>8}\n", "app",
                     "device", "arm", "k", "n", "c", "pass@k", "er@k^valid", "er@k");
  for (const auto& r : m.rows) append_row(out, r, true);

  // Paired deltas, pipeline minus vanilla, in percentage points.
  std::map<std::tuple<std::string, std::string, int>, std::pair<const MetricsRow*, const MetricsRow*>>
      pairs;
  for (const auto& r : m.rows) {
    auto& slot = pairs[{r.app_id, r.device_id, r.k}];
    (r.arm == Arm::Vanilla ? slot.first : slot.second) = &r;
  }
  std::string deltas;
  for (const auto& [key, pair] : pairs) {
    if (!pair.first || !pair.second) continue;
    deltas += fmt::format("{:<16} {:<14} {:>2}  {:>+7.1f}pp {:>+7.1f}pp\n", std::get<0>(key),
                          std::get<1>(key), std::get<2>(key),
                          (pair.second->pass - pair.first->pass) * 100.0,
                          (pair.second->er - pair.first->er) * 100.0);
  }
  if (!deltas.empty()) {
    out += fmt::format("\npipeline vs vanilla\n{:<16} {:<14} {:>2}  {:>9} {:>9}\n", "app",
                       "device", "k", "Δpass@k", "Δer@k");
    out += deltas;
  }

  if (!m.cross_app.empty()) {
    out += fmt::format("\ncross-app averages\n{:<16} {:<14} {:<9} {:>2}  {:>3} {:>3}  {:>8} "
                       "{:>11} {:>8}\n",
                       "", "device", "arm", "k", "n", "c", "pass@k", "er@k^valid", "er@k");
    for (const auto& r : m.cross_app) {
      out += fmt::format("{:<16} ", "");
      out += fmt::format("{:<14} ", r.device_id);
      append_row(out, r, false);
    }
  }
  if (!m.cross_device.empty()) {
    out += fmt::format("\ncross-device averages\n{:<9} {:>2}  {:>3} {:>3}  {:>8} {:>11} {:>8}\n",
                       "arm", "k", "n", "c", "pass@k", "er@k^valid", "er@k");
    for (const auto& r : m.cross_device) append_row(out, r, false);
  }
  for (const auto& w : m.warnings) out += fmt::format("\nwarning: {}", w);
  if (!m.warnings.empty()) out += '\n';
  return out;
}

std::string metrics_csv(const MetricsResult& m) {
  std::string out = "app,device,arm,k,pass_at_k,er_at_k_valid,er_at_k,n,c,seed\n";
  auto emit = [&](const MetricsRow& r, const std::string& app, const std::string& dev) {
    out += fmt::format("{},{},{},{},{:.12g},{:.12g},{:.12g},{},{},{}\n", app, dev,
                       to_string(r.arm), r.k, r.pass, r.er_valid, r.er, r.n, r.c, m.seed);
  };
  for (const auto& r : m.rows) emit(r, r.app_id, r.device_id);
  for (const auto& r : m.cross_app) emit(r, "(cross-app)", r.device_id);
  for (const auto& r : m.cross_device) emit(r, "(cross-device)", "");
  return out;
}

}  // namespace ecoforge
