#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ecoforge/types.hpp"

namespace ecoforge {

/// Unbiased probability that at least one of k draws (without replacement)
/// from n trials hits one of the c successes:
///   pass@k = 1 - C(n-c, k) / C(n, k),   with C(a, k) = 0 when a < k.
/// Throws DomainError outside 1 <= k <= n, 0 <= c <= n.
double pass_at_k(int n, int c, int k);

enum class EstimatorMode { Exhaustive, MonteCarlo };

struct McOptions {
  long samples = 100000;
  std::uint64_t seed = 0;
};

/// Expected best relative energy reduction among k screened candidates:
///   E[ max over the drawn subset of max(0, (E_src_mean - E_i) / E_src_mean) ].
/// `valid_energies` holds one representative energy per passing trial (c of
/// them). When 0 < c < k the subset is the whole valid set. Exhaustive mode
/// averages over every k-subset in closed form; MonteCarlo draws subsets
/// without replacement with a fixed seed. c = 0 yields 0 by convention.
/// Throws DomainError when k < 1, source mean <= 0, or any energy <= 0.
double er_at_k_valid(std::span<const double> valid_energies, double source_mean_energy_j, int k,
                     EstimatorMode mode, const McOptions& mc = {});

/// Overall expected reduction: the screening rate times the reduction
/// conditional on screening.
double er_at_k(double pass_k, double er_k_valid);

/// Which candidate population a metrics row describes.
enum class Arm { Vanilla, Pipeline };
std::string_view to_string(Arm a);

/// Per (app, device, arm) trial tallies feeding the estimators.
struct TrialOutcomeSet {
  std::string app_id;
  std::string device_id;
  Arm arm = Arm::Pipeline;
  int n = 0;                                  // trial count
  std::vector<double> source_energies_j;      // one per trial
  std::vector<double> valid_candidate_energies_j;  // one per passing trial (size == c)
  int c() const { return static_cast<int>(valid_candidate_energies_j.size()); }
  double source_mean_energy_j() const;
};

/// A trial passes for an arm when the arm produced at least one screened-valid
/// candidate; its representative energy is the lowest screened-valid energy.
/// The vanilla arm sees only the stage-1 candidate; the pipeline arm sees
/// stage-1 and stage-3 candidates together.
std::vector<TrialOutcomeSet> build_outcome_sets(const std::vector<TrialRecord>& trials);

struct MetricsRow {
  std::string app_id;
  std::string device_id;
  Arm arm = Arm::Pipeline;
  int k = 1;
  int n = 0;
  int c = 0;
  double pass = 0.0;
  double er_valid = 0.0;
  double er = 0.0;  // always pass * er_valid
};

struct MetricsOptions {
  std::vector<int> k_list{1, 3, 5};
  EstimatorMode mode = EstimatorMode::Exhaustive;
  McOptions mc;
};

struct MetricsResult {
  std::vector<MetricsRow> rows;        // per (app, device, arm, k)
  std::vector<MetricsRow> cross_app;   // per (device, arm, k), app_id empty
  std::vector<MetricsRow> cross_device;  // per (arm, k), app and device empty
  std::vector<std::string> warnings;   // e.g. an arm with no data
  EstimatorMode mode = EstimatorMode::Exhaustive;
  std::uint64_t seed = 0;
};

/// Full aggregation: outcome sets, then every metric for every k. k values
/// exceeding an arm's n are skipped with a warning rather than an error.
MetricsResult aggregate(const std::vector<TrialRecord>& trials, const MetricsOptions& opts);

/// Aligned text tables (percentages, one decimal) with pipeline-vs-vanilla
/// deltas in percentage points where both arms exist.
std::string format_metrics_tables(const MetricsResult& m);

/// Machine-readable dump: app, device, arm, k, pass_at_k, er_at_k_valid,
/// er_at_k, n, c, seed. Cross rows carry "(cross-app)" / "(cross-device)".
std::string metrics_csv(const MetricsResult& m);

/// "96.7%"-style rendering used by both emitters.
std::string format_percent(double fraction);

}  // namespace ecoforge
