#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "ecoforge/errors.hpp"
#include "ecoforge/metrics.hpp"
#include "ecoforge/types.hpp"

using namespace ecoforge;

namespace {

// Brute-force pass@k: enumerate every k-subset of n trials (the first c are
// the successes) and count subsets containing at least one success. Integer
// arithmetic throughout, so the oracle itself is exact.
double brute_pass_at_k(int n, int c, int k) {
  std::uint64_t total = 0, hit = 0;
  std::vector<int> pick(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) pick[static_cast<std::size_t>(i)] = i;
  while (true) {
    ++total;
    bool any = false;
    for (int v : pick)
      if (v < c) any = true;
    if (any) ++hit;
    int j = k - 1;
    while (j >= 0 && pick[static_cast<std::size_t>(j)] == n - k + j) --j;
    if (j < 0) break;
    ++pick[static_cast<std::size_t>(j)];
    for (int l = j + 1; l < k; ++l)
      pick[static_cast<std::size_t>(l)] = pick[static_cast<std::size_t>(l - 1)] + 1;
  }
  return static_cast<double>(hit) / static_cast<double>(total);
}

// Brute-force er@k^valid by subset enumeration over the reduction list.
double brute_er_valid(const std::vector<double>& energies, double source_mean, int k) {
  std::vector<double> r;
  for (double e : energies) r.push_back(std::max(0.0, (source_mean - e) / source_mean));
  int c = static_cast<int>(r.size());
  int kk = std::min(k, c);
  std::vector<int> pick(static_cast<std::size_t>(kk));
  for (int i = 0; i < kk; ++i) pick[static_cast<std::size_t>(i)] = i;
  double acc = 0.0;
  std::uint64_t total = 0;
  while (true) {
    double best = 0.0;
    for (int v : pick) best = std::max(best, r[static_cast<std::size_t>(v)]);
    acc += best;
    ++total;
    int j = kk - 1;
    while (j >= 0 && pick[static_cast<std::size_t>(j)] == c - kk + j) --j;
    if (j < 0) break;
    ++pick[static_cast<std::size_t>(j)];
    for (int l = j + 1; l < kk; ++l)
      pick[static_cast<std::size_t>(l)] = pick[static_cast<std::size_t>(l - 1)] + 1;
  }
  return acc / static_cast<double>(total);
}

CandidateRecord screened_candidate(CodeOrigin origin, int iter, double energy_j,
                                   VerdictDecision decision = VerdictDecision::Valid) {
  CandidateRecord c;
  c.code = CodeArtifact{Dialect::Cuda, "int main(){}\n", origin, iter, 0.2};
  c.compile_ok = true;
  c.exec_ok = true;
  c.energy = EnergyReport{energy_j, energy_j, 1.0, 40.0};
  c.verdict = Verdict{decision, "fixture"};
  return c;
}

TrialRecord basic_trial(const std::string& app, const std::string& device, double source_j) {
  TrialRecord t;
  t.app_id = app;
  t.device_id = device;
  t.source_energy = EnergyReport{source_j, source_j, 1.0, 40.0};
  t.stop_reason = StopReason::TemperatureExhausted;
  return t;
}

}  // namespace

TEST_CASE("pass@k matches subset enumeration for every n up to 12") {
  for (int n = 1; n <= 12; ++n)
    for (int c = 0; c <= n; ++c)
      for (int k = 1; k <= n; ++k) {
        CAPTURE(n);
        CAPTURE(c);
        CAPTURE(k);
        CHECK(pass_at_k(n, c, k) == doctest::Approx(brute_pass_at_k(n, c, k)).epsilon(1e-14));
      }
}

TEST_CASE("pass@k reproduces the published snapshot figure") {
  double p = pass_at_k(30, 29, 1);
  CHECK(p == doctest::Approx(29.0 / 30.0).epsilon(1e-15));
  CHECK(format_percent(p) == "96.7%");
}

TEST_CASE("pass@k edges and domain errors") {
  CHECK(pass_at_k(10, 0, 5) == 0.0);
  CHECK(pass_at_k(10, 10, 1) == 1.0);
  CHECK(pass_at_k(10, 7, 4) == 1.0);  // only 3 failures: k=4 must hit a success
  // Large n exercises the overflow-free product form.
  CHECK(pass_at_k(100000, 1, 1) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK_THROWS_AS(pass_at_k(10, 3, 0), DomainError);
  CHECK_THROWS_AS(pass_at_k(10, 3, 11), DomainError);
  CHECK_THROWS_AS(pass_at_k(10, -1, 1), DomainError);
  CHECK_THROWS_AS(pass_at_k(10, 11, 1), DomainError);
}

TEST_CASE("er@k^valid worked example lands on exactly one third") {
  std::vector<double> energies{60.0, 80.0, 120.0};
  double v = er_at_k_valid(energies, 100.0, 2, EstimatorMode::Exhaustive);
  CHECK(std::abs(v - 1.0 / 3.0) <= 1e-12);
}

TEST_CASE("er@k^valid exhaustive closed form matches subset enumeration") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> energy(30.0, 180.0);
  for (int c = 1; c <= 8; ++c)
    for (int rep = 0; rep < 4; ++rep) {
      std::vector<double> es;
      for (int i = 0; i < c; ++i) es.push_back(energy(rng));
      for (int k : {1, 2, 3, 5, 8}) {
        CAPTURE(c);
        CAPTURE(k);
        double got = er_at_k_valid(es, 100.0, k, EstimatorMode::Exhaustive);
        CHECK(got == doctest::Approx(brute_er_valid(es, 100.0, k)).epsilon(1e-12));
      }
    }
}

TEST_CASE("er@k^valid conventions and domain errors") {
  CHECK(er_at_k_valid({}, 100.0, 3, EstimatorMode::Exhaustive) == 0.0);
  // Worse-than-source candidates clamp to zero reduction, never negative.
  std::vector<double> worse{150.0, 210.0};
  CHECK(er_at_k_valid(worse, 100.0, 1, EstimatorMode::Exhaustive) == 0.0);
  // k >= c degenerates to the best element in both modes.
  std::vector<double> es{90.0, 70.0, 110.0};
  CHECK(er_at_k_valid(es, 100.0, 3, EstimatorMode::Exhaustive) == doctest::Approx(0.3));
  CHECK(er_at_k_valid(es, 100.0, 7, EstimatorMode::MonteCarlo) == doctest::Approx(0.3));
  CHECK_THROWS_AS(er_at_k_valid(es, 100.0, 0, EstimatorMode::Exhaustive), DomainError);
  CHECK_THROWS_AS(er_at_k_valid(es, 0.0, 1, EstimatorMode::Exhaustive), DomainError);
  std::vector<double> bad{50.0, -1.0};
  CHECK_THROWS_AS(er_at_k_valid(bad, 100.0, 1, EstimatorMode::Exhaustive), DomainError);
}

TEST_CASE("Monte Carlo estimator is seeded, deterministic, and close to exhaustive") {
  std::vector<double> es{55.0, 140.0, 82.0, 61.0, 99.0, 120.0, 45.0};
  McOptions mc;
  mc.samples = 100000;
  mc.seed = 42;
  for (int k : {1, 3, 5}) {
    double ex = er_at_k_valid(es, 100.0, k, EstimatorMode::Exhaustive);
    double m1 = er_at_k_valid(es, 100.0, k, EstimatorMode::MonteCarlo, mc);
    double m2 = er_at_k_valid(es, 100.0, k, EstimatorMode::MonteCarlo, mc);
    CHECK(m1 == m2);  // same seed, same estimate, bit for bit
    CHECK(std::abs(m1 - ex) < 0.005);
  }
  McOptions other = mc;
  other.seed = 43;
  CHECK(er_at_k_valid(es, 100.0, 3, EstimatorMode::MonteCarlo, other) !=
        er_at_k_valid(es, 100.0, 3, EstimatorMode::MonteCarlo, mc));
}

TEST_CASE("er@k is the product and never exceeds either factor") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    double p = u(rng), e = u(rng);
    double er = er_at_k(p, e);
    CHECK(er == p * e);
    CHECK(er <= std::min(p, e) + 1e-12);
  }
  CHECK_THROWS_AS(er_at_k(-0.1, 0.5), DomainError);
  CHECK_THROWS_AS(er_at_k(0.5, 1.1), DomainError);
}

TEST_CASE("outcome sets split the vanilla and pipeline arms correctly") {
  // Trial 1: vanilla passes at 90, stage-3 passes at 70 and (invalid) 50.
  TrialRecord t1 = basic_trial("app", "dev", 100.0);
  t1.vanilla = screened_candidate(CodeOrigin::Vanilla, 0, 90.0);
  t1.stage3_candidates.push_back(screened_candidate(CodeOrigin::Stage3, 1, 70.0));
  t1.stage3_candidates.push_back(
      screened_candidate(CodeOrigin::Stage3, 2, 50.0, VerdictDecision::Invalid));
  t1.best = BestRef{CodeOrigin::Stage3, 0};
  t1.comparison_report = "- tuned the launch configuration\n";

  // Trial 2: vanilla fails to compile, stage 3 never passes screening.
  TrialRecord t2 = basic_trial("app", "dev", 100.0);
  CandidateRecord broken;
  broken.code = CodeArtifact{Dialect::Cuda, "broken\n", CodeOrigin::Vanilla, 0, 0.2};
  broken.compile_ok = false;
  broken.exec_ok = false;
  t2.vanilla = broken;
  t2.stop_reason = StopReason::MaxIterations;

  auto sets = build_outcome_sets({t1, t2});
  REQUIRE(sets.size() == 2);
  auto arm = [&](Arm a) -> const TrialOutcomeSet& {
    for (const auto& s : sets)
      if (s.arm == a) return s;
    FAIL("missing arm");
    return sets.front();
  };

  const auto& van = arm(Arm::Vanilla);
  CHECK(van.n == 2);
  REQUIRE(van.c() == 1);
  CHECK(van.valid_candidate_energies_j[0] == 90.0);  // stage 3 excluded from this arm

  const auto& pipe = arm(Arm::Pipeline);
  CHECK(pipe.n == 2);
  REQUIRE(pipe.c() == 1);
  // The 50 J candidate was INVALID: the representative is the screened 70 J.
  CHECK(pipe.valid_candidate_energies_j[0] == 70.0);
  CHECK(pipe.source_mean_energy_j() == 100.0);
}

TEST_CASE("aggregate skips oversized k with a warning and keeps the identity") {
  std::vector<TrialRecord> trials;
  for (int i = 0; i < 3; ++i) {
    TrialRecord t = basic_trial("app", "dev", 200.0);
    t.vanilla = screened_candidate(CodeOrigin::Vanilla, 0, 150.0 + 10.0 * i);
    t.best = BestRef{CodeOrigin::Vanilla, 0};
    t.comparison_report = "- pinned the staging buffers\n";
    trials.push_back(t);
  }
  MetricsOptions opts;
  opts.k_list = {1, 3, 5};
  MetricsResult m = aggregate(trials, opts);
  CHECK(!m.warnings.empty());
  for (const auto& row : m.rows) {
    CHECK(row.k <= row.n);
    CHECK(row.er == doctest::Approx(row.pass * row.er_valid).epsilon(1e-12));
    CHECK(row.er <= std::min(row.pass, row.er_valid) + 1e-12);
  }
  // k in {1,3} survive for both arms; k=5 was skipped.
  CHECK(m.rows.size() == 4);

  // Cross rows average the per-app values and pool n and c.
  REQUIRE(!m.cross_device.empty());
  for (const auto& row : m.cross_device) {
    CHECK(row.n == 3);
    CHECK(row.c == 3);
  }
}

TEST_CASE("metrics csv carries one data row per table row") {
  TrialRecord t = basic_trial("app", "dev", 100.0);
  t.vanilla = screened_candidate(CodeOrigin::Vanilla, 0, 80.0);
  t.best = BestRef{CodeOrigin::Vanilla, 0};
  t.comparison_report = "- unrolled the loop\n";
  MetricsOptions opts;
  opts.k_list = {1};
  MetricsResult m = aggregate({t}, opts);
  std::string csv = metrics_csv(m);
  std::size_t lines = static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n'));
  CHECK(lines == 1 + m.rows.size() + m.cross_app.size() + m.cross_device.size());
  CHECK(csv.find("(cross-app)") != std::string::npos);
  CHECK(csv.find("(cross-device)") != std::string::npos);
}

TEST_CASE("format_percent rounds to one decimal") {
  CHECK(format_percent(0.9666666) == "96.7%");
  CHECK(format_percent(0.0) == "0.0%");
  CHECK(format_percent(1.0) == "100.0%");
  CHECK(format_percent(0.05) == "5.0%");
}
