#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ecoforge/archive.hpp"
#include "ecoforge/errors.hpp"
#include "ecoforge/types.hpp"

using namespace ecoforge;
namespace fs = std::filesystem;

namespace {

fs::path fresh_root(const char* tag) {
  fs::path root = fs::temp_directory_path() / (std::string("ecoforge-arch-") + tag);
  fs::remove_all(root);
  return root;
}

PowerProfile small_profile() {
  PowerProfile p;
  p.samples = {{0.0, 40.0}, {0.5, 40.0}, {1.0, 140.0}, {1.5, 140.0}, {2.0, 40.0}};
  p.idle_pre_w = 40.0;
  p.idle_post_w = 40.0;
  p.exec_start_t = 1.0;
  p.exec_end_t = 2.0;
  p.sample_interval_s = 0.5;
  return p;
}

CandidateRecord screened(double energy_j, int iteration, double temp) {
  CandidateRecord c;
  c.code = CodeArtifact{Dialect::Cuda, "// candidate " + std::to_string(iteration) + "\n",
                        CodeOrigin::Stage3, iteration, temp};
  c.compile_ok = true;
  c.exec_ok = true;
  c.self_correction_count = iteration == 2 ? 1 : 0;
  c.energy = EnergyReport{energy_j, energy_j / 2.0, 2.0, 40.0};
  c.verdict = Verdict{VerdictDecision::Valid, "outputs agree\nVERDICT: VALID"};
  c.profile = small_profile();
  return c;
}

TrialRecord rich_trial() {
  TrialRecord t;
  t.app_id = "demo-app";
  t.device_id = "a100";
  t.source_energy = EnergyReport{200.0, 100.0, 2.0, 40.0};
  t.source_profile = small_profile();

  CandidateRecord vanilla;
  vanilla.code = CodeArtifact{Dialect::Cuda, "// vanilla try\n", CodeOrigin::Vanilla, 0, 0.2};
  vanilla.compile_ok = true;
  vanilla.exec_ok = false;  // crashed before measurement
  t.vanilla = vanilla;

  t.stage3_candidates = {screened(120.0, 1, 0.2), screened(150.0, 2, 0.4)};

  CandidateRecord broken;
  broken.code = CodeArtifact{Dialect::Cuda, "// broken attempt\n", CodeOrigin::Stage3, 3, 0.6};
  broken.compile_ok = false;
  broken.self_correction_count = 6;
  t.stage3_candidates.push_back(broken);

  t.best = BestRef{CodeOrigin::Stage3, 0};
  t.comparison_report = "- fused the scale and add kernels\n- fewer kernel launches\n";
  t.stop_reason = StopReason::TemperatureExhausted;
  t.wall_time_s = 41.27;
  t.plans_issued = 2;
  t.transcript = {
      LlmExchange{"stage1.vanilla", "sys", "user prompt\nwith newline", 0.2, "reply ```code```"},
      LlmExchange{"stage1.judge", "sys", "judge prompt", std::nullopt, "VERDICT: VALID"},
  };
  return t;
}

}  // namespace

TEST_CASE("profile samples survive the text round trip") {
  PowerProfile p = small_profile();
  std::string text = serialize_profile_samples(p);
  auto parsed = parse_profile_samples(text);
  REQUIRE(parsed.size() == p.samples.size());
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    CHECK(parsed[i].t_s == p.samples[i].t_s);
    CHECK(parsed[i].power_w == p.samples[i].power_w);
  }
}

TEST_CASE("manifests serialize equal records to equal bytes") {
  TrialRecord a = rich_trial();
  TrialRecord b = rich_trial();
  CHECK(serialize_trial_manifest(a) == serialize_trial_manifest(b));
  b.wall_time_s += 1.0;
  CHECK(serialize_trial_manifest(a) != serialize_trial_manifest(b));
}

TEST_CASE("a persisted trial loads back equal") {
  fs::path root = fresh_root("roundtrip");
  TrialRecord t = rich_trial();
  fs::path dir = persist_trial(t, root);
  CHECK(dir.filename() == "trial-000");
  CHECK(fs::exists(dir / "manifest.jsonl"));
  CHECK(fs::exists(dir / "transcript.txt"));
  CHECK(fs::exists(dir / "profile-source.txt"));
  CHECK(fs::exists(dir / "candidate-0.src"));   // vanilla
  CHECK(fs::exists(dir / "candidate-1.src"));   // stage3 in order
  CHECK(fs::exists(dir / "profile-1.txt"));     // only measured candidates have one
  CHECK(!fs::exists(dir / "profile-0.txt"));

  LoadDiagnostics diag;
  auto loaded = load_trials(root, &diag);
  CHECK(diag.errors.empty());
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0] == t);
}

TEST_CASE("trial directories number from the next free index") {
  fs::path root = fresh_root("numbering");
  TrialRecord t = rich_trial();
  CHECK(persist_trial(t, root).filename() == "trial-000");
  CHECK(persist_trial(t, root).filename() == "trial-001");

  // A gap left by hand does not confuse the allocator: next is past the max.
  fs::create_directories(root / t.app_id / t.device_id / "trial-007");
  std::ofstream(root / t.app_id / t.device_id / "trial-007" / "manifest.jsonl")
      << serialize_trial_manifest(t);
  CHECK(persist_trial(t, root).filename() == "trial-008");
}

TEST_CASE("a failed persist leaves no trace and does not block the next one") {
  fs::path root = fresh_root("atomic");
  TrialRecord t = rich_trial();

  PersistHooks hooks;
  hooks.before_finalize = [] { throw IoError("injected failure before rename"); };
  CHECK_THROWS_AS(persist_trial(t, root, &hooks), IoError);

  fs::path device_dir = root / t.app_id / t.device_id;
  if (fs::exists(device_dir)) {
    for (const auto& entry : fs::directory_iterator(device_dir)) {
      INFO("unexpected residue: " << entry.path().string());
      CHECK(entry.path().filename().string().rfind("trial-", 0) != 0);
    }
  }

  fs::path dir = persist_trial(t, root);
  CHECK(dir.filename() == "trial-000");
  auto loaded = load_trials(root);
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0] == t);
}

TEST_CASE("corrupted trials are skipped with a diagnostic, not fatal") {
  fs::path root = fresh_root("corrupt");
  TrialRecord t = rich_trial();
  persist_trial(t, root);
  persist_trial(t, root);

  fs::path bad = root / t.app_id / t.device_id / "trial-000" / "manifest.jsonl";
  std::ofstream(bad) << "{ not json at all\n";

  LoadDiagnostics diag;
  auto loaded = load_trials(root, &diag);
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0] == t);
  REQUIRE(diag.errors.size() == 1);
  CHECK(diag.errors[0].find("trial-000") != std::string::npos);
}

TEST_CASE("loading a missing root yields an empty archive") {
  LoadDiagnostics diag;
  auto loaded = load_trials(fresh_root("missing"), &diag);
  CHECK(loaded.empty());
  CHECK(diag.errors.empty());
}

TEST_CASE("list items are pulled out of every common bullet form") {
  std::string report =
      "The refactor focused on three things.\n"
      "- fused adjacent kernels\n"
      "* moved constants into shared memory\n"
      "prose between items is ignored\n"
      "1. pinned the host staging buffer\n"
      "2) switched to single precision accumulation\n"
      "  - trimmed leading whitespace item\n";
  auto items = extract_optimizations(report);
  std::vector<std::string> want{
      "fused adjacent kernels",
      "moved constants into shared memory",
      "pinned the host staging buffer",
      "switched to single precision accumulation",
      "trimmed leading whitespace item",
  };
  CHECK(items == want);
  CHECK(extract_optimizations("no list at all").empty());
  CHECK(extract_optimizations("").empty());
}

TEST_CASE("category rules parse, match case-insensitively, first hit wins") {
  CategoryRules rules = CategoryRules::parse(
      "# comment line\n"
      "DST\tread-only data cache\n"
      "MHO\tshared memory\n"
      "ACE\tprecision\n"
      "PTM\tthread\n");
  CHECK(rules.size() == 4);
  CHECK(rules.categorize("Used Shared Memory tiles") == OptCategory::MHO);
  CHECK(rules.categorize("dropped to single PRECISION") == OptCategory::ACE);
  CHECK(rules.categorize("per-thread work increase") == OptCategory::PTM);
  CHECK(rules.categorize("nothing known") == OptCategory::Uncategorized);
  // First hit wins: the read-only cache wording routes to DST even though a
  // generic memory keyword appears later in the item.
  CHECK(rules.categorize("use the read-only data cache for shared memory loads") ==
        OptCategory::DST);
}

TEST_CASE("bad rule lines are config errors") {
  CHECK_THROWS_AS(CategoryRules::parse("XYZ\tkeyword\n"), ConfigError);
  CHECK_THROWS_AS(CategoryRules::parse("MHO no tab separator\n"), ConfigError);
  CHECK_THROWS_AS(CategoryRules::parse("MHO\t\n"), ConfigError);
}

TEST_CASE("the built-in ruleset matches the shipped rules file") {
  const CategoryRules& builtin = CategoryRules::builtin();
  CategoryRules from_disk =
      CategoryRules::from_file(fs::path(ECOFORGE_SOURCE_DIR) / "data/category_rules.tsv");
  CHECK(builtin.size() == from_disk.size());
  std::vector<std::string> probes{
      "use the read-only data cache",  "enable pinned memory transfers",
      "reduce kernel launch overhead", "coalesced access pattern",
      "thread coarsening",             "single precision arithmetic",
      "a phrase no rule knows",
  };
  for (const auto& p : probes) CHECK(builtin.categorize(p) == from_disk.categorize(p));
}

TEST_CASE("distributions count every category, zeros included") {
  CategoryRules rules = CategoryRules::parse(
      "MHO\tmemory\n"
      "ACE\tkernel\n"
      "PTM\tthread\n");
  std::vector<std::string> items{"memory pool", "kernel fusion", "memory again", "mystery"};
  CategoryDistribution dist = categorize_all(items, rules);
  CHECK(dist.total == 4);
  CHECK(dist.counts.at(OptCategory::MHO) == 2);
  CHECK(dist.counts.at(OptCategory::ACE) == 1);
  CHECK(dist.counts.at(OptCategory::PTM) == 0);
  CHECK(dist.counts.at(OptCategory::DST) == 0);
  CHECK(dist.counts.at(OptCategory::Uncategorized) == 1);
  CHECK(dist.percent(OptCategory::MHO) == doctest::Approx(50.0));
  CHECK(dist.percent(OptCategory::PTM) == doctest::Approx(0.0));

  double sum = 0.0;
  for (const auto& [cat, n] : dist.counts) sum += dist.percent(cat);
  CHECK(sum == doctest::Approx(100.0));

  CategoryDistribution empty = categorize_all({}, rules);
  CHECK(empty.total == 0);
  CHECK(empty.percent(OptCategory::MHO) == doctest::Approx(0.0));
}

TEST_CASE("category names render as their acronyms") {
  CHECK(to_string(OptCategory::MHO) == "MHO");
  CHECK(to_string(OptCategory::ACE) == "ACE");
  CHECK(to_string(OptCategory::DST) == "DST");
  CHECK(to_string(OptCategory::PTM) == "PTM");
  CHECK(to_string(OptCategory::Uncategorized) == "Uncategorized");
}
