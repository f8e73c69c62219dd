#include "ecoforge/cli.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include "ecoforge/archive.hpp"
#include "ecoforge/errors.hpp"
#include "ecoforge/exec_env.hpp"
#include "ecoforge/pipeline.hpp"

namespace ecoforge::cli {

namespace fs = std::filesystem;

namespace {

/// Configuration-class failures exit 2, everything else is an environment
/// problem and exits 3. Mock script holes count as configuration: the script
/// is user-authored input.
int classify(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const MockScriptMiss*>(&e)) return kExitConfig;
  if (dynamic_cast<const MissingSlot*>(&e)) return kExitConfig;
  return kExitEnvironment;
}

std::string read_text_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot read {}", file.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string best_delta(const TrialRecord& rec) {
  if (!rec.best) return "none";
  const CandidateRecord& b = resolve_best(rec);
  double pct = (b.energy->net_energy_j / rec.source_energy.net_energy_j - 1.0) * 100.0;
  return fmt::format("{:.1f}%", pct);
}

std::string summary_line(const fs::path& dir, const TrialRecord& rec) {
  return fmt::format("{} app={} device={} best={} stop={} wall={:.1f}s",
                     dir.filename().string(), rec.app_id, rec.device_id, best_delta(rec),
                     to_string(rec.stop_reason), rec.wall_time_s);
}

}  // namespace

int cmd_run(const RunRequest& req, std::ostream& out, std::ostream& err) {
  try {
    if (req.trials < 1) throw ConfigError("--trials must be >= 1");
    RunConfig cfg = load_run_config(req.config_file);
    if (req.archive_override) cfg.archive_root = *req.archive_override;

    std::vector<AppSpec> selected;
    for (const AppSpec& a : cfg.apps) {
      if (!req.app_filter.empty() && a.id != req.app_filter) continue;
      if (!req.device_filter.empty() && a.device_id != req.device_filter) continue;
      selected.push_back(a);
    }
    if (selected.empty())
      throw ConfigError(fmt::format("no configured app matches app='{}' device='{}'",
                                    req.app_filter, req.device_filter));
    for (const AppSpec& a : selected) {
      if (cfg.toolchain_kind == ToolchainKind::Cuda && a.dialect != Dialect::Cuda)
        throw ConfigError(fmt::format("app {} is not cuda but the toolchain is", a.id));
      if (cfg.toolchain_kind == ToolchainKind::Hip && a.dialect != Dialect::Hip)
        throw ConfigError(fmt::format("app {} is not hip but the toolchain is", a.id));
    }

    TemplateRegistry templates = TemplateRegistry::load_from_dir(cfg.templates_dir);

    // Live backends are shared across trials; mock parts are rebuilt per
    // trial so every trial starts from the same scripted state.
    std::unique_ptr<PowerBackend> live_power;
    switch (cfg.power_kind) {
      case PowerKind::Mock:
        break;
      case PowerKind::NvidiaSmi:
        live_power = make_nvidia_smi_backend();
        break;
      case PowerKind::RocmSmi:
        live_power = make_rocm_smi_backend();
        break;
      case PowerKind::Trace:
        live_power = std::make_unique<SyntheticBackend>(
            SyntheticTrace::from_file(cfg.power_trace), steady_clock());
        break;
      case PowerKind::Replay:
        live_power = std::make_unique<ReplayBackend>(ReplayBackend::from_transcript_file(
            cfg.power_transcript, &parse_nvidia_smi_power));
        break;
    }
    std::unique_ptr<LlmBackend> http_llm;
    if (cfg.llm_kind == LlmKind::Http)
      http_llm = std::make_unique<HttpLlmBackend>(cfg.llm_base_url);

    int persisted = 0;
    int failures = 0;
    int failure_code = kExitEnvironment;
    for (const AppSpec& app : selected) {
      std::string source_text = read_text_file(app.source_path);
      std::string docs =
          cfg.docs_dir.empty() ? std::string{} : load_doc_corpus(cfg.docs_dir / app.id);
      for (int t = 0; t < req.trials; ++t) {
        try {
          VirtualClock vclock;
          Clock* clock = nullptr;
          std::unique_ptr<ExecutionEnv> env;
          if (cfg.toolchain_kind == ToolchainKind::Mock) {
            clock = &vclock;
            env = std::make_unique<MockEnv>(MockToolchain::from_file(cfg.toolchain_script),
                                            cfg.idle_power_w, cfg.profile, vclock);
          } else {
            clock = &steady_clock();
            env = std::make_unique<LiveEnv>(cfg.toolchain, *live_power, cfg.profile,
                                            cfg.workdir, app.args, *clock);
          }
          std::optional<MockLlmBackend> mock_llm;
          LlmBackend* llm = http_llm.get();
          if (cfg.llm_kind == LlmKind::Mock) {
            mock_llm = MockLlmBackend::from_file(cfg.llm_script);
            llm = &*mock_llm;
          }
          LlmGateway gateway(*llm, cfg.retry, *clock);

          TrialSetup setup;
          setup.app_id = app.id;
          setup.device_id = app.device_id;
          setup.source =
              CodeArtifact{app.dialect, source_text, CodeOrigin::Source, 0, std::nullopt};
          setup.doc_corpus = docs;

          TrialDeps deps;
          deps.env = env.get();
          deps.gateway = &gateway;
          deps.templates = &templates;
          deps.generator = cfg.generator;
          deps.judge = cfg.judge;
          deps.clock = clock;

          TrialRunner runner(std::move(setup), cfg.pipeline, deps);
          TrialRecord rec = runner.run();
          fs::path dir = persist_trial(rec, cfg.archive_root);
          ++persisted;
          out << summary_line(dir, rec) << "\n";
        } catch (const std::exception& e) {
          if (failures == 0) failure_code = classify(e);
          ++failures;
          err << fmt::format("trial {}/{} failed for app={} device={}: {}\n", t + 1,
                             req.trials, app.id, app.device_id, e.what());
        }
      }
    }
    if (failures > 0) {
      err << fmt::format("{} of {} trials failed; {} persisted under {}\n", failures,
                         failures + persisted, persisted, cfg.archive_root.string());
      return failure_code;
    }
    if (persisted == 0) {
      err << "no trials were persisted\n";
      return kExitEnvironment;
    }
    return kExitOk;
  } catch (const std::exception& e) {
    err << fmt::format("run: {}\n", e.what());
    return classify(e);
  }
}

int cmd_metrics(const MetricsRequest& req, std::ostream& out, std::ostream& err) {
  try {
    if (req.k_list.empty()) throw ConfigError("--k needs at least one value");
    for (int k : req.k_list)
      if (k < 1) throw ConfigError("--k values must be >= 1");
    if (req.mc_samples < 1) throw ConfigError("--samples must be >= 1");

    LoadDiagnostics diag;
    std::vector<TrialRecord> trials = load_trials(req.archive_root, &diag);
    for (const std::string& m : diag.errors) err << "warning: " << m << "\n";
    if (trials.empty()) {
      err << fmt::format("no trials under {}\n", req.archive_root.string());
      return kExitEmptyInput;
    }

    MetricsOptions opts;
    opts.k_list = req.k_list;
    opts.mode = req.mode;
    opts.mc.samples = req.mc_samples;
    opts.mc.seed = req.seed;
    MetricsResult m = aggregate(trials, opts);
    for (const std::string& w : m.warnings) err << "warning: " << w << "\n";
    out << format_metrics_tables(m);

    fs::path dir = req.out_dir.value_or(req.archive_root);
    fs::create_directories(dir);
    fs::path csv = dir / "metrics.csv";
    std::ofstream f(csv, std::ios::binary | std::ios::trunc);
    f << metrics_csv(m);
    f.flush();
    if (!f) throw IoError(fmt::format("cannot write {}", csv.string()));
    out << fmt::format("wrote {}\n", csv.string());
    return kExitOk;
  } catch (const std::exception& e) {
    err << fmt::format("metrics: {}\n", e.what());
    return classify(e);
  }
}

namespace {

void print_distribution(std::ostream& out, const std::string& heading,
                        const CategoryDistribution& dist) {
  out << fmt::format("{} ({} items)\n", heading, dist.total);
  for (OptCategory c : {OptCategory::MHO, OptCategory::ACE, OptCategory::DST, OptCategory::PTM,
                        OptCategory::Uncategorized}) {
    out << fmt::format("  {:<14} {:>4}  {:>5.1f}%\n", to_string(c), dist.counts.at(c),
                       dist.percent(c));
  }
  out << "\n";
}

}  // namespace

int cmd_report(const ReportRequest& req, std::ostream& out, std::ostream& err) {
  try {
    if (req.top_n < 1) throw ConfigError("--top must be >= 1");
    CategoryRules rules =
        req.rules_file ? CategoryRules::from_file(*req.rules_file) : CategoryRules::builtin();

    LoadDiagnostics diag;
    std::vector<TrialRecord> trials = load_trials(req.archive_root, &diag);
    for (const std::string& m : diag.errors) err << "warning: " << m << "\n";
    if (trials.empty()) {
      err << fmt::format("no trials under {}\n", req.archive_root.string());
      return kExitEmptyInput;
    }

    int reports = 0;
    std::vector<std::string> all_items;
    std::map<std::string, std::vector<std::string>> by_device;
    for (const TrialRecord& t : trials) {
      if (!t.comparison_report) continue;
      ++reports;
      std::vector<std::string> items = extract_optimizations(*t.comparison_report);
      all_items.insert(all_items.end(), items.begin(), items.end());
      std::vector<std::string>& d = by_device[t.device_id];
      d.insert(d.end(), items.begin(), items.end());
    }
    if (reports == 0) {
      err << "the archive holds no comparison reports yet\n";
      return kExitEmptyInput;
    }

    out << fmt::format("optimizations named across {} comparison reports\n\n", reports);
    print_distribution(out, "overall", categorize_all(all_items, rules));
    for (const auto& [device, items] : by_device)
      print_distribution(out, fmt::format("device {}", device), categorize_all(items, rules));

    std::map<std::string, int> freq;
    for (const std::string& item : all_items) ++freq[item];
    std::vector<std::pair<std::string, int>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    std::size_t shown = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(req.top_n));
    out << fmt::format("top {} items\n", shown);
    for (std::size_t i = 0; i < shown; ++i)
      out << fmt::format("  {:>3}x {}\n", ranked[i].second, ranked[i].first);
    return kExitOk;
  } catch (const std::exception& e) {
    err << fmt::format("report: {}\n", e.what());
    return classify(e);
  }
}

}  // namespace ecoforge::cli
