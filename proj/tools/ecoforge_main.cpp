// Command-line front end: run trials, aggregate metrics, summarize reports.
#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "ecoforge/cli.hpp"

using namespace ecoforge;

int main(int argc, char** argv) {
  CLI::App app{"GPU code energy-refactoring harness"};
  app.require_subcommand(1);

  cli::RunRequest run_req;
  std::string run_archive;
  CLI::App* run = app.add_subcommand("run", "run refactoring trials and archive them");
  run->add_option("--config", run_req.config_file, "run configuration file")->required();
  run->add_option("--app", run_req.app_filter, "only this app id");
  run->add_option("--device", run_req.device_filter, "only this device id");
  run->add_option("--trials", run_req.trials, "trials per selected app")->default_val(1);
  run->add_option("--archive", run_archive, "override the archive root");

  cli::MetricsRequest met_req;
  std::string met_mode = "exhaustive";
  std::string met_out;
  CLI::App* met = app.add_subcommand("metrics", "success and efficiency tables over an archive");
  met->add_option("--archive", met_req.archive_root, "archive root")->required();
  met->add_option("--k", met_req.k_list, "k values (repeat or comma separate)")
      ->delimiter(',');
  met->add_option("--mode", met_mode, "estimator: exhaustive or mc")
      ->check(CLI::IsMember({"exhaustive", "mc"}));
  met->add_option("--seed", met_req.seed, "Monte Carlo seed");
  met->add_option("--samples", met_req.mc_samples, "Monte Carlo draw count");
  met->add_option("--out", met_out, "directory for metrics.csv (default: archive root)");

  cli::ReportRequest rep_req;
  std::string rep_rules;
  CLI::App* rep = app.add_subcommand("report", "optimization taxonomy over archived reports");
  rep->add_option("--archive", rep_req.archive_root, "archive root")->required();
  rep->add_option("--rules", rep_rules, "category rules file (TSV)");
  rep->add_option("--top", rep_req.top_n, "how many frequent items to list")->default_val(10);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kExitConfig;
  }

  if (run->parsed()) {
    if (!run_archive.empty()) run_req.archive_override = run_archive;
    return cli::cmd_run(run_req, std::cout, std::cerr);
  }
  if (met->parsed()) {
    met_req.mode = met_mode == "mc" ? EstimatorMode::MonteCarlo : EstimatorMode::Exhaustive;
    if (!met_out.empty()) met_req.out_dir = met_out;
    return cli::cmd_metrics(met_req, std::cout, std::cerr);
  }
  if (!rep_rules.empty()) rep_req.rules_file = rep_rules;
  return cli::cmd_report(rep_req, std::cout, std::cerr);
}
