#include "ecoforge/pipeline.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "ecoforge/errors.hpp"

namespace ecoforge {

void validate(const PipelineConfig& cfg) {
  if (cfg.max_stage3_iterations < 1) throw ConfigError("max_stage3_iterations must be >= 1");
  if (cfg.max_self_corrections < 1) throw ConfigError("max_self_corrections must be >= 1");
  if (cfg.fixed_unsuccessful_budget < 1)
    throw ConfigError("fixed_unsuccessful_budget must be >= 1");
  if (!(cfg.temperature_step > 0)) throw ConfigError("temperature_step must be > 0");
  if (cfg.temperature_initial > cfg.temperature_cap)
    throw ConfigError("temperature_initial must not exceed temperature_cap");
  if (cfg.temperature_initial < 0) throw ConfigError("temperature_initial must be >= 0");
}

TempDecision adapt_temperature(PipelineState& state, const PipelineConfig& cfg,
                               bool supports_temperature) {
  state.unsuccessful_streak += 1;
  if (supports_temperature) {
    // Rung arithmetic instead of accumulating doubles: 0.2 + 3*0.2 compares
    // cleanly against the cap where 0.2+0.2+0.2+0.2 would drift.
    double next =
        cfg.temperature_initial + static_cast<double>(state.temperature_rung + 1) * cfg.temperature_step;
    if (next > cfg.temperature_cap + 1e-9) return {true, 0.0};
    state.temperature_rung += 1;
    return {false, next};
  }
  if (state.unsuccessful_streak >= cfg.fixed_unsuccessful_budget) return {true, 0.0};
  return {false, 0.0};
}

TrialRunner::TrialRunner(TrialSetup setup, PipelineConfig cfg, TrialDeps deps)
    : setup_(std::move(setup)), cfg_(cfg), deps_(std::move(deps)) {
  validate(cfg_);
  validate(setup_.source);
  if (setup_.source.origin != CodeOrigin::Source)
    throw Error("trial setup must start from a Source artifact");
  if (!deps_.env || !deps_.gateway || !deps_.templates || !deps_.clock)
    throw Error("trial runner is missing a dependency");
  system_prompt_ = render_template(deps_.templates->get(TemplateId::SystemRole),
                                   {{"dialect", std::string(to_string(setup_.source.dialect))}});
  trial_start_s_ = deps_.clock->now_s();
  best_code_ = setup_.source;
}

std::string TrialRunner::ask(const std::string& label, TemplateId id,
                             const std::map<std::string, std::string>& slots,
                             std::optional<double> temperature) {
  std::optional<double> effective =
      deps_.generator.supports_temperature ? temperature : std::nullopt;
  std::string user = render_template(deps_.templates->get(id), slots);
  std::string reply = deps_.gateway->complete(deps_.generator, system_prompt_, user, effective);
  transcript_.push_back(LlmExchange{label, system_prompt_, user, effective, reply});
  return reply;
}

double TrialRunner::current_temperature() const {
  return cfg_.temperature_initial +
         static_cast<double>(state_.temperature_rung) * cfg_.temperature_step;
}

std::optional<double> TrialRunner::generation_temperature() const {
  if (!deps_.generator.supports_temperature) return std::nullopt;
  return current_temperature();
}

void TrialRunner::adopt_best(const CodeArtifact& code, double energy_j, BestRef ref) {
  best_code_ = code;
  best_energy_j_ = energy_j;
  best_ref_ = ref;
}

Verdict TrialRunner::screen_candidate(const CodeArtifact& candidate,
                                      const std::string& candidate_stdout,
                                      const EnergyReport& candidate_energy,
                                      const std::string& label) {
  ScreenInputs in;
  in.source = &setup_.source;
  in.candidate = &candidate;
  in.source_stdout = source_stdout_;
  in.candidate_stdout = candidate_stdout;
  in.source_energy = source_energy_;
  in.candidate_energy = candidate_energy;
  auto sink = [this](LlmExchange x) { transcript_.push_back(std::move(x)); };
  return screen(in, *deps_.gateway, deps_.judge, *deps_.templates, system_prompt_, label, sink)
      .verdict;
}

EnergyReport TrialRunner::stage0_profile() {
  CompileResult cr = deps_.env->compile_code(setup_.source);
  if (!cr.ok)
    throw SourceBuildFailed(fmt::format("source for app '{}' does not compile: {}",
                                        setup_.app_id, cr.diagnostics));
  auto [exec, profile] = deps_.env->run_measured(cr);
  if (!exec.ok)
    throw SourceExecFailed(fmt::format("source for app '{}' exited with {}: {}", setup_.app_id,
                                       exec.exit_code, exec.stderr_text));
  source_energy_ = compute_net_energy(profile);
  source_profile_ = std::move(profile);
  source_stdout_ = exec.stdout_text;
  best_code_ = setup_.source;
  best_energy_j_ = source_energy_.net_energy_j;
  best_ref_.reset();
  stage0_done_ = true;
  return source_energy_;
}

void TrialRunner::stage1_vanilla() {
  if (!stage0_done_) throw Error("stage 1 requires a completed stage 0");
  std::optional<double> temp = generation_temperature();
  std::string reply = ask("stage1.vanilla", TemplateId::VanillaZeroShot,
                          {{"dialect", std::string(to_string(setup_.source.dialect))},
                           {"source_code", setup_.source.source_text}},
                          temp);
  std::string text;
  try {
    text = extract_code_block(reply);
  } catch (const NoCodeBlock&) {
    return;  // unsuccessful attempt, nothing to record beyond the transcript
  }

  CandidateRecord rec;
  rec.code = CodeArtifact{setup_.source.dialect, text, CodeOrigin::Vanilla, 0, temp};

  CompileResult cr = deps_.env->compile_code(rec.code);
  rec.compile_ok = cr.ok;
  if (cr.ok) {
    auto [exec, profile] = deps_.env->run_measured(cr);
    if (exec.ok) {
      try {
        rec.energy = compute_net_energy(profile);
        rec.exec_ok = true;
        rec.profile = std::move(profile);
        rec.verdict = screen_candidate(rec.code, exec.stdout_text, *rec.energy, "stage1.judge");
        if (passed_screening(rec) && rec.energy->net_energy_j < best_energy_j_)
          adopt_best(rec.code, rec.energy->net_energy_j, BestRef{CodeOrigin::Vanilla, 0});
      } catch (const EmptyWindow&) {
        // ran but could not be measured: unusable as a candidate
        rec.exec_ok = false;
        rec.energy.reset();
      }
    }
  }
  vanilla_ = std::move(rec);
}

void TrialRunner::stage2_context() {
  if (!stage0_done_) throw Error("stage 2 requires a completed stage 0");
  const std::string dialect(to_string(setup_.source.dialect));

  std::string bundle;
  if (!setup_.doc_corpus.empty()) {
    std::string doc_summary =
        ask("stage2.doc_summary", TemplateId::DocSummary,
            {{"dialect", dialect}, {"documents", setup_.doc_corpus}}, std::nullopt);
    bundle = doc_summary + "\n\n";
  }
  std::string code_summary =
      ask("stage2.code_summary", TemplateId::CodeSummary,
          {{"dialect", dialect}, {"code", best_code_.source_text}}, std::nullopt);
  bundle += code_summary;
  state_.context_bundle = std::move(bundle);

  state_.active_plan = ask("stage2.plan", TemplateId::RefactorPlan,
                           {{"dialect", dialect},
                            {"context", state_.context_bundle},
                            {"code", best_code_.source_text}},
                           std::nullopt);
  plans_issued_ = 1;
}

SelfCorrectResult TrialRunner::self_correct(CodeArtifact code, int budget,
                                            const std::string& label_prefix) {
  if (budget < 1) throw Error("self_correct needs budget >= 1");
  SelfCorrectResult r;
  r.code = std::move(code);
  const std::string dialect(to_string(r.code.dialect));

  while (true) {
    r.compile = deps_.env->compile_code(r.code);
    TemplateId fix_template = TemplateId::SelfCorrectCompile;
    std::string diagnostics;
    if (r.compile.ok) {
      r.exec = deps_.env->run_plain(r.compile);
      if (r.exec->ok) return r;  // clean build and run
      fix_template = TemplateId::SelfCorrectRuntime;
      diagnostics = fmt::format("exit code {}\n{}", r.exec->exit_code, r.exec->stderr_text);
    } else {
      r.exec.reset();
      diagnostics = r.compile.diagnostics;
    }

    if (r.corrections >= budget) {
      r.exhausted = true;
      return r;
    }
    r.corrections += 1;
    std::string reply =
        ask(fmt::format("{}.{}", label_prefix, r.corrections), fix_template,
            {{"dialect", dialect}, {"code", r.code.source_text}, {"diagnostics", diagnostics}},
            generation_temperature());
    try {
      r.code.source_text = extract_code_block(reply);
      r.code.temperature_used = generation_temperature();
    } catch (const NoCodeBlock&) {
      // no code in the fix reply; re-attempt with the unchanged candidate
    }
  }
}

bool TrialRunner::stage3_iterate() {
  if (stopped_) return false;
  if (state_.active_plan.empty()) throw Error("stage 3 requires a plan from stage 2");
  if (state_.iterations_done >= cfg_.max_stage3_iterations) {
    stop_reason_ = StopReason::MaxIterations;
    stopped_ = true;
    return false;
  }
  state_.iterations_done += 1;
  const int iter = state_.iterations_done;
  const std::string dialect(to_string(setup_.source.dialect));
  std::optional<double> temp = generation_temperature();

  std::string reply = ask(fmt::format("stage3.iter{}.attempt", iter), TemplateId::RefactorAttempt,
                          {{"dialect", dialect},
                           {"context", state_.context_bundle},
                           {"plan", state_.active_plan},
                           {"code", best_code_.source_text}},
                          temp);
  std::string text;
  try {
    text = extract_code_block(reply);
  } catch (const NoCodeBlock&) {
    return true;  // iteration consumed; nothing to build
  }

  CodeArtifact attempt{setup_.source.dialect, text, CodeOrigin::Stage3, iter, temp};
  SelfCorrectResult fixed = self_correct(attempt, cfg_.max_self_corrections,
                                         fmt::format("stage3.iter{}.self_correct", iter));

  CandidateRecord rec;
  rec.code = fixed.code;
  rec.compile_ok = fixed.compile.ok;
  rec.exec_ok = fixed.exec.has_value() && fixed.exec->ok;
  rec.self_correction_count = fixed.corrections;
  if (fixed.exhausted || !rec.compile_ok || !rec.exec_ok) {
    rec.exec_ok = false;
    stage3_.push_back(std::move(rec));
    return true;  // never reached screening: no ladder step
  }

  auto [exec, profile] = deps_.env->run_measured(fixed.compile);
  if (!exec.ok) {
    rec.exec_ok = false;
    stage3_.push_back(std::move(rec));
    return true;
  }
  try {
    rec.energy = compute_net_energy(profile);
  } catch (const EmptyWindow&) {
    rec.exec_ok = false;
    stage3_.push_back(std::move(rec));
    return true;
  }
  rec.profile = std::move(profile);
  rec.verdict = screen_candidate(rec.code, exec.stdout_text, *rec.energy,
                                 fmt::format("stage3.iter{}.judge", iter));

  if (rec.verdict->decision == VerdictDecision::Invalid) {
    // Restart with the same plan; the ladder only reacts to screened
    // comparisons that failed to improve.
    stage3_.push_back(std::move(rec));
    return true;
  }

  const double e = rec.energy->net_energy_j;
  if (e < best_energy_j_) {
    const int index = static_cast<int>(stage3_.size());
    const CodeArtifact new_best = rec.code;
    stage3_.push_back(std::move(rec));
    adopt_best(new_best, e, BestRef{CodeOrigin::Stage3, index});
    state_.active_plan = ask(fmt::format("stage3.iter{}.plan", iter), TemplateId::RefactorPlan,
                             {{"dialect", dialect},
                              {"context", state_.context_bundle},
                              {"code", best_code_.source_text}},
                             std::nullopt);
    plans_issued_ += 1;
    if (cfg_.reset_temperature_on_improvement) state_.temperature_rung = 0;
    state_.unsuccessful_streak = 0;
    return true;
  }

  stage3_.push_back(std::move(rec));
  TempDecision decision = adapt_temperature(state_, cfg_, deps_.generator.supports_temperature);
  if (decision.stop) {
    stop_reason_ = deps_.generator.supports_temperature
                       ? StopReason::TemperatureExhausted
                       : StopReason::UnsuccessfulBudgetExhausted;
    stopped_ = true;
    return false;
  }
  return true;
}

TrialRecord TrialRunner::stage4_finalize() {
  if (!stage0_done_) throw Error("stage 4 requires a completed stage 0");
  std::optional<std::string> report;
  if (best_ref_) {
    const EnergyReport& best_energy =
        best_ref_->kind == CodeOrigin::Vanilla
            ? *vanilla_->energy
            : *stage3_[static_cast<std::size_t>(best_ref_->index)].energy;
    report = ask("stage4.comparison", TemplateId::FinalComparison,
                 {{"dialect", std::string(to_string(setup_.source.dialect))},
                  {"source_code", setup_.source.source_text},
                  {"best_code", best_code_.source_text},
                  {"source_energy", describe(source_energy_)},
                  {"best_energy", describe(best_energy)}},
                 std::nullopt);
  }

  TrialRecord t;
  t.app_id = setup_.app_id;
  t.device_id = setup_.device_id;
  t.source_energy = source_energy_;
  t.source_profile = source_profile_;
  t.vanilla = vanilla_;
  t.stage3_candidates = stage3_;
  t.best = best_ref_;
  t.comparison_report = std::move(report);
  t.stop_reason = stop_reason_;
  t.wall_time_s = deps_.clock->now_s() - trial_start_s_;
  t.plans_issued = plans_issued_;
  t.transcript = transcript_;
  validate(t);
  return t;
}

TrialRecord TrialRunner::run() {
  stage0_profile();
  stage1_vanilla();
  stage2_context();
  while (stage3_iterate()) {
  }
  return stage4_finalize();
}

std::string load_doc_corpus(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::exists(dir) || !fs::is_directory(dir)) return "";
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".txt")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::string corpus;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw IoError(fmt::format("cannot read doc excerpt {}", f.string()));
    std::stringstream buf;
    buf << in.rdbuf();
    if (!corpus.empty()) corpus += "\n\n";
    corpus += buf.str();
  }
  return corpus;
}

}  // namespace ecoforge
