#include "ecoforge/types.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cctype>

#include "ecoforge/errors.hpp"

namespace ecoforge {

std::string_view to_string(Dialect d) {
  switch (d) {
    case Dialect::Cuda: return "cuda";
    case Dialect::Hip: return "hip";
  }
  throw Error("unknown Dialect value");
}

std::string_view to_string(CodeOrigin o) {
  switch (o) {
    case CodeOrigin::Source: return "source";
    case CodeOrigin::Vanilla: return "vanilla";
    case CodeOrigin::Stage3: return "stage3";
  }
  throw Error("unknown CodeOrigin value");
}

std::string_view to_string(VerdictDecision v) {
  switch (v) {
    case VerdictDecision::Valid: return "valid";
    case VerdictDecision::Invalid: return "invalid";
  }
  throw Error("unknown VerdictDecision value");
}

std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::TemperatureExhausted: return "temperature_exhausted";
    case StopReason::MaxIterations: return "max_iterations";
    case StopReason::UnsuccessfulBudgetExhausted: return "unsuccessful_budget_exhausted";
  }
  throw Error("unknown StopReason value");
}

Dialect dialect_from_string(std::string_view s) {
  if (s == "cuda") return Dialect::Cuda;
  if (s == "hip") return Dialect::Hip;
  throw ConfigError(fmt::format("unknown dialect '{}' (expected cuda or hip)", s));
}

CodeOrigin code_origin_from_string(std::string_view s) {
  if (s == "source") return CodeOrigin::Source;
  if (s == "vanilla") return CodeOrigin::Vanilla;
  if (s == "stage3") return CodeOrigin::Stage3;
  throw ConfigError(fmt::format("unknown code origin '{}'", s));
}

VerdictDecision verdict_from_string(std::string_view s) {
  if (s == "valid") return VerdictDecision::Valid;
  if (s == "invalid") return VerdictDecision::Invalid;
  throw ConfigError(fmt::format("unknown verdict '{}'", s));
}

StopReason stop_reason_from_string(std::string_view s) {
  if (s == "temperature_exhausted") return StopReason::TemperatureExhausted;
  if (s == "max_iterations") return StopReason::MaxIterations;
  if (s == "unsuccessful_budget_exhausted") return StopReason::UnsuccessfulBudgetExhausted;
  throw ConfigError(fmt::format("unknown stop reason '{}'", s));
}

int lines_of_code(const std::string& source_text) {
  int count = 0;
  std::size_t pos = 0;
  while (pos <= source_text.size()) {
    std::size_t eol = source_text.find('\n', pos);
    std::size_t end = (eol == std::string::npos) ? source_text.size() : eol;
    bool blank = std::all_of(source_text.begin() + static_cast<long>(pos),
                             source_text.begin() + static_cast<long>(end),
                             [](unsigned char ch) { return std::isspace(ch); });
    if (end > pos && !blank) ++count;
    if (eol == std::string::npos) break;
    pos = eol + 1;
  }
  return count;
}

void validate(const CodeArtifact& a) {
  if (a.source_text.empty()) throw Error("code artifact has empty source text");
  if (a.origin != CodeOrigin::Stage3 && a.iteration_index != 0)
    throw Error("iteration_index must be 0 outside stage 3");
  if (a.origin == CodeOrigin::Stage3 && a.iteration_index < 1)
    throw Error("stage-3 artifact needs a 1-based iteration_index");
  if (a.origin == CodeOrigin::Source && a.temperature_used.has_value())
    throw Error("source artifact cannot carry a sampling temperature");
}

std::string describe(const EnergyReport& e) {
  return fmt::format("net energy {:.4f} J over {:.4f} s (mean net power {:.2f} W)",
                     e.net_energy_j, e.runtime_s, e.mean_net_power_w);
}

bool passed_screening(const CandidateRecord& c) {
  return c.compile_ok && c.exec_ok && c.verdict.has_value() &&
         c.verdict->decision == VerdictDecision::Valid;
}

void validate(const CandidateRecord& c) {
  validate(c.code);
  if (c.code.origin == CodeOrigin::Source)
    throw Error("candidate record cannot wrap the unmodified source");
  if (c.energy.has_value() != (c.compile_ok && c.exec_ok))
    throw Error("candidate energy must be present exactly when it compiled and executed");
  if (c.verdict.has_value() && !c.energy.has_value())
    throw Error("candidate verdict without a measured energy");
  if (c.self_correction_count < 0) throw Error("negative self_correction_count");
  if (c.energy && c.energy->net_energy_j < 0) throw Error("negative candidate energy");
}

const CandidateRecord& resolve_best(const TrialRecord& t) {
  if (!t.best) throw Error("trial has no best candidate");
  if (t.best->kind == CodeOrigin::Vanilla) {
    if (!t.vanilla) throw Error("best ref names a vanilla candidate that is absent");
    return *t.vanilla;
  }
  if (t.best->kind != CodeOrigin::Stage3) throw Error("best ref cannot name the source");
  if (t.best->index < 0 || t.best->index >= static_cast<int>(t.stage3_candidates.size()))
    throw Error(fmt::format("best ref index {} outside stage-3 candidate list", t.best->index));
  return t.stage3_candidates[static_cast<std::size_t>(t.best->index)];
}

void validate(const TrialRecord& t) {
  if (t.app_id.empty() || t.device_id.empty()) throw Error("trial missing app or device id");
  if (t.source_energy.net_energy_j < 0) throw Error("negative source energy");
  if (t.vanilla) {
    validate(*t.vanilla);
    if (t.vanilla->code.origin != CodeOrigin::Vanilla)
      throw Error("vanilla slot holds a non-vanilla artifact");
  }
  for (const auto& c : t.stage3_candidates) {
    validate(c);
    if (c.code.origin != CodeOrigin::Stage3)
      throw Error("stage-3 list holds a non-stage-3 artifact");
  }
  if (t.best.has_value() != t.comparison_report.has_value())
    throw Error("comparison report must be present exactly when a best exists");
  if (t.best) {
    const CandidateRecord& b = resolve_best(t);
    if (!passed_screening(b)) throw Error("best candidate did not pass screening");
    if (!(b.energy->net_energy_j < t.source_energy.net_energy_j))
      throw Error("best candidate does not beat the source energy");
  }
  if (t.plans_issued < 0) throw Error("negative plans_issued");
  if (t.wall_time_s < 0) throw Error("negative wall time");
}

}  // namespace ecoforge
