#pragma once

#include <functional>
#include <optional>
#include <string>

#include "ecoforge/llm.hpp"
#include "ecoforge/types.hpp"

namespace ecoforge {

/// Pulls a verdict out of a judge reply. Deterministic and total: returns
/// nullopt when no verdict can be read.
///
/// Protocol, in priority order:
///  1. the last line of the form "VERDICT: VALID" / "VERDICT: INVALID"
///     (case-insensitive, surrounding whitespace ignored);
///  2. otherwise the first standalone VALID / INVALID token in the reply,
///     matched on word boundaries so INVALID never reads as VALID.
/// The rationale is the whole trimmed reply.
std::optional<Verdict> parse_verdict(const std::string& reply);

/// Everything the judge gets to see for one candidate.
struct ScreenInputs {
  const CodeArtifact* source = nullptr;
  const CodeArtifact* candidate = nullptr;
  std::string source_stdout;
  std::string candidate_stdout;
  EnergyReport source_energy;
  EnergyReport candidate_energy;
};

/// Sink for archiving prompt/reply exchanges as they happen.
using TranscriptSink = std::function<void(LlmExchange)>;

struct ScreenOutcome {
  Verdict verdict;
  int reprompts = 0;  // 0 or 1
};

/// Asks the judge model whether the candidate is a valid replacement. An
/// unparseable reply earns exactly one terse reprompt; if that also fails to
/// parse, the verdict is conservatively Invalid (never silently Valid).
ScreenOutcome screen(const ScreenInputs& in, LlmGateway& gateway, const ModelProfile& judge_model,
                     const TemplateRegistry& templates, const std::string& system_prompt,
                     const std::string& label, const TranscriptSink& sink);

}  // namespace ecoforge
