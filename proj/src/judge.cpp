#include "ecoforge/judge.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cctype>

#include "ecoforge/errors.hpp"

namespace ecoforge {

namespace {

std::string to_upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_word_char(unsigned char c) { return std::isalnum(c) != 0 || c == '_'; }

// First standalone occurrence of WORD (already upper-case) in upper-cased text.
std::optional<std::size_t> find_word(const std::string& upper, const std::string& word) {
  std::size_t at = 0;
  while ((at = upper.find(word, at)) != std::string::npos) {
    bool left_ok = at == 0 || !is_word_char(static_cast<unsigned char>(upper[at - 1]));
    std::size_t after = at + word.size();
    bool right_ok = after >= upper.size() || !is_word_char(static_cast<unsigned char>(upper[after]));
    if (left_ok && right_ok) return at;
    at += 1;
  }
  return std::nullopt;
}

}  // namespace

std::optional<Verdict> parse_verdict(const std::string& reply) {
  std::string rationale(trim(reply));

  // Pass 1: instructed wire format, last such line wins.
  std::optional<VerdictDecision> lined;
  std::size_t pos = 0;
  while (pos <= reply.size()) {
    std::size_t eol = reply.find('\n', pos);
    std::size_t end = (eol == std::string::npos) ? reply.size() : eol;
    std::string line = to_upper(trim(std::string_view(reply.data() + pos, end - pos)));
    if (line.rfind("VERDICT", 0) == 0) {
      std::string_view rest = trim(std::string_view(line).substr(7));
      if (!rest.empty() && rest.front() == ':') rest = trim(rest.substr(1));
      if (rest == "VALID") lined = VerdictDecision::Valid;
      if (rest == "INVALID") lined = VerdictDecision::Invalid;
    }
    if (eol == std::string::npos) break;
    pos = eol + 1;
  }
  if (lined) return Verdict{*lined, rationale};

  // Pass 2: first standalone token. INVALID is checked on its own word
  // boundaries, so its VALID suffix cannot match.
  std::string upper = to_upper(reply);
  auto invalid_at = find_word(upper, "INVALID");
  auto valid_at = find_word(upper, "VALID");
  if (invalid_at && (!valid_at || *invalid_at < *valid_at))
    return Verdict{VerdictDecision::Invalid, rationale};
  if (valid_at) return Verdict{VerdictDecision::Valid, rationale};
  return std::nullopt;
}

ScreenOutcome screen(const ScreenInputs& in, LlmGateway& gateway, const ModelProfile& judge_model,
                     const TemplateRegistry& templates, const std::string& system_prompt,
                     const std::string& label, const TranscriptSink& sink) {
  if (!in.source || !in.candidate) throw Error("screen: missing source or candidate artifact");

  std::map<std::string, std::string> slots = {
      {"dialect", std::string(to_string(in.source->dialect))},
      {"source_code", in.source->source_text},
      {"candidate_code", in.candidate->source_text},
      {"source_stdout", in.source_stdout},
      {"candidate_stdout", in.candidate_stdout},
      {"source_energy", describe(in.source_energy)},
      {"candidate_energy", describe(in.candidate_energy)},
  };
  std::string prompt = render_template(templates.get(TemplateId::JudgeScreen), slots);

  auto ask = [&](const std::string& user_prompt, const std::string& step_label) {
    // Judging is a deterministic screening step; no sampling temperature.
    std::string reply = gateway.complete(judge_model, system_prompt, user_prompt, std::nullopt);
    if (sink) sink(LlmExchange{step_label, system_prompt, user_prompt, std::nullopt, reply});
    return reply;
  };

  std::string reply = ask(prompt, label);
  if (auto v = parse_verdict(reply)) return {*v, 0};

  std::string reprompt =
      prompt + "\n\nYour previous reply did not state a verdict. Answer with a single line: "
               "VERDICT: VALID or VERDICT: INVALID.";
  reply = ask(reprompt, label + ".reprompt");
  if (auto v = parse_verdict(reply)) return {*v, 1};

  // Two unreadable replies: treat as a failed screen, never as approval.
  return {Verdict{VerdictDecision::Invalid,
                  "judge reply unparseable after one reprompt; conservatively invalid"},
          1};
}

}  // namespace ecoforge
