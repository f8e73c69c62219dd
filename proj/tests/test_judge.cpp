#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <string>
#include <vector>

#include "ecoforge/clock.hpp"
#include "ecoforge/judge.hpp"
#include "ecoforge/llm.hpp"

using namespace ecoforge;
namespace fs = std::filesystem;

namespace {

bool valid(const std::optional<Verdict>& v) {
  return v.has_value() && v->decision == VerdictDecision::Valid;
}
bool invalid(const std::optional<Verdict>& v) {
  return v.has_value() && v->decision == VerdictDecision::Invalid;
}

struct ScreenHarness {
  TemplateRegistry templates =
      TemplateRegistry::load_from_dir(fs::path(ECOFORGE_SOURCE_DIR) / "templates");
  MockLlmBackend backend;
  VirtualClock clock;
  CodeArtifact source{Dialect::Cuda, "__global__ void a() {}\n", CodeOrigin::Source, 0,
                      std::nullopt};
  CodeArtifact candidate{Dialect::Cuda, "__global__ void b() {}\n", CodeOrigin::Stage3, 1, 0.2};
  std::vector<LlmExchange> exchanges;

  ScreenOutcome run() {
    LlmGateway gateway(backend, RetryPolicy{}, clock);
    ScreenInputs in;
    in.source = &source;
    in.candidate = &candidate;
    in.source_stdout = "ok\n";
    in.candidate_stdout = "ok\n";
    in.source_energy = EnergyReport{200.0, 100.0, 2.0, 40.0};
    in.candidate_energy = EnergyReport{120.0, 100.0, 1.2, 40.0};
    return screen(in, gateway, ModelProfile{"judge", true}, templates, "system", "t.judge",
                  [this](LlmExchange ex) { exchanges.push_back(std::move(ex)); });
  }
};

}  // namespace

TEST_CASE("the wire form parses on its own") {
  CHECK(valid(parse_verdict("VERDICT: VALID")));
  CHECK(invalid(parse_verdict("VERDICT: INVALID")));
}

TEST_CASE("the last verdict line wins over earlier ones") {
  auto v = parse_verdict("VERDICT: INVALID\nOn reflection the outputs agree.\nVERDICT: VALID\n");
  CHECK(valid(v));
}

TEST_CASE("verdict lines are read case-insensitively with surrounding noise") {
  CHECK(valid(parse_verdict("some prose\n   verdict: valid   \n")));
  CHECK(invalid(parse_verdict("Verdict: Invalid")));
}

TEST_CASE("a bare standalone token is accepted as a fallback") {
  CHECK(valid(parse_verdict("The candidate is VALID because outputs match.")));
  CHECK(invalid(parse_verdict("INVALID. The numeric output drifted.")));
}

TEST_CASE("INVALID is never misread as VALID") {
  // "INVALID" contains "VALID" as a substring; word boundaries must win.
  CHECK(invalid(parse_verdict("This refactor is INVALID")));
  CHECK(invalid(parse_verdict("verdict: invalid despite similar output")));
}

TEST_CASE("lookalike words do not count as verdicts") {
  CHECK(!parse_verdict("the validation invalidated nothing").has_value());
  CHECK(!parse_verdict("validity is unclear").has_value());
  CHECK(!parse_verdict("").has_value());
  CHECK(!parse_verdict("no verdict given").has_value());
}

TEST_CASE("the rationale carries the whole trimmed reply") {
  auto v = parse_verdict("  Outputs agree byte for byte.\nVERDICT: VALID\n");
  REQUIRE(v.has_value());
  CHECK(v->rationale == "Outputs agree byte for byte.\nVERDICT: VALID");
}

TEST_CASE("screening accepts a direct verdict with zero reprompts") {
  ScreenHarness h;
  MockLlmBackend::Rule r;
  r.user_prompt_contains = {"screening a refactored"};
  r.reply = "Outputs match and energy dropped.\nVERDICT: VALID\n";
  h.backend.add_rule(r);

  ScreenOutcome out = h.run();
  CHECK(out.verdict.decision == VerdictDecision::Valid);
  CHECK(out.reprompts == 0);
  REQUIRE(h.exchanges.size() == 1);
  CHECK(h.exchanges[0].label == "t.judge");
  CHECK(!h.exchanges[0].temperature.has_value());
  CHECK(h.exchanges[0].user_prompt.find("__global__ void b()") != std::string::npos);
}

TEST_CASE("an unparseable reply earns one reprompt") {
  ScreenHarness h;
  MockLlmBackend::Rule vague;
  vague.user_prompt_contains = {"screening a refactored"};
  vague.reply = "Hard to say, the outputs look similar.";
  MockLlmBackend::Rule direct;
  direct.user_prompt_contains = {"did not state a verdict"};
  direct.reply = "VERDICT: INVALID";
  h.backend.add_rule(direct);
  h.backend.add_rule(vague);

  ScreenOutcome out = h.run();
  CHECK(out.verdict.decision == VerdictDecision::Invalid);
  CHECK(out.reprompts == 1);
  REQUIRE(h.exchanges.size() == 2);
  CHECK(h.exchanges[0].label == "t.judge");
  CHECK(h.exchanges[1].label == "t.judge.reprompt");
  CHECK(h.exchanges[1].user_prompt.find("single line") != std::string::npos);
}

TEST_CASE("two unparseable replies fall back to a conservative invalid") {
  ScreenHarness h;
  MockLlmBackend::Rule shrug;
  shrug.user_prompt_contains = {};  // matches everything
  shrug.reply = "I cannot commit to an answer.";
  h.backend.add_rule(shrug);

  ScreenOutcome out = h.run();
  CHECK(out.verdict.decision == VerdictDecision::Invalid);
  CHECK(out.reprompts == 1);
  CHECK(out.verdict.rationale.find("conservatively") != std::string::npos);
  CHECK(h.exchanges.size() == 2);
}
