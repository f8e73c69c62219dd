#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>

#include <httplib.h>

#include "ecoforge/clock.hpp"
#include "ecoforge/errors.hpp"
#include "ecoforge/llm.hpp"

using namespace ecoforge;
namespace fs = std::filesystem;

namespace {

PromptTemplate tpl(std::string body, std::vector<std::string> slots) {
  PromptTemplate t;
  t.id = TemplateId::VanillaZeroShot;
  t.body = std::move(body);
  t.required_slots = std::move(slots);
  return t;
}

fs::path scratch_dir(const char* tag) {
  fs::path dir = fs::temp_directory_path() / (std::string("ecoforge-llm-") + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void put_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

LlmRequest basic_request() {
  LlmRequest req;
  req.model_id = "m";
  req.system_prompt = "sys";
  req.user_prompt = "user";
  req.temperature = 0.4;
  return req;
}

}  // namespace

TEST_CASE("slot markers are collected once each, in order of first use") {
  auto markers = find_slot_markers("a {x} b {long_name} c {x} d {y}");
  std::vector<std::string> want{"x", "long_name", "y"};
  CHECK(markers == want);
}

TEST_CASE("marker scan ignores braces that are not lower_snake_case slots") {
  auto markers = find_slot_markers("int main() { return {code}; } {BAD} {with space} {}");
  std::vector<std::string> want{"code"};
  CHECK(markers == want);
}

TEST_CASE("rendering substitutes verbatim and does not recurse") {
  auto t = tpl("lang={dialect} body={code}", {"dialect", "code"});
  auto out = render_template(t, {{"dialect", "cuda"}, {"code", "use {dialect} here"}});
  CHECK(out == "lang=cuda body=use {dialect} here");
}

TEST_CASE("rendering rejects a missing slot and names it") {
  auto t = tpl("{dialect} {code}", {"dialect", "code"});
  try {
    render_template(t, {{"dialect", "cuda"}});
    FAIL("expected MissingSlot");
  } catch (const MissingSlot& e) {
    CHECK(e.slot() == "code");
  }
}

TEST_CASE("extra slot values are tolerated") {
  auto t = tpl("{dialect}", {"dialect"});
  CHECK(render_template(t, {{"dialect", "hip"}, {"unused", "x"}}) == "hip");
}

TEST_CASE("the shipped template set loads and exposes the documented slots") {
  auto reg = TemplateRegistry::load_from_dir(fs::path(ECOFORGE_SOURCE_DIR) / "templates");
  const auto& attempt = reg.get(TemplateId::RefactorAttempt);
  std::vector<std::string> want{"dialect", "context", "plan", "code"};
  auto markers = find_slot_markers(attempt.body);
  std::sort(markers.begin(), markers.end());
  auto sorted_want = want;
  std::sort(sorted_want.begin(), sorted_want.end());
  CHECK(markers == sorted_want);
  CHECK(reg.get(TemplateId::JudgeScreen).body.find("VERDICT:") != std::string::npos);
}

TEST_CASE("template drift is rejected at load time") {
  fs::path dir = scratch_dir("drift");
  // Copy the real set, then break one file's slot contract.
  for (const auto& entry : fs::directory_iterator(fs::path(ECOFORGE_SOURCE_DIR) / "templates"))
    fs::copy_file(entry.path(), dir / entry.path().filename());
  put_file(dir / "refactor_plan.txt", "plan for {dialect} only, code slot dropped");
  CHECK_THROWS_AS(TemplateRegistry::load_from_dir(dir), ConfigError);
}

TEST_CASE("a missing template file is rejected at load time") {
  fs::path dir = scratch_dir("hole");
  for (const auto& entry : fs::directory_iterator(fs::path(ECOFORGE_SOURCE_DIR) / "templates"))
    fs::copy_file(entry.path(), dir / entry.path().filename());
  fs::remove(dir / "judge_screen.txt");
  CHECK_THROWS_AS(TemplateRegistry::load_from_dir(dir), ConfigError);
}

TEST_CASE("code extraction takes the last fenced block and strips the tag") {
  std::string reply =
      "Plan first.\n```cpp\nint old() { return 0; }\n```\n"
      "Then the real one:\n```cuda\n__global__ void k() {}\n```\ndone\n";
  CHECK(extract_code_block(reply) == "__global__ void k() {}\n");
}

TEST_CASE("code extraction keeps interior fences intact") {
  std::string reply = "```\nline one\nline two\n```";
  CHECK(extract_code_block(reply) == "line one\nline two\n");
}

TEST_CASE("a reply without a code block raises NoCodeBlock") {
  CHECK_THROWS_AS(extract_code_block("no code here"), NoCodeBlock);
  CHECK_THROWS_AS(extract_code_block(""), NoCodeBlock);
}

TEST_CASE("an unterminated fence raises NoCodeBlock") {
  CHECK_THROWS_AS(extract_code_block("```cpp\nint main(){}"), NoCodeBlock);
}

TEST_CASE("request hashes separate every field") {
  LlmRequest a = basic_request();
  CHECK(request_hash(a) == request_hash(a));

  LlmRequest b = a;
  b.user_prompt = "other";
  CHECK(request_hash(a) != request_hash(b));

  LlmRequest c = a;
  c.model_id = "n";
  CHECK(request_hash(a) != request_hash(c));

  LlmRequest d = a;
  d.temperature = std::nullopt;
  CHECK(request_hash(a) != request_hash(d));
}

TEST_CASE("mock backend plays the first matching rule") {
  MockLlmBackend mock;
  MockLlmBackend::Rule broad;
  broad.user_prompt_contains = {"alpha"};
  broad.reply = "broad";
  MockLlmBackend::Rule narrow;
  narrow.user_prompt_contains = {"alpha", "beta"};
  narrow.reply = "narrow";
  mock.add_rule(narrow);
  mock.add_rule(broad);

  LlmRequest req = basic_request();
  req.user_prompt = "alpha beta gamma";
  CHECK(mock.complete(req) == "narrow");
  req.user_prompt = "alpha only";
  CHECK(mock.complete(req) == "broad");
  CHECK(mock.calls_served() == 2);
}

TEST_CASE("mock backend matches temperature within a hair") {
  MockLlmBackend mock;
  MockLlmBackend::Rule r;
  r.temperature = 0.4;
  r.reply = "warm";
  mock.add_rule(r);

  LlmRequest req = basic_request();
  req.temperature = 0.4 + 5e-10;
  CHECK(mock.complete(req) == "warm");
  req.temperature = 0.6;
  CHECK_THROWS_AS(mock.complete(req), MockScriptMiss);
  req.temperature = std::nullopt;
  CHECK_THROWS_AS(mock.complete(req), MockScriptMiss);
}

TEST_CASE("mock backend can pin an exact request hash") {
  LlmRequest req = basic_request();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(request_hash(req)));
  MockLlmBackend mock;
  MockLlmBackend::Rule pin;
  pin.request_hash_hex = std::string(buf);
  pin.reply = "pinned";
  mock.add_rule(pin);
  CHECK(mock.complete(req) == "pinned");

  LlmRequest other = req;
  other.user_prompt = "different";
  CHECK_THROWS_AS(mock.complete(other), MockScriptMiss);
}

TEST_CASE("mock backend is pure: identical requests give identical replies") {
  MockLlmBackend mock;
  MockLlmBackend::Rule r;
  r.user_prompt_contains = {"x"};
  r.reply = "same";
  mock.add_rule(r);
  LlmRequest req = basic_request();
  req.user_prompt = "x";
  std::string first = mock.complete(req);
  for (int i = 0; i < 5; ++i) CHECK(mock.complete(req) == first);
}

TEST_CASE("mock script files load rules with inline and file replies") {
  fs::path dir = scratch_dir("script");
  put_file(dir / "reply.md", "from file\n");
  put_file(dir / "script.json",
           "{\"rules\":[{\"contains\":[\"one\"],\"reply\":\"inline\"},"
           "{\"contains\":[\"two\"],\"temperature\":0.2,\"reply_file\":\"reply.md\"}]}");
  MockLlmBackend mock = MockLlmBackend::from_file(dir / "script.json");

  LlmRequest req = basic_request();
  req.user_prompt = "rule one fires";
  req.temperature = std::nullopt;
  CHECK(mock.complete(req) == "inline");

  req.user_prompt = "rule two fires";
  req.temperature = 0.2;
  CHECK(mock.complete(req) == "from file\n");
}

TEST_CASE("gateway retries transport failures with exponential backoff") {
  class FlakyBackend final : public LlmBackend {
   public:
    std::string name() const override { return "flaky"; }
    std::string complete(const LlmRequest&) override {
      if (++calls_ < 3) throw TransportError("connection reset");
      return "recovered";
    }
    int calls_ = 0;
  };

  FlakyBackend flaky;
  VirtualClock clock;
  LlmGateway gw(flaky, RetryPolicy{3, 0.5, 2.0}, clock);
  ModelProfile model{"m", true};
  CHECK(gw.complete(model, "s", "u", 0.2) == "recovered");
  CHECK(gw.attempts_issued() == 3);
  CHECK(gw.completions_served() == 1);
  // Two failures -> backoffs of 0.5 s and 1.0 s on the virtual timeline.
  CHECK(clock.now_s() == doctest::Approx(1.5));
}

TEST_CASE("gateway gives up after the attempt budget") {
  class DeadBackend final : public LlmBackend {
   public:
    std::string name() const override { return "dead"; }
    std::string complete(const LlmRequest&) override {
      ++calls_;
      throw TransportError("down");
    }
    int calls_ = 0;
  };

  DeadBackend dead;
  VirtualClock clock;
  LlmGateway gw(dead, RetryPolicy{3, 0.5, 2.0}, clock);
  ModelProfile model{"m", true};
  CHECK_THROWS_AS(gw.complete(model, "s", "u", 0.2), TransportError);
  CHECK(dead.calls_ == 3);
  CHECK(gw.attempts_issued() == 3);
  CHECK(gw.completions_served() == 0);
}

TEST_CASE("gateway passes context overflow through without retrying") {
  class OverflowBackend final : public LlmBackend {
   public:
    std::string name() const override { return "big"; }
    std::string complete(const LlmRequest&) override {
      ++calls_;
      throw ContextOverflow("too large");
    }
    int calls_ = 0;
  };

  OverflowBackend big;
  VirtualClock clock;
  LlmGateway gw(big, RetryPolicy{3, 0.5, 2.0}, clock);
  ModelProfile model{"m", true};
  CHECK_THROWS_AS(gw.complete(model, "s", "u", 0.2), ContextOverflow);
  CHECK(big.calls_ == 1);
  CHECK(clock.now_s() == doctest::Approx(0.0));
}

TEST_CASE("gateway strips the temperature for models that lack the knob") {
  class RecordingBackend final : public LlmBackend {
   public:
    std::string name() const override { return "rec"; }
    std::string complete(const LlmRequest& req) override {
      last_temperature = req.temperature;
      return "ok";
    }
    std::optional<double> last_temperature = 99.0;
  };

  RecordingBackend rec;
  VirtualClock clock;
  LlmGateway gw(rec, RetryPolicy{}, clock);

  gw.complete(ModelProfile{"fixed", false}, "s", "u", 0.8);
  CHECK(!rec.last_temperature.has_value());

  gw.complete(ModelProfile{"tunable", true}, "s", "u", 0.8);
  REQUIRE(rec.last_temperature.has_value());
  CHECK(*rec.last_temperature == doctest::Approx(0.8));
}

TEST_CASE("http backend speaks the chat completions wire format") {
  setenv("ECOFORGE_LLM_KEY", "sk-test-token", 1);

  httplib::Server server;
  std::string seen_auth;
  std::string seen_body;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    seen_body = req.body;
    if (req.body.find("\"overflow\"") != std::string::npos) {
      res.status = 413;
      res.set_content("{\"error\":{\"message\":\"context length exceeded\"}}", "application/json");
      return;
    }
    if (req.body.find("\"flaky\"") != std::string::npos) {
      res.status = 500;
      res.set_content("{\"error\":{\"message\":\"internal\"}}", "application/json");
      return;
    }
    res.set_content(
        "{\"choices\":[{\"message\":{\"role\":\"assistant\",\"content\":\"pong\"}}]}",
        "application/json");
  });

  int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpLlmBackend backend("http://127.0.0.1:" + std::to_string(port));

  LlmRequest req = basic_request();
  req.user_prompt = "ping";
  CHECK(backend.complete(req) == "pong");
  CHECK(seen_auth == "Bearer sk-test-token");
  CHECK(seen_body.find("\"temperature\":0.4") != std::string::npos);
  CHECK(seen_body.find("\"model\":\"m\"") != std::string::npos);

  LlmRequest no_temp = req;
  no_temp.temperature = std::nullopt;
  CHECK(backend.complete(no_temp) == "pong");
  CHECK(seen_body.find("temperature") == std::string::npos);

  LlmRequest overflow = req;
  overflow.user_prompt = "overflow";
  CHECK_THROWS_AS(backend.complete(overflow), ContextOverflow);

  LlmRequest flaky = req;
  flaky.user_prompt = "flaky";
  CHECK_THROWS_AS(backend.complete(flaky), TransportError);

  server.stop();
  worker.join();
}

TEST_CASE("http backend treats an unreachable host as a transport failure") {
  setenv("ECOFORGE_LLM_KEY", "sk-test-token", 1);
  HttpLlmBackend backend("http://127.0.0.1:9");  // discard port, nothing listens
  CHECK_THROWS_AS(backend.complete(basic_request()), TransportError);
}
