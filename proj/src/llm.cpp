#include "ecoforge/llm.hpp"

#include <fmt/core.h>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "ecoforge/build_exec.hpp"
#include "ecoforge/errors.hpp"

// httplib is header-only and heavy; keep it out of our own headers.
#include <httplib.h>

namespace ecoforge {

namespace {

struct TemplateMeta {
  TemplateId id;
  std::string_view name;
  std::string_view stem;
  std::vector<std::string> slots;
};

const std::vector<TemplateMeta>& template_table() {
  static const std::vector<TemplateMeta> table = {
      {TemplateId::SystemRole, "SystemRole", "system_role", {"dialect"}},
      {TemplateId::VanillaZeroShot, "VanillaZeroShot", "vanilla_zero_shot",
       {"dialect", "source_code"}},
      {TemplateId::SelfCorrectCompile, "SelfCorrectCompile", "self_correct_compile",
       {"dialect", "code", "diagnostics"}},
      {TemplateId::SelfCorrectRuntime, "SelfCorrectRuntime", "self_correct_runtime",
       {"dialect", "code", "diagnostics"}},
      {TemplateId::DocSummary, "DocSummary", "doc_summary", {"dialect", "documents"}},
      {TemplateId::CodeSummary, "CodeSummary", "code_summary", {"dialect", "code"}},
      {TemplateId::RefactorPlan, "RefactorPlan", "refactor_plan",
       {"dialect", "context", "code"}},
      {TemplateId::RefactorAttempt, "RefactorAttempt", "refactor_attempt",
       {"dialect", "context", "plan", "code"}},
      {TemplateId::JudgeScreen, "JudgeScreen", "judge_screen",
       {"dialect", "source_code", "candidate_code", "source_stdout", "candidate_stdout",
        "source_energy", "candidate_energy"}},
      {TemplateId::FinalComparison, "FinalComparison", "final_comparison",
       {"dialect", "source_code", "best_code", "source_energy", "best_energy"}},
  };
  return table;
}

const TemplateMeta& meta_for(TemplateId id) {
  for (const auto& m : template_table())
    if (m.id == id) return m;
  throw Error("unknown TemplateId value");
}

bool is_slot_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
}

}  // namespace

std::string_view to_string(TemplateId id) { return meta_for(id).name; }
std::string_view template_file_stem(TemplateId id) { return meta_for(id).stem; }
const std::vector<std::string>& template_required_slots(TemplateId id) {
  return meta_for(id).slots;
}

std::vector<std::string> find_slot_markers(const std::string& body) {
  std::vector<std::string> found;
  std::size_t i = 0;
  while (i < body.size()) {
    if (body[i] != '{') {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < body.size() && is_slot_char(body[j])) ++j;
    if (j > i + 1 && j < body.size() && body[j] == '}') {
      std::string name = body.substr(i + 1, j - i - 1);
      if (std::find(found.begin(), found.end(), name) == found.end()) found.push_back(name);
      i = j + 1;
    } else {
      ++i;
    }
  }
  return found;
}

std::string render_template(const PromptTemplate& tpl,
                            const std::map<std::string, std::string>& slots) {
  for (const auto& required : tpl.required_slots)
    if (!slots.count(required)) throw MissingSlot(required);

  std::string out;
  out.reserve(tpl.body.size());
  std::size_t i = 0;
  while (i < tpl.body.size()) {
    if (tpl.body[i] != '{') {
      out += tpl.body[i++];
      continue;
    }
    std::size_t j = i + 1;
    while (j < tpl.body.size() && is_slot_char(tpl.body[j])) ++j;
    if (j > i + 1 && j < tpl.body.size() && tpl.body[j] == '}') {
      std::string name = tpl.body.substr(i + 1, j - i - 1);
      auto it = slots.find(name);
      if (it == slots.end()) throw MissingSlot(name);
      out += it->second;  // verbatim: no recursive expansion
      i = j + 1;
    } else {
      out += tpl.body[i++];
    }
  }
  return out;
}

TemplateRegistry TemplateRegistry::load_from_dir(const std::filesystem::path& dir) {
  TemplateRegistry reg;
  for (const auto& m : template_table()) {
    std::filesystem::path file = dir / (std::string(m.stem) + ".txt");
    std::ifstream in(file);
    if (!in)
      throw ConfigError(fmt::format("prompt template file missing: {}", file.string()));
    std::stringstream buf;
    buf << in.rdbuf();
    PromptTemplate tpl{m.id, buf.str(), m.slots};

    auto markers = find_slot_markers(tpl.body);
    auto sorted = [](std::vector<std::string> v) {
      std::sort(v.begin(), v.end());
      return v;
    };
    if (sorted(markers) != sorted(m.slots))
      throw ConfigError(fmt::format(
          "template {} drifted from its slot contract: file has [{}], expected [{}]",
          file.string(), fmt::join(markers, ", "), fmt::join(m.slots, ", ")));
    reg.templates_.emplace(m.id, std::move(tpl));
  }
  return reg;
}

const PromptTemplate& TemplateRegistry::get(TemplateId id) const {
  auto it = templates_.find(id);
  if (it == templates_.end())
    throw Error(fmt::format("template registry has no entry for {}", to_string(id)));
  return it->second;
}

std::uint64_t request_hash(const LlmRequest& req) {
  std::string blob = req.model_id;
  blob += '\x1f';
  blob += req.system_prompt;
  blob += '\x1f';
  blob += req.user_prompt;
  blob += '\x1f';
  blob += req.temperature ? fmt::format("{:.6f}", *req.temperature) : std::string("none");
  return content_hash(blob);
}

std::string extract_code_block(const std::string& completion) {
  // Scan fence lines; a fence opens a block, the next fence closes it. The
  // last complete block wins because models often restate code after prose.
  struct Block {
    std::size_t begin, end;
  };
  std::optional<Block> last;
  std::optional<std::size_t> open_at;  // offset just past the opening fence line
  std::size_t pos = 0;
  while (pos <= completion.size()) {
    std::size_t eol = completion.find('\n', pos);
    std::size_t end = (eol == std::string::npos) ? completion.size() : eol;
    std::string_view line(completion.data() + pos, end - pos);
    std::size_t first = line.find_first_not_of(" \t\r");
    if (first != std::string::npos && line.substr(first).rfind("```", 0) == 0) {
      if (!open_at) {
        open_at = (eol == std::string::npos) ? completion.size() : eol + 1;
      } else {
        last = Block{*open_at, pos};
        open_at.reset();
      }
    }
    if (eol == std::string::npos) break;
    pos = eol + 1;
  }
  if (!last) throw NoCodeBlock("completion contains no fenced code block");
  std::string code = completion.substr(last->begin, last->end - last->begin);
  // Trim one trailing newline left by the closing fence's preceding line break.
  if (!code.empty() && code.back() == '\n') code.pop_back();
  if (code.empty()) throw NoCodeBlock("fenced code block is empty");
  code += '\n';
  return code;
}

MockLlmBackend MockLlmBackend::from_file(const std::filesystem::path& script) {
  std::ifstream in(script);
  if (!in) throw ConfigError(fmt::format("cannot open mock LLM script {}", script.string()));
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("mock LLM script {} is not valid JSON: {}", script.string(),
                                  e.what()));
  }
  std::vector<Rule> rules;
  for (const auto& jr : doc.value("rules", nlohmann::json::array())) {
    Rule r;
    if (jr.contains("hash")) r.request_hash_hex = jr.at("hash").get<std::string>();
    if (jr.contains("contains"))
      r.user_prompt_contains = jr.at("contains").get<std::vector<std::string>>();
    if (jr.contains("temperature")) r.temperature = jr.at("temperature").get<double>();
    r.note = jr.value("note", "");
    if (jr.contains("reply_file")) {
      std::filesystem::path rf = script.parent_path() / jr.at("reply_file").get<std::string>();
      std::ifstream rin(rf);
      if (!rin)
        throw ConfigError(fmt::format("mock LLM reply file missing: {}", rf.string()));
      std::stringstream buf;
      buf << rin.rdbuf();
      r.reply = buf.str();
    } else if (jr.contains("reply")) {
      r.reply = jr.at("reply").get<std::string>();
    } else {
      throw ConfigError(
          fmt::format("mock LLM rule '{}' has neither reply nor reply_file", r.note));
    }
    rules.push_back(std::move(r));
  }
  return MockLlmBackend(std::move(rules));
}

std::string MockLlmBackend::complete(const LlmRequest& req) {
  for (const auto& r : rules_) {
    if (r.request_hash_hex &&
        *r.request_hash_hex != fmt::format("{:016x}", request_hash(req)))
      continue;
    if (r.temperature &&
        !(req.temperature && std::abs(*req.temperature - *r.temperature) < 1e-9))
      continue;
    bool all = true;
    for (const auto& needle : r.user_prompt_contains) {
      if (req.user_prompt.find(needle) == std::string::npos) {
        all = false;
        break;
      }
    }
    if (!all) continue;
    ++calls_served_;
    return r.reply;
  }
  throw MockScriptMiss(fmt::format(
      "mock LLM script has no rule for request (hash {:016x}, temperature {}, prompt head: {})",
      request_hash(req), req.temperature ? fmt::format("{:.2f}", *req.temperature) : "none",
      req.user_prompt.substr(0, 120)));
}

HttpLlmBackend::HttpLlmBackend(std::string base_url, std::string completions_path)
    : base_url_(std::move(base_url)), path_(std::move(completions_path)) {
  if (const char* key = std::getenv("ECOFORGE_LLM_KEY")) api_key_ = key;
}

std::string HttpLlmBackend::complete(const LlmRequest& req) {
  nlohmann::json body = {
      {"model", req.model_id},
      {"messages",
       {{{"role", "system"}, {"content", req.system_prompt}},
        {{"role", "user"}, {"content", req.user_prompt}}}},
  };
  if (req.temperature) body["temperature"] = *req.temperature;

  httplib::Client client(base_url_);
  client.set_read_timeout(300, 0);
  client.set_connection_timeout(10, 0);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  auto res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res)
    throw TransportError(fmt::format("llm endpoint unreachable: {}",
                                     httplib::to_string(res.error())));
  if (res->status == 400 || res->status == 413) {
    // Context-window overflows surface as 4xx with a telltale message.
    std::string low = res->body;
    for (auto& c : low) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (low.find("context") != std::string::npos || res->status == 413)
      throw ContextOverflow(fmt::format("request exceeds model context: {}", res->body));
  }
  if (res->status != 200)
    throw TransportError(fmt::format("llm endpoint returned {}: {}", res->status, res->body));

  try {
    nlohmann::json doc = nlohmann::json::parse(res->body);
    return doc.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(fmt::format("malformed completion payload: {}", e.what()));
  }
}

LlmGateway::LlmGateway(LlmBackend& backend, RetryPolicy policy, Clock& clock)
    : backend_(&backend), policy_(policy), clock_(&clock) {}

std::string LlmGateway::complete(const ModelProfile& model, const std::string& system_prompt,
                                 const std::string& user_prompt,
                                 std::optional<double> temperature) {
  LlmRequest req;
  req.model_id = model.model_id;
  req.system_prompt = system_prompt;
  req.user_prompt = user_prompt;
  req.temperature = model.supports_temperature ? temperature : std::nullopt;

  double backoff = policy_.initial_backoff_s;
  std::string last_error;
  for (int attempt = 1; attempt <= policy_.max_attempts; ++attempt) {
    ++attempts_issued_;
    try {
      std::string reply = backend_->complete(req);
      ++completions_served_;
      return reply;
    } catch (const ContextOverflow&) {
      throw;  // bigger context will not appear on retry
    } catch (const TransportError& e) {
      last_error = e.what();
      if (attempt < policy_.max_attempts) {
        clock_->sleep_s(backoff);
        backoff *= policy_.backoff_multiplier;
      }
    }
  }
  throw TransportError(fmt::format("llm call failed after {} attempts: {}",
                                   policy_.max_attempts, last_error));
}

}  // namespace ecoforge
