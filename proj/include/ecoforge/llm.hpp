#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ecoforge/clock.hpp"
#include "ecoforge/types.hpp"

namespace ecoforge {

/// The fixed set of prompts the pipeline speaks in.
enum class TemplateId {
  SystemRole,
  VanillaZeroShot,
  SelfCorrectCompile,
  SelfCorrectRuntime,
  DocSummary,
  CodeSummary,
  RefactorPlan,
  RefactorAttempt,
  JudgeScreen,
  FinalComparison,
};

std::string_view to_string(TemplateId id);
/// File stem each template is loaded from (e.g. "refactor_plan").
std::string_view template_file_stem(TemplateId id);
/// Slot names the template must expose, in no particular order.
const std::vector<std::string>& template_required_slots(TemplateId id);

struct PromptTemplate {
  TemplateId id = TemplateId::SystemRole;
  std::string body;
  std::vector<std::string> required_slots;
};

/// All {lower_snake_case} markers appearing in a body, deduplicated, in
/// first-appearance order.
std::vector<std::string> find_slot_markers(const std::string& body);

/// Single-pass marker substitution. Every required slot must have a value
/// (MissingSlot otherwise); values are inserted verbatim, so markers inside
/// slot values do not recurse. Unknown extra slots are ignored.
std::string render_template(const PromptTemplate& tpl,
                            const std::map<std::string, std::string>& slots);

/// Loads the ten templates from `<dir>/<stem>.txt` and checks each file's
/// markers against the required slot set. Throws ConfigError on drift.
class TemplateRegistry {
 public:
  static TemplateRegistry load_from_dir(const std::filesystem::path& dir);
  const PromptTemplate& get(TemplateId id) const;

 private:
  std::map<TemplateId, PromptTemplate> templates_;
};

/// Capability card for a model endpoint.
struct ModelProfile {
  std::string model_id;
  bool supports_temperature = true;
};

struct LlmRequest {
  std::string model_id;
  std::string system_prompt;
  std::string user_prompt;
  std::optional<double> temperature;
};

/// Stable identity of a request, for mock-script keying.
std::uint64_t request_hash(const LlmRequest& req);

/// Last fenced code block of a completion, fence lines and language tag
/// stripped. Throws NoCodeBlock when the reply has none.
std::string extract_code_block(const std::string& completion);

/// One model endpoint. Implementations throw TransportError for retryable
/// failures and ContextOverflow for oversized requests (not retryable).
class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  virtual std::string name() const = 0;
  virtual std::string complete(const LlmRequest& req) = 0;
};

/// Scripted backend: a list of match rules, first hit wins. A rule matches
/// when all of its present conditions hold: request hash, substring set over
/// the user prompt, exact temperature. Pure by construction; a request no
/// rule covers throws MockScriptMiss.
class MockLlmBackend final : public LlmBackend {
 public:
  struct Rule {
    std::optional<std::string> request_hash_hex;
    std::vector<std::string> user_prompt_contains;
    std::optional<double> temperature;
    std::string reply;
    std::string note;  // fixture documentation only
  };

  MockLlmBackend() = default;
  explicit MockLlmBackend(std::vector<Rule> rules) : rules_(std::move(rules)) {}
  /// JSON: {"rules": [{"contains": [...], "temperature": .., "hash": "..",
  /// "reply": ".." | "reply_file": "relative/path"}]}.
  static MockLlmBackend from_file(const std::filesystem::path& script);
  void add_rule(Rule r) { rules_.push_back(std::move(r)); }

  std::string name() const override { return "mock"; }
  std::string complete(const LlmRequest& req) override;
  int calls_served() const { return calls_served_; }

 private:
  std::vector<Rule> rules_;
  int calls_served_ = 0;
};

/// OpenAI-compatible chat-completions endpoint over HTTP. The bearer token is
/// read from the ECOFORGE_LLM_KEY environment variable at construction.
class HttpLlmBackend final : public LlmBackend {
 public:
  HttpLlmBackend(std::string base_url, std::string completions_path = "/v1/chat/completions");
  std::string name() const override { return "http"; }
  std::string complete(const LlmRequest& req) override;

 private:
  std::string base_url_;
  std::string path_;
  std::string api_key_;
};

struct RetryPolicy {
  int max_attempts = 3;
  double initial_backoff_s = 0.5;
  double backoff_multiplier = 2.0;
};

/// Front door for all completions: applies the model profile (drops the
/// temperature for models that lack it), retries transport failures with
/// exponential backoff, and counts calls. ContextOverflow passes through
/// untouched; retrying an oversized request cannot succeed.
class LlmGateway {
 public:
  LlmGateway(LlmBackend& backend, RetryPolicy policy, Clock& clock);

  std::string complete(const ModelProfile& model, const std::string& system_prompt,
                       const std::string& user_prompt, std::optional<double> temperature);

  /// Requests that reached the backend, including per-retry attempts.
  int attempts_issued() const { return attempts_issued_; }
  /// Logical completions returned to callers.
  int completions_served() const { return completions_served_; }

 private:
  LlmBackend* backend_;
  RetryPolicy policy_;
  Clock* clock_;
  int attempts_issued_ = 0;
  int completions_served_ = 0;
};

}  // namespace ecoforge
