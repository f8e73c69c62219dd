#pragma once

#include <stdexcept>
#include <string>

namespace ecoforge {

/// Base class for all ecoforge errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Config file missing, malformed, or semantically invalid (unknown app, bad range).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Power backend cannot deliver a sample (tool missing, parse failure, negative reading).
class BackendUnavailable : public Error {
 public:
  using Error::Error;
};

/// Energy computation over a window that contains no samples.
class EmptyWindow : public Error {
 public:
  using Error::Error;
};

/// Configured compiler executable cannot be resolved at all.
class CompilerMissing : public Error {
 public:
  using Error::Error;
};

/// A prompt template slot had no value at render time.
class MissingSlot : public Error {
 public:
  explicit MissingSlot(const std::string& slot)
      : Error("prompt template slot has no value: {" + slot + "}"), slot_(slot) {}
  const std::string& slot() const { return slot_; }

 private:
  std::string slot_;
};

/// LLM transport failed after exhausting the retry budget.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Request exceeded the model's context window; retrying cannot help.
class ContextOverflow : public Error {
 public:
  using Error::Error;
};

/// A completion was expected to contain a fenced code block but has none.
class NoCodeBlock : public Error {
 public:
  using Error::Error;
};

/// Metric arguments outside the defined domain (k > n, c > n, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Archive I/O failure (unwritable root, unreadable manifest).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Trial aborted: the unmodified source failed to compile.
class SourceBuildFailed : public Error {
 public:
  using Error::Error;
};

/// Trial aborted: the unmodified source compiled but failed to execute.
class SourceExecFailed : public Error {
 public:
  using Error::Error;
};

/// A mock script has no entry for the request it was asked to answer.
/// Raised loudly instead of improvising a reply: fixtures must be total.
class MockScriptMiss : public Error {
 public:
  using Error::Error;
};

}  // namespace ecoforge
