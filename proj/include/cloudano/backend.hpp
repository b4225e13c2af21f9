#pragma once

// Text-completion backend interface shared by the agents, the benchmark
// log rewriter and the report polisher.

#include <cstdlib>
#include <optional>
#include <string>

#include "cloudano/core.hpp"

namespace cloudano {

enum class OutputSchema { hypothesis, assessment, verdict, rewrite };

template <>
struct EnumNames<OutputSchema> {
  static constexpr std::array<std::pair<OutputSchema, std::string_view>, 4> values{{
      {OutputSchema::hypothesis, "hypothesis"},
      {OutputSchema::assessment, "assessment"},
      {OutputSchema::verdict, "verdict"},
      {OutputSchema::rewrite, "rewrite"},
  }};
};

struct AgentPrompt {
  std::string system_text;
  std::string user_text;
  OutputSchema expected_schema = OutputSchema::hypothesis;
};

struct BackendConfig {
  std::string endpoint_url = "https://api.openai.com/v1/chat/completions";
  std::string model_name = "gpt-4o";
  std::string api_key_env = "CLOUDANO_API_KEY";
  int timeout_seconds = 60;
  int max_attempts = 3;
  std::optional<double> temperature;  // omitted from requests unless set
  int initial_backoff_ms = 500;

  void validate() const {
    if (endpoint_url.empty()) throw Error("backend config: endpoint_url is empty");
    if (model_name.empty()) throw Error("backend config: model_name is empty");
    if (timeout_seconds <= 0) throw Error("backend config: timeout_seconds must be positive");
    if (max_attempts < 1) throw Error("backend config: max_attempts must be at least 1");
    if (temperature && !(*temperature >= 0.0)) throw Error("backend config: temperature must be >= 0");
    if (initial_backoff_ms < 0) throw Error("backend config: initial_backoff_ms must be >= 0");
  }
};

enum class BackendErrorKind { transport, auth, timeout, missing_key };

template <>
struct EnumNames<BackendErrorKind> {
  static constexpr std::array<std::pair<BackendErrorKind, std::string_view>, 4> values{{
      {BackendErrorKind::transport, "transport"},
      {BackendErrorKind::auth, "auth"},
      {BackendErrorKind::timeout, "timeout"},
      {BackendErrorKind::missing_key, "missing_key"},
  }};
};

class BackendError : public Error {
 public:
  BackendError(BackendErrorKind kind, int attempts, const std::string& what)
      : Error(std::string(to_string(kind)) + " error after " + std::to_string(attempts) +
              (attempts == 1 ? " attempt: " : " attempts: ") + what),
        kind_(kind),
        attempts_(attempts) {}

  BackendErrorKind kind() const noexcept { return kind_; }
  int attempts() const noexcept { return attempts_; }

 private:
  BackendErrorKind kind_;
  int attempts_;
};

/// Implementations must tolerate concurrent calls from several workers.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string complete(const AgentPrompt& prompt) = 0;
};

}  // namespace cloudano
