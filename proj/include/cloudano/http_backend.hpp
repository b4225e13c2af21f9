#pragma once

// Chat-completion backend over HTTP(S). Define CPPHTTPLIB_OPENSSL_SUPPORT
// (and link OpenSSL) for https endpoints.

#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>

#include "cloudano/backend.hpp"
#include "cloudano/case_io.hpp"
#include "httplib.h"

namespace cloudano {

struct Endpoint {
  std::string scheme_host_port;  // e.g. https://api.example.com:443
  std::string path;
};

inline Endpoint parse_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error("endpoint url '" + url + "' has no scheme");
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw Error("endpoint url scheme must be http or https");
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint e;
  e.scheme_host_port = url.substr(0, path_start);
  e.path = path_start == std::string::npos ? "/" : url.substr(path_start);
  if (e.scheme_host_port.size() == scheme_end + 3) throw Error("endpoint url '" + url + "' has no host");
  return e;
}

inline std::string chat_request_body(const BackendConfig& config, const AgentPrompt& prompt) {
  ordered_json body;
  body["model"] = config.model_name;
  body["messages"] = ordered_json::array({
      {{"role", "system"}, {"content", prompt.system_text}},
      {{"role", "user"}, {"content", prompt.user_text}},
  });
  if (config.temperature) body["temperature"] = *config.temperature;
  return body.dump();
}

/// choices[0].message.content of a chat-completion response.
inline std::string chat_response_text(const std::string& body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error&) {
    throw Error("backend response is not JSON");
  }
  const auto choices = doc.find("choices");
  if (choices == doc.end() || !choices->is_array() || choices->empty()) throw Error("backend response has no choices");
  const auto& message = (*choices)[0].value("message", json::object());
  const auto content = message.find("content");
  if (content == message.end() || !content->is_string()) throw Error("backend response has no message content");
  return content->get<std::string>();
}

class HttpBackend : public Backend {
 public:
  /// Reads the API key from the configured environment variable.
  explicit HttpBackend(BackendConfig config) : config_(std::move(config)) {
    config_.validate();
    endpoint_ = parse_endpoint(config_.endpoint_url);
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (!key || !*key)
      throw BackendError(BackendErrorKind::missing_key, 0,
                         "environment variable " + config_.api_key_env + " is not set");
    api_key_ = key;
  }

  std::string complete(const AgentPrompt& prompt) override {
    const std::string body = chat_request_body(config_, prompt);
    const httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};
    BackendErrorKind last_kind = BackendErrorKind::transport;
    std::string last_error;
    for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
      if (attempt > 1) {
        const auto delay = static_cast<long long>(config_.initial_backoff_ms) << (attempt - 2);
        std::this_thread::sleep_for(std::chrono::milliseconds(delay));
      }
      httplib::Client client(endpoint_.scheme_host_port);
      client.set_connection_timeout(config_.timeout_seconds, 0);
      client.set_read_timeout(config_.timeout_seconds, 0);
      client.set_write_timeout(config_.timeout_seconds, 0);
      const auto started = std::chrono::steady_clock::now();
      auto res = client.Post(endpoint_.path, headers, body, "application/json");
      if (!res) {
        const auto elapsed = std::chrono::steady_clock::now() - started;
        const auto err = res.error();
        const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                               (err == httplib::Error::Read && elapsed >= std::chrono::seconds(config_.timeout_seconds));
        last_kind = timed_out ? BackendErrorKind::timeout : BackendErrorKind::transport;
        last_error = httplib::to_string(err);
        continue;
      }
      if (res->status == 401 || res->status == 403)
        throw BackendError(BackendErrorKind::auth, attempt, "endpoint rejected the credentials (HTTP " +
                                                                std::to_string(res->status) + ")");
      if (res->status == 429 || res->status >= 500) {
        last_kind = BackendErrorKind::transport;
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200)
        throw BackendError(BackendErrorKind::transport, attempt, "HTTP " + std::to_string(res->status));
      try {
        return chat_response_text(res->body);
      } catch (const Error& e) {
        throw BackendError(BackendErrorKind::transport, attempt, e.what());
      }
    }
    throw BackendError(last_kind, config_.max_attempts, last_error);
  }

 private:
  BackendConfig config_;
  Endpoint endpoint_;
  std::string api_key_;
};

}  // namespace cloudano
