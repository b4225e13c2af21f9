#include <gtest/gtest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include "cloudano/http_backend.hpp"
#include "cloudano/pipeline.hpp"
#include "cloudano/bench_gen.hpp"

using namespace cloudano;

namespace {

std::string chat_reply(const std::string& content) {
  return json{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}})}}.dump();
}

// A local chat-completion endpoint on an ephemeral port.
class LocalServer {
 public:
  explicit LocalServer(httplib::Server::Handler handler) {
    server_.Post("/v1/chat/completions", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

BackendConfig local_config(const std::string& url) {
  BackendConfig c;
  c.endpoint_url = url;
  c.model_name = "test-model";
  c.api_key_env = "CLOUDANO_TEST_KEY";
  c.timeout_seconds = 1;
  c.max_attempts = 3;
  c.initial_backoff_ms = 10;
  setenv("CLOUDANO_TEST_KEY", "sk-test", 1);
  return c;
}

const AgentPrompt kPrompt{"system text", "user text", OutputSchema::hypothesis};

TEST(Http, SuccessSendsModelMessagesAndKey) {
  std::string body, auth;
  LocalServer server([&](const httplib::Request& req, httplib::Response& res) {
    body = req.body;
    auth = req.get_header_value("Authorization");
    res.set_content(chat_reply("anomaly_detected: false\nfindings: none"), "application/json");
  });
  auto config = local_config(server.url());
  config.temperature = 0.0;
  HttpBackend backend(config);
  EXPECT_EQ(backend.complete(kPrompt), "anomaly_detected: false\nfindings: none");
  const auto j = json::parse(body);
  EXPECT_EQ(j["model"], "test-model");
  EXPECT_EQ(j["messages"][0]["role"], "system");
  EXPECT_EQ(j["messages"][0]["content"], "system text");
  EXPECT_EQ(j["messages"][1]["role"], "user");
  EXPECT_EQ(j["messages"][1]["content"], "user text");
  EXPECT_EQ(j["temperature"], 0.0);
  EXPECT_EQ(auth, "Bearer sk-test");
}

TEST(Http, TemperatureOmittedByDefault) {
  BackendConfig c;
  EXPECT_FALSE(json::parse(chat_request_body(c, kPrompt)).contains("temperature"));
}

TEST(Http, RetriesServerErrors) {
  std::atomic<int> calls{0};
  LocalServer server([&](const httplib::Request&, httplib::Response& res) {
    if (++calls == 1) {
      res.status = 500;
      return;
    }
    res.set_content(chat_reply("ok"), "application/json");
  });
  HttpBackend backend(local_config(server.url()));
  EXPECT_EQ(backend.complete(kPrompt), "ok");
  EXPECT_EQ(calls.load(), 2);
}

TEST(Http, GivesUpAfterMaxAttempts) {
  std::atomic<int> calls{0};
  LocalServer server([&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 503;
  });
  HttpBackend backend(local_config(server.url()));
  try {
    backend.complete(kPrompt);
    FAIL() << "expected BackendError";
  } catch (const BackendError& e) {
    EXPECT_EQ(e.kind(), BackendErrorKind::transport);
    EXPECT_EQ(e.attempts(), 3);
  }
  EXPECT_EQ(calls.load(), 3);
}

TEST(Http, AuthFailureIsNotRetried) {
  std::atomic<int> calls{0};
  LocalServer server([&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 401;
  });
  HttpBackend backend(local_config(server.url()));
  try {
    backend.complete(kPrompt);
    FAIL() << "expected BackendError";
  } catch (const BackendError& e) {
    EXPECT_EQ(e.kind(), BackendErrorKind::auth);
    EXPECT_EQ(e.attempts(), 1);
  }
  EXPECT_EQ(calls.load(), 1);
}

TEST(Http, SlowEndpointTimesOut) {
  LocalServer server([&](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1600));
    res.set_content(chat_reply("late"), "application/json");
  });
  auto config = local_config(server.url());
  config.max_attempts = 1;
  HttpBackend backend(config);
  try {
    backend.complete(kPrompt);
    FAIL() << "expected BackendError";
  } catch (const BackendError& e) {
    EXPECT_EQ(e.kind(), BackendErrorKind::timeout);
  }
}

TEST(Http, MissingKeyIsReportedByName) {
  auto config = local_config("http://127.0.0.1:9/v1/chat/completions");
  config.api_key_env = "CLOUDANO_TEST_KEY_UNSET";
  unsetenv("CLOUDANO_TEST_KEY_UNSET");
  try {
    HttpBackend backend(config);
    FAIL() << "expected BackendError";
  } catch (const BackendError& e) {
    EXPECT_EQ(e.kind(), BackendErrorKind::missing_key);
    EXPECT_NE(std::string(e.what()).find("CLOUDANO_TEST_KEY_UNSET"), std::string::npos);
  }
}

TEST(Http, UnreachableEndpointIsTransportError) {
  // A bound socket that never listens refuses every connection.
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  ASSERT_GE(fd, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ASSERT_EQ(::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr), 0);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  const int port = ntohs(addr.sin_port);
  auto config = local_config("http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions");
  config.max_attempts = 2;
  HttpBackend backend(config);
  try {
    backend.complete(kPrompt);
    FAIL() << "expected BackendError";
  } catch (const BackendError& e) {
    EXPECT_EQ(e.kind(), BackendErrorKind::transport);
    EXPECT_EQ(e.attempts(), 2);
  }
  ::close(fd);
}

TEST(Http, MalformedResponseBody) {
  LocalServer server([&](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"choices\": []}", "application/json");
  });
  HttpBackend backend(local_config(server.url()));
  EXPECT_THROW(backend.complete(kPrompt), BackendError);
}

TEST(Http, EndpointParsing) {
  const auto e = parse_endpoint("https://api.example.com:8443/v1/chat/completions");
  EXPECT_EQ(e.scheme_host_port, "https://api.example.com:8443");
  EXPECT_EQ(e.path, "/v1/chat/completions");
  EXPECT_EQ(parse_endpoint("http://localhost").path, "/");
  EXPECT_THROW(parse_endpoint("api.example.com/v1"), Error);
  EXPECT_THROW(parse_endpoint("ftp://host/x"), Error);
  EXPECT_THROW(parse_endpoint("http:///x"), Error);
}

TEST(Http, ResponseParsing) {
  EXPECT_EQ(chat_response_text(chat_reply("hi")), "hi");
  EXPECT_THROW(chat_response_text("not json"), Error);
  EXPECT_THROW(chat_response_text("{}"), Error);
  EXPECT_THROW(chat_response_text("{\"choices\": [{\"message\": {\"content\": 3}}]}"), Error);
}

TEST(Http, ConfigValidation) {
  auto c = local_config("http://127.0.0.1:9/x");
  c.max_attempts = 0;
  EXPECT_THROW(HttpBackend{c}, Error);
  c = local_config("http://127.0.0.1:9/x");
  c.temperature = -1.0;
  EXPECT_THROW(HttpBackend{c}, Error);
}

TEST(Http, PipelineRunsOverHttp) {
  // The endpoint replays canned answers keyed on the requested schema.
  LocalServer server([&](const httplib::Request& req, httplib::Response& res) {
    const auto user = json::parse(req.body)["messages"][1]["content"].get<std::string>();
    std::string reply;
    if (user.find("## logs") != std::string::npos)
      reply = "possibility: high\ncandidate_type: mine";
    else if (user.find("## log assessment") != std::string::npos)
      reply = "is_anomaly: true\nanomaly_type: mine\nexplanation: miner";
    else
      reply = "anomaly_detected: true\nfindings: cpu=spike";
    res.set_content(chat_reply(reply), "application/json");
  });
  HttpBackend backend(local_config(server.url()));
  const auto set = default_templates();
  Rng rng(2);
  const ScenarioTemplate* mine = nullptr;
  for (const auto& t : set.templates)
    if (t.id == "mine-cron-xmrig") mine = &t;
  ASSERT_NE(mine, nullptr);
  const auto c = gen_case(*mine, Difficulty::easy, rng, set, default_ruleset());
  const auto r = run_pipeline(c, backend, AgentContext{});
  EXPECT_EQ(r.hypothesis_source, AnswerSource::backend);
  EXPECT_EQ(r.final.verdict.anomaly_type, AnomalyType::mine);
  EXPECT_EQ(r.final.status, VerdictStatus::accepted);
}

}  // namespace
