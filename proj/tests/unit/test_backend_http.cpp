#include <gtest/gtest.h>

#include <httplib.h>

#include <atomic>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "support.hpp"
#include "xiqe/backend.hpp"
#include "xiqe/error.hpp"
#include "xiqe/orchestrator.hpp"

namespace xiqe {
namespace {

using json = nlohmann::json;
using testing::fake_png;

// In-process chat endpoint that records every request it receives.
class RecordingServer {
 public:
  using ChatHandler = std::function<void(const json&, httplib::Response&)>;

  explicit RecordingServer(std::string prefix = "") : prefix_(std::move(prefix)) {
    server_.Get(prefix_ + "/v1/capabilities", [this](const httplib::Request& req,
                                                     httplib::Response& res) {
      std::lock_guard lock(mutex_);
      ++capability_calls;
      auth_headers.push_back(req.get_header_value("Authorization"));
      res.status = caps_status;
      res.set_content(capabilities.dump(), "application/json");
    });
    server_.Post(prefix_ + "/v1/chat/completions", [this](const httplib::Request& req,
                                                          httplib::Response& res) {
      json body = json::parse(req.body);
      ChatHandler handler;
      {
        std::lock_guard lock(mutex_);
        requests.push_back(body);
        auth_headers.push_back(req.get_header_value("Authorization"));
        handler = on_chat;
      }
      if (handler) {
        handler(body, res);
      } else {
        reply(res, "Fidelity: 6/10");
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~RecordingServer() {
    server_.stop();
    thread_.join();
  }

  static void reply(httplib::Response& res, const std::string& text) {
    json body = {{"choices", json::array({{{"message", {{"role", "assistant"},
                                                        {"content", text}}}}})}};
    res.set_content(body.dump(), "application/json");
  }

  std::string endpoint() const {
    return "http://127.0.0.1:" + std::to_string(port_) + prefix_;
  }

  BackendDescriptor descriptor() const {
    BackendDescriptor d;
    d.kind = BackendKind::Http;
    d.endpoint = endpoint();
    d.model_name = "test-model";
    d.http.backoff_initial = std::chrono::milliseconds(0);
    return d;
  }

  std::vector<json> recorded() {
    std::lock_guard lock(mutex_);
    return requests;
  }

  json capabilities = json::object();
  int caps_status = 200;
  ChatHandler on_chat;
  std::vector<json> requests;
  std::vector<std::string> auth_headers;
  int capability_calls = 0;

 private:
  std::string prefix_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::mutex mutex_;
};

SessionConfig fast_config() {
  SessionConfig cfg;
  cfg.timeout = std::chrono::milliseconds(2000);
  return cfg;
}

template <typename F>
Errc error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return Errc::ParseError;
}

TEST(HttpBackend, TemperatureIsPassedThroughUnmodified) {
  RecordingServer server;
  HttpBackend backend(server.descriptor());
  auto cfg = fast_config();
  cfg.temperature = 0.37;
  cfg.max_reply_tokens = 321;
  auto session = backend.open_session(fake_png(), cfg, {"s", 0});
  EXPECT_EQ(session->send("hello"), "Fidelity: 6/10");
  const auto reqs = server.recorded();
  ASSERT_EQ(reqs.size(), 1u);
  EXPECT_EQ(reqs[0]["temperature"].get<double>(), 0.37);
  EXPECT_EQ(reqs[0]["max_tokens"], 321);
  EXPECT_EQ(reqs[0]["model"], "test-model");
}

TEST(HttpBackend, FirstMessageCarriesTheImageAsDataUri) {
  RecordingServer server;
  HttpBackend backend(server.descriptor());
  auto session = backend.open_session(fake_png(), fast_config(), {"s", 0});
  session->send("describe");
  const auto msg = server.recorded().at(0)["messages"].at(0);
  EXPECT_EQ(msg["role"], "user");
  ASSERT_TRUE(msg["content"].is_array());
  EXPECT_EQ(msg["content"][0]["type"], "text");
  EXPECT_EQ(msg["content"][0]["text"], "describe");
  EXPECT_EQ(msg["content"][1]["type"], "image_url");
  EXPECT_EQ(msg["content"][1]["image_url"]["url"], image_data_uri(fake_png()));
  EXPECT_EQ(image_data_uri(fake_png()).rfind("data:image/png;base64,", 0), 0u);
}

TEST(HttpBackend, ResendModeSendsFullHistory) {
  RecordingServer server;
  HttpBackend backend(server.descriptor());
  auto session = backend.open_session(fake_png(), fast_config(), {"s", 0});
  session->send("first");
  session->send("second");
  EXPECT_EQ(session->history().size(), 4u);
  const auto reqs = server.recorded();
  ASSERT_EQ(reqs.size(), 2u);
  const auto& msgs = reqs[1]["messages"];
  ASSERT_EQ(msgs.size(), 3u);
  EXPECT_TRUE(msgs[0]["content"].is_array());  // image stays on the first turn
  EXPECT_EQ(msgs[1]["role"], "assistant");
  EXPECT_EQ(msgs[1]["content"], "Fidelity: 6/10");
  EXPECT_EQ(msgs[2]["content"], "second");
  EXPECT_FALSE(reqs[1].contains("conversation_id"));
}

TEST(HttpBackend, IdModeSendsOnlyTheNewTurn) {
  RecordingServer server;
  server.capabilities = {{"history_mode", "id"}};
  HttpBackend backend(server.descriptor());
  auto session = backend.open_session(fake_png(), fast_config(), {"img-7", 2});
  session->send("first");
  session->send("second");
  const auto reqs = server.recorded();
  ASSERT_EQ(reqs.size(), 2u);
  for (const auto& r : reqs) {
    EXPECT_EQ(r["conversation_id"], "img-7#2");
    EXPECT_EQ(r["messages"].size(), 1u);
  }
  EXPECT_TRUE(reqs[0]["messages"][0]["content"].is_array());
  EXPECT_EQ(reqs[1]["messages"][0]["content"], "second");
  EXPECT_EQ(session->history().size(), 4u);
}

TEST(HttpBackend, DecodingWidthOnlyWhenAdvertised) {
  {
    RecordingServer server;
    HttpBackend backend(server.descriptor());
    auto cfg = fast_config();
    cfg.decoding_width = 3;
    backend.open_session(fake_png(), cfg, {"s", 0})->send("x");
    EXPECT_FALSE(server.recorded()[0].contains("decoding_width"));
  }
  {
    RecordingServer server;
    server.capabilities = {{"decoding_width", true}};
    HttpBackend backend(server.descriptor());
    auto cfg = fast_config();
    cfg.decoding_width = 3;
    backend.open_session(fake_png(), cfg, {"s", 0})->send("x");
    EXPECT_EQ(server.recorded()[0]["decoding_width"], 3);
  }
}

TEST(HttpBackend, MissingCapabilityEndpointMeansDefaults) {
  RecordingServer server;
  server.caps_status = 404;
  HttpBackend backend(server.descriptor());
  auto session = backend.open_session(fake_png(), fast_config(), {"s", 0});
  session->send("a");
  session->send("b");
  EXPECT_EQ(server.recorded()[1]["messages"].size(), 3u);
}

TEST(HttpBackend, BearerTokenIsSent) {
  RecordingServer server;
  auto desc = server.descriptor();
  desc.auth_token = "sekrit";
  HttpBackend backend(desc);
  backend.open_session(fake_png(), fast_config(), {"s", 0})->send("x");
  ASSERT_FALSE(server.auth_headers.empty());
  for (const auto& h : server.auth_headers) EXPECT_EQ(h, "Bearer sekrit");
}

TEST(HttpBackend, BadTokenIsAuthFailed) {
  RecordingServer server;
  server.caps_status = 401;
  HttpBackend backend(server.descriptor());
  EXPECT_EQ(error_of([&] { backend.open_session(fake_png(), fast_config(), {"s", 0}); }),
            Errc::AuthFailed);

  RecordingServer chat_denies;
  chat_denies.on_chat = [](const json&, httplib::Response& res) { res.status = 403; };
  HttpBackend backend2(chat_denies.descriptor());
  auto session = backend2.open_session(fake_png(), fast_config(), {"s", 0});
  EXPECT_EQ(error_of([&] { session->send("x"); }), Errc::AuthFailed);
}

TEST(HttpBackend, ErrorMapping) {
  struct Case {
    int status;
    std::string body;
    Errc expected;
  };
  const std::vector<Case> cases = {
      {400, R"({"error": {"code": "context_length_exceeded"}})", Errc::ContextOverflow},
      {413, R"({"error": {"code": "context_overflow"}})", Errc::ContextOverflow},
      {400, R"({"error": {"code": "image_rejected"}})", Errc::ImageRejected},
      {415, "", Errc::ImageRejected},
      {504, "", Errc::Timeout},
      {408, "", Errc::Timeout},
      {500, "boom", Errc::BackendError},
      {200, "not json", Errc::BackendError},
      {200, R"({"choices": []})", Errc::BackendError},
  };
  for (const auto& c : cases) {
    RecordingServer server;
    server.on_chat = [&](const json&, httplib::Response& res) {
      res.status = c.status;
      res.set_content(c.body, "application/json");
    };
    HttpBackend backend(server.descriptor());
    auto session = backend.open_session(fake_png(), fast_config(), {"s", 0});
    EXPECT_EQ(error_of([&] { session->send("x"); }), c.expected)
        << c.status << " " << c.body;
    EXPECT_TRUE(session->history().empty());
  }
}

TEST(HttpBackend, ContentPartsAreJoined) {
  RecordingServer server;
  server.on_chat = [](const json&, httplib::Response& res) {
    json body = {{"choices", json::array({{{"message",
                                            {{"content", json::array({
                                                             {{"type", "text"}, {"text", "Fidelity: "}},
                                                             {{"type", "text"}, {"text", "5/10"}},
                                                         })}}}}})}};
    res.set_content(body.dump(), "application/json");
  };
  HttpBackend backend(server.descriptor());
  EXPECT_EQ(backend.open_session(fake_png(), fast_config(), {"s", 0})->send("x"),
            "Fidelity: 5/10");
}

TEST(HttpBackend, TransportRetriesRecoverFromSlowResponses) {
  RecordingServer server;
  std::atomic<int> calls{0};
  server.on_chat = [&](const json&, httplib::Response& res) {
    if (calls.fetch_add(1) == 0) std::this_thread::sleep_for(std::chrono::milliseconds(600));
    RecordingServer::reply(res, "ok");
  };
  auto desc = server.descriptor();
  desc.http.transport_retries = 3;
  HttpBackend backend(desc);
  auto cfg = fast_config();
  cfg.timeout = std::chrono::milliseconds(200);
  auto session = backend.open_session(fake_png(), cfg, {"s", 0});
  EXPECT_EQ(session->send("x"), "ok");
  EXPECT_EQ(calls.load(), 2);
}

TEST(HttpBackend, TimeoutWithoutRetries) {
  RecordingServer server;
  server.on_chat = [&](const json&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(600));
    RecordingServer::reply(res, "late");
  };
  auto desc = server.descriptor();
  desc.http.transport_retries = 0;
  HttpBackend backend(desc);
  auto cfg = fast_config();
  cfg.timeout = std::chrono::milliseconds(200);
  auto session = backend.open_session(fake_png(), cfg, {"s", 0});
  EXPECT_EQ(error_of([&] { session->send("x"); }), Errc::Timeout);
}

TEST(HttpBackend, UnreachableEndpoint) {
  std::string endpoint;
  {
    RecordingServer server;
    endpoint = server.endpoint();
  }
  BackendDescriptor desc;
  desc.kind = BackendKind::Http;
  desc.endpoint = endpoint;
  desc.http.transport_retries = 2;
  desc.http.backoff_initial = std::chrono::milliseconds(0);
  HttpBackend backend(desc);
  EXPECT_EQ(error_of([&] { backend.open_session(fake_png(), fast_config(), {"s", 0}); }),
            Errc::BackendUnreachable);
}

TEST(HttpBackend, ImageLimits) {
  RecordingServer server;
  server.capabilities = {{"max_image_bytes", 10}};
  HttpBackend backend(server.descriptor());
  EXPECT_EQ(error_of([&] { backend.open_session(fake_png(), fast_config(), {"s", 0}); }),
            Errc::ImageRejected);
  EXPECT_EQ(error_of([&] { backend.open_session("", fast_config(), {"s", 0}); }),
            Errc::ImageRejected);
}

TEST(HttpBackend, EndpointPathPrefix) {
  RecordingServer server("/api");
  HttpBackend backend(server.descriptor());
  EXPECT_EQ(backend.open_session(fake_png(), fast_config(), {"s", 0})->send("x"),
            "Fidelity: 6/10");
  EXPECT_EQ(server.capability_calls, 1);
}

TEST(HttpBackend, DescriptorValidation) {
  BackendDescriptor d;
  d.kind = BackendKind::Http;
  EXPECT_THROW(HttpBackend{d}, Error);
  d.endpoint = "127.0.0.1:8000";
  EXPECT_THROW(HttpBackend{d}, Error);
}

TEST(Base64, KnownVectors) {
  EXPECT_EQ(base64_encode(""), "");
  EXPECT_EQ(base64_encode("f"), "Zg==");
  EXPECT_EQ(base64_encode("fo"), "Zm8=");
  EXPECT_EQ(base64_encode("foobar"), "Zm9vYmFy");
  EXPECT_EQ(sniff_image_mime("\xff\xd8\xff\xe0"), "image/jpeg");
}

// A chat endpoint in id mode whose replies come from the mock backend, one
// mock session per conversation id. Driving the harness against it must give
// the same records as using the mock directly.
TEST(HttpBackend, WireRoundTripMatchesDirectMock) {
  RecordingServer server;
  server.capabilities = {{"history_mode", "id"}};
  MockBackend mock;
  std::mutex m;
  std::map<std::string, std::unique_ptr<ChatSession>> sessions;
  server.on_chat = [&](const json& req, httplib::Response& res) {
    std::lock_guard lock(m);
    const auto id = req["conversation_id"].get<std::string>();
    const auto& msg = req["messages"][0];
    std::string text = msg["content"].is_array() ? msg["content"][0]["text"].get<std::string>()
                                                 : msg["content"].get<std::string>();
    auto& s = sessions[id];
    if (!s) {
      // The harness derives the mock seed from the sample; mirror it here.
      const auto hash = id.rfind('#');
      SessionConfig cfg;
      RunPlan plan;
      ImageSample sample;
      sample.id = id.substr(0, hash);
      cfg.seed = session_seed(plan, sample, std::stoi(id.substr(hash + 1)));
      s = mock.open_session(fake_png(), cfg, {sample.id, 0});
    }
    RecordingServer::reply(res, s->send(text));
  };

  auto samples = testing::synthetic_samples(4, {"m"});
  auto plan = testing::mock_plan(samples);
  plan.workers = 1;
  auto http_plan = plan;
  http_plan.backend = server.descriptor();
  HttpBackend http(http_plan.backend);
  for (const auto& sample : samples) {
    const auto direct = evaluate_image(sample, plan, mock);
    const auto wired = evaluate_image(sample, http_plan, http);
    for (auto task : kAllTasks) {
      ASSERT_TRUE(direct.task(task) && wired.task(task));
      EXPECT_EQ(direct.task(task)->outcome, wired.task(task)->outcome);
      EXPECT_EQ(direct.task(task)->transcript, wired.task(task)->transcript);
    }
  }
}

}  // namespace
}  // namespace xiqe
