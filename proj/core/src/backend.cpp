#include "xiqe/backend.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "xiqe/assets.hpp"
#include "xiqe/error.hpp"

namespace xiqe {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Shared

void SessionConfig::validate() const {
  if (!(temperature >= kMinTemperature && temperature <= kMaxTemperature)) {
    throw Error(Errc::InvalidConfig, "temperature must lie in [0.01, 1.0]");
  }
  if (decoding_width < 1) {
    throw Error(Errc::InvalidConfig, "decoding_width must be >= 1");
  }
  if (max_reply_tokens < 1) {
    throw Error(Errc::InvalidConfig, "max_reply_tokens must be >= 1");
  }
  if (timeout.count() <= 0) {
    throw Error(Errc::InvalidConfig, "timeout must be positive");
  }
}

std::string_view to_string(BackendKind kind) noexcept {
  return kind == BackendKind::Http ? "http" : "mock";
}

void BackendDescriptor::validate() const {
  if (kind == BackendKind::Http && endpoint.empty()) {
    throw Error(Errc::InvalidConfig, "http backend requires an endpoint");
  }
  if (kind == BackendKind::Mock && !endpoint.empty()) {
    throw Error(Errc::InvalidConfig, "mock backend takes no endpoint");
  }
  if (http.transport_retries < 0) {
    throw Error(Errc::InvalidConfig, "transport_retries must be >= 0");
  }
}

std::string SessionContext::conversation_id() const {
  return sample_id + "#" + std::to_string(repeat_index);
}

std::string ChatSession::send(std::string_view prompt) {
  const bool first = history_.empty();
  std::string reply = exchange(prompt);
  history_.push_back({Role::User, std::string(prompt), first});
  history_.push_back({Role::Assistant, reply, false});
  return reply;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2) + b;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t hash_string(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string_view sniff_image_mime(std::string_view b) {
  auto starts = [&](std::string_view magic) {
    return b.substr(0, magic.size()) == magic;
  };
  if (starts("\x89PNG\r\n\x1a\n")) return "image/png";
  if (starts("\xff\xd8\xff")) return "image/jpeg";
  if (starts("GIF87a") || starts("GIF89a")) return "image/gif";
  if (starts("RIFF") && b.size() >= 12 && b.substr(8, 4) == "WEBP") {
    return "image/webp";
  }
  if (starts("BM")) return "image/bmp";
  return "application/octet-stream";
}

std::string image_data_uri(std::string_view bytes) {
  return "data:" + std::string(sniff_image_mime(bytes)) + ";base64," +
         base64_encode(bytes);
}

// ---------------------------------------------------------------------------
// HTTP

namespace {

struct Endpoint {
  std::string origin;     // scheme://host[:port]
  std::string base_path;  // without trailing slash
  std::string chat_path;
  std::string caps_path;
};

Endpoint split_endpoint(const std::string& uri) {
  const auto scheme = uri.find("://");
  if (scheme == std::string::npos) {
    throw Error(Errc::InvalidConfig, "endpoint must include a scheme: " + uri);
  }
  const auto slash = uri.find('/', scheme + 3);
  Endpoint ep;
  ep.origin = uri.substr(0, slash);
  ep.base_path = slash == std::string::npos ? "" : uri.substr(slash);
  while (!ep.base_path.empty() && ep.base_path.back() == '/') {
    ep.base_path.pop_back();
  }
  constexpr std::string_view kChat = "/chat/completions";
  if (ep.base_path.size() >= kChat.size() &&
      ep.base_path.compare(ep.base_path.size() - kChat.size(), kChat.size(),
                           kChat) == 0) {
    ep.chat_path = ep.base_path;
    auto root = ep.base_path.substr(0, ep.base_path.size() - kChat.size());
    ep.caps_path = root + "/capabilities";
  } else {
    ep.chat_path = ep.base_path + "/v1/chat/completions";
    ep.caps_path = ep.base_path + "/v1/capabilities";
  }
  return ep;
}

std::unique_ptr<httplib::Client> make_client(const Endpoint& ep,
                                             std::chrono::milliseconds timeout) {
  auto client = std::make_unique<httplib::Client>(ep.origin);
  if (!client->is_valid()) {
    throw Error(Errc::InvalidConfig, "unsupported endpoint " + ep.origin);
  }
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs =
      std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  client->set_connection_timeout(secs.count(), usecs.count());
  client->set_read_timeout(secs.count(), usecs.count());
  client->set_write_timeout(secs.count(), usecs.count());
  return client;
}

bool is_timeout(httplib::Error err) {
  return err == httplib::Error::Read || err == httplib::Error::Write ||
         err == httplib::Error::ConnectionTimeout;
}

// Runs `call` with transport-level retries and exponential backoff.
template <typename Call>
httplib::Result with_retries(const HttpOptions& opts, Call&& call) {
  auto delay = opts.backoff_initial;
  for (int attempt = 0;; ++attempt) {
    auto res = call();
    if (res || attempt >= opts.transport_retries) return res;
    std::this_thread::sleep_for(delay);
    delay *= 2;
  }
}

std::string error_code_of(const std::string& body) {
  auto doc = json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) return {};
  if (doc.contains("error")) {
    const auto& e = doc["error"];
    if (e.is_object() && e.contains("code") && e["code"].is_string()) {
      return e["code"].get<std::string>();
    }
    if (e.is_string()) return e.get<std::string>();
  }
  return {};
}

httplib::Headers auth_headers(const BackendDescriptor& desc) {
  httplib::Headers headers;
  if (desc.auth_token && !desc.auth_token->empty()) {
    headers.emplace("Authorization", "Bearer " + *desc.auth_token);
  }
  return headers;
}

class HttpSession final : public ChatSession {
 public:
  HttpSession(const BackendDescriptor& desc, Endpoint ep,
              std::unique_ptr<httplib::Client> client, EndpointCapabilities caps,
              std::string image_uri, SessionConfig cfg, std::string id)
      : ChatSession(std::move(id)),
        desc_(desc),
        ep_(std::move(ep)),
        client_(std::move(client)),
        caps_(caps),
        image_uri_(std::move(image_uri)),
        cfg_(cfg) {}

 protected:
  std::string exchange(std::string_view prompt) override {
    const std::string body = build_request(prompt).dump();
    auto res = with_retries(desc_.http, [&] {
      return client_->Post(ep_.chat_path, auth_headers(desc_), body,
                           "application/json");
    });
    if (!res) {
      const auto err = res.error();
      throw Error(is_timeout(err) ? Errc::Timeout : Errc::BackendError,
                  "chat request failed: " + httplib::to_string(err));
    }
    check_status(*res);
    return extract_reply(res->body);
  }

 private:
  json user_message(std::string_view prompt, bool with_image) const {
    if (!with_image) return {{"role", "user"}, {"content", std::string(prompt)}};
    return {{"role", "user"},
            {"content",
             json::array({{{"type", "text"}, {"text", std::string(prompt)}},
                          {{"type", "image_url"},
                           {"image_url", {{"url", image_uri_}}}}})}};
  }

  json build_request(std::string_view prompt) const {
    json req;
    req["model"] = desc_.model_name;
    req["temperature"] = cfg_.temperature;
    req["max_tokens"] = cfg_.max_reply_tokens;
    if (caps_.decoding_width) req["decoding_width"] = cfg_.decoding_width;
    json messages = json::array();
    if (caps_.history_by_id) {
      req["conversation_id"] = id();
      messages.push_back(user_message(prompt, history_.empty()));
    } else {
      for (std::size_t i = 0; i < history_.size(); ++i) {
        const auto& turn = history_[i];
        if (turn.role == Role::User) {
          messages.push_back(user_message(turn.text, turn.image_attached));
        } else {
          messages.push_back({{"role", "assistant"}, {"content", turn.text}});
        }
      }
      messages.push_back(user_message(prompt, history_.empty()));
    }
    req["messages"] = std::move(messages);
    return req;
  }

  void check_status(const httplib::Response& res) const {
    if (res.status >= 200 && res.status < 300) return;
    const auto code = error_code_of(res.body);
    const std::string what =
        "chat endpoint returned HTTP " + std::to_string(res.status) +
        (code.empty() ? "" : " (" + code + ")");
    if (res.status == 401 || res.status == 403) {
      throw Error(Errc::AuthFailed, what);
    }
    if (code == "context_length_exceeded" || code == "context_overflow") {
      throw Error(Errc::ContextOverflow, what);
    }
    if (code == "image_rejected" || res.status == 415) {
      throw Error(Errc::ImageRejected, what);
    }
    if (res.status == 408 || res.status == 504) throw Error(Errc::Timeout, what);
    throw Error(Errc::BackendError, what);
  }

  static std::string extract_reply(const std::string& body) {
    auto doc = json::parse(body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("choices") ||
        !doc["choices"].is_array() || doc["choices"].empty()) {
      throw Error(Errc::BackendError, "malformed chat response envelope");
    }
    const auto& choice = doc["choices"][0];
    if (!choice.is_object() || !choice.contains("message") ||
        !choice["message"].is_object() ||
        !choice["message"].contains("content")) {
      throw Error(Errc::BackendError, "chat response lacks message content");
    }
    const auto& content = choice["message"]["content"];
    if (content.is_string()) return content.get<std::string>();
    if (content.is_null()) return {};
    if (content.is_array()) {
      std::string text;
      for (const auto& part : content) {
        if (part.is_object() && part.value("type", "") == "text" &&
            part.contains("text") && part["text"].is_string()) {
          text += part["text"].get<std::string>();
        }
      }
      return text;
    }
    throw Error(Errc::BackendError, "chat response content has unknown shape");
  }

  BackendDescriptor desc_;
  Endpoint ep_;
  std::unique_ptr<httplib::Client> client_;
  EndpointCapabilities caps_;
  std::string image_uri_;
  SessionConfig cfg_;
};

EndpointCapabilities parse_capabilities(const std::string& body) {
  EndpointCapabilities caps;
  auto doc = json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) return caps;
  if (auto it = doc.find("decoding_width"); it != doc.end() && it->is_boolean()) {
    caps.decoding_width = it->get<bool>();
  }
  if (auto it = doc.find("history_mode"); it != doc.end() && it->is_string()) {
    caps.history_by_id = it->get<std::string>() == "id";
  }
  if (auto it = doc.find("max_image_bytes");
      it != doc.end() && it->is_number_unsigned()) {
    caps.max_image_bytes = it->get<std::size_t>();
  }
  return caps;
}

}  // namespace

HttpBackend::HttpBackend(BackendDescriptor descriptor)
    : desc_(std::move(descriptor)) {
  desc_.validate();
  if (desc_.kind != BackendKind::Http) {
    throw Error(Errc::InvalidConfig, "HttpBackend needs an http descriptor");
  }
  split_endpoint(desc_.endpoint);
}

std::unique_ptr<ChatSession> HttpBackend::open_session(
    std::string_view image, const SessionConfig& cfg,
    const SessionContext& ctx) {
  cfg.validate();
  auto ep = split_endpoint(desc_.endpoint);
  auto client = make_client(ep, cfg.timeout);

  auto res = with_retries(desc_.http, [&] {
    return client->Get(ep.caps_path, auth_headers(desc_));
  });
  if (!res) {
    throw Error(Errc::BackendUnreachable,
                "cannot reach " + ep.origin + ": " +
                    httplib::to_string(res.error()));
  }
  EndpointCapabilities caps;
  if (res->status == 401 || res->status == 403) {
    throw Error(Errc::AuthFailed, "endpoint rejected credentials (HTTP " +
                                      std::to_string(res->status) + ")");
  } else if (res->status >= 200 && res->status < 300) {
    caps = parse_capabilities(res->body);
  } else if (res->status != 404) {
    throw Error(Errc::BackendUnreachable,
                "capability probe returned HTTP " + std::to_string(res->status));
  }

  if (image.empty()) throw Error(Errc::ImageRejected, "image is empty");
  if (caps.max_image_bytes && image.size() > *caps.max_image_bytes) {
    throw Error(Errc::ImageRejected, "image exceeds endpoint size limit");
  }
  return std::make_unique<HttpSession>(desc_, std::move(ep), std::move(client),
                                       caps, image_data_uri(image), cfg,
                                       ctx.conversation_id());
}

std::string HttpBackend::describe() const {
  return "http " + desc_.endpoint + " model=" + desc_.model_name;
}

// ---------------------------------------------------------------------------
// Mock

namespace {

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (auto pos = s.find(from); pos != std::string::npos;
       pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

class MockSession final : public ChatSession {
 public:
  MockSession(std::shared_ptr<const MockOptions> opts, const FaultPlan& faults,
              std::uint64_t seed, std::string id)
      : ChatSession(std::move(id)),
        shared_(std::move(opts)),
        opts_(*shared_),
        faults_(faults),
        seed_(seed) {}

 protected:
  std::string exchange(std::string_view prompt) override {
    const PromptTemplate* tpl = opts_.prompts->identify(prompt);
    if (!tpl) return opts_.script.unknown_prompt_reply;
    const TaskKind task = tpl->task;
    const auto it = opts_.script.tasks.find(task);
    if (it == opts_.script.tasks.end()) return opts_.script.unknown_prompt_reply;
    const auto& ts = it->second;
    const bool is_continue = tpl->variant == PromptVariant::Continue;
    const int turn = turns_[static_cast<std::size_t>(task)]++;

    const auto fault = faults_.find(task);
    if (fault == faults_.end()) return healthy(task, ts, is_continue);

    switch (fault->second) {
      case FailureKind::NoScore:
        if (turn == 0 || ts.no_score_followups.empty()) return ts.no_score;
        return ts.no_score_followups[static_cast<std::size_t>(turn - 1) %
                                     ts.no_score_followups.size()];
      case FailureKind::RepeatedAnswer:
        return ts.repeated_answer;
      case FailureKind::RepeatedToken: {
        std::string out;
        for (int i = 0; i < opts_.script.repeated_token_count; ++i) {
          if (i) out += ' ';
          out += opts_.script.repeated_token;
        }
        return out;
      }
      case FailureKind::InconsistentResponses: {
        const int score = draw_score(task, ts);
        const int lo = min_score_for(task);
        const int span = denominator_for(task) - lo + 1;
        const int other = lo + (score - lo + span / 2) % span;
        std::string out = ts.inconsistent;
        replace_all(out, "{score}", std::to_string(score));
        replace_all(out, "{other}", std::to_string(other));
        return out;
      }
      case FailureKind::NoAnswer:
        return {};
      case FailureKind::MalformedJson:
        if (turn == 0 || ts.malformed_followups.empty()) return ts.malformed;
        return ts.malformed_followups[static_cast<std::size_t>(turn - 1) %
                                      ts.malformed_followups.size()];
      case FailureKind::Timeout:
        throw Error(Errc::Timeout, "mock: injected timeout");
      case FailureKind::BackendError:
        throw Error(Errc::BackendError, "mock: injected backend error");
    }
    return {};
  }

 private:
  std::mt19937_64 task_rng(TaskKind task) const {
    return std::mt19937_64(mix_seed(seed_, static_cast<std::uint64_t>(task) + 1));
  }

  int draw_score(TaskKind task, const MockScript::TaskScript& ts) const {
    auto rng = task_rng(task);
    std::uint64_t total = 0;
    for (int w : ts.score_weights) total += static_cast<std::uint64_t>(w);
    if (total == 0) return denominator_for(task) / 2;
    std::uint64_t pick = rng() % total;
    for (std::size_t i = 0; i < ts.score_weights.size(); ++i) {
      const auto w = static_cast<std::uint64_t>(ts.score_weights[i]);
      if (pick < w) return static_cast<int>(i);
      pick -= w;
    }
    return denominator_for(task) / 2;
  }

  std::string healthy(TaskKind task, const MockScript::TaskScript& ts,
                      bool is_continue) const {
    if (!is_continue) {
      if (auto fixed = ts.fixed.find(seed_); fixed != ts.fixed.end()) {
        return fixed->second;
      }
    }
    const int score = draw_score(task, ts);
    std::string out = is_continue ? ts.continue_reply : ts.reply;
    replace_all(out, "{score}", std::to_string(score));
    if (task == TaskKind::Aesthetics) {
      auto rng = task_rng(task);
      rng.discard(1);
      for (std::size_t i = 0; i < kAestheticItemCount; ++i) {
        const int delta = static_cast<int>(rng() % 5) - 2;
        const int item = std::clamp(score + delta, 0, 10);
        replace_all(out,
                    "{" + std::string(record_key(static_cast<AestheticItem>(i))) +
                        "}",
                    std::to_string(item));
      }
    }
    return out;
  }

  std::shared_ptr<const MockOptions> shared_;
  const MockOptions& opts_;
  FaultPlan faults_;
  std::uint64_t seed_;
  std::array<int, 3> turns_{};
};

std::string string_field(const json& obj, const char* key) {
  if (!obj.contains(key)) return {};
  if (!obj[key].is_string()) {
    throw Error(Errc::InvalidConfig,
                std::string("mock script field '") + key + "' must be a string");
  }
  return obj[key].get<std::string>();
}

}  // namespace

MockScript MockScript::parse(std::string_view json_text) {
  auto doc = json::parse(json_text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw Error(Errc::InvalidConfig, "mock script is not a JSON object");
  }
  MockScript script;
  script.repeated_token = doc.value("repeated_token", script.repeated_token);
  script.repeated_token_count =
      doc.value("repeated_token_count", script.repeated_token_count);
  script.unknown_prompt_reply = string_field(doc, "unknown_prompt_reply");
  if (!doc.contains("tasks") || !doc["tasks"].is_object()) {
    throw Error(Errc::InvalidConfig, "mock script needs a 'tasks' object");
  }
  for (const auto& [name, body] : doc["tasks"].items()) {
    auto task = task_from_string(name);
    if (!task) throw Error(Errc::InvalidConfig, "mock script: unknown task " + name);
    TaskScript ts;
    ts.reply = string_field(body, "reply");
    ts.continue_reply = string_field(body, "continue_reply");
    ts.no_score = string_field(body, "no_score");
    ts.repeated_answer = string_field(body, "repeated_answer");
    ts.inconsistent = string_field(body, "inconsistent");
    ts.malformed = string_field(body, "malformed");
    ts.score_weights = body.value("score_weights", std::vector<int>{});
    if (ts.score_weights.size() !=
        static_cast<std::size_t>(denominator_for(*task) + 1)) {
      throw Error(Errc::InvalidConfig,
                  "mock script: score_weights for " + name + " must have " +
                      std::to_string(denominator_for(*task) + 1) + " entries");
    }
    ts.no_score_followups =
        body.value("no_score_followups", std::vector<std::string>{});
    ts.malformed_followups =
        body.value("malformed_followups", std::vector<std::string>{});
    if (body.contains("fixed")) {
      for (const auto& [seed, reply] : body["fixed"].items()) {
        ts.fixed[std::stoull(seed)] = reply.get<std::string>();
      }
    }
    script.tasks[*task] = std::move(ts);
  }
  return script;
}

MockScript MockScript::load_file(const std::string& path) {
  return parse(read_text_file(path));
}

const MockScript& MockScript::builtin() {
  static const MockScript script = parse(assets::mock_script());
  return script;
}

MockBackend::MockBackend(MockOptions options) {
  if (!options.prompts) options.prompts = &PromptSet::canonical();
  opts_ = std::make_shared<const MockOptions>(std::move(options));
}

std::unique_ptr<ChatSession> MockBackend::open_session(
    std::string_view image, const SessionConfig& cfg,
    const SessionContext& ctx) {
  cfg.validate();
  if (image.empty()) throw Error(Errc::ImageRejected, "image is empty");
  const auto override_it = opts_->sample_faults.find(ctx.sample_id);
  const FaultPlan& faults = override_it != opts_->sample_faults.end()
                                ? override_it->second
                                : opts_->faults;
  return std::make_unique<MockSession>(opts_, faults, cfg.seed.value_or(0),
                                       ctx.conversation_id());
}

std::string MockBackend::describe() const { return "mock"; }

std::unique_ptr<Backend> make_backend(const BackendDescriptor& descriptor,
                                      MockOptions mock) {
  descriptor.validate();
  if (descriptor.kind == BackendKind::Http) {
    return std::make_unique<HttpBackend>(descriptor);
  }
  return std::make_unique<MockBackend>(std::move(mock));
}

}  // namespace xiqe
