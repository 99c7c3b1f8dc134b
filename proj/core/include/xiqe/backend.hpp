#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xiqe/datamodel.hpp"
#include "xiqe/prompts.hpp"

namespace xiqe {

struct SessionConfig {
  double temperature = 0.1;
  int decoding_width = 1;
  int max_reply_tokens = 512;
  std::chrono::milliseconds timeout{60'000};
  std::optional<std::uint64_t> seed;  // honoured by the mock only

  // Throws Error(InvalidConfig).
  void validate() const;
};

enum class BackendKind { Http, Mock };

std::string_view to_string(BackendKind kind) noexcept;

struct HttpOptions {
  int transport_retries = 3;
  std::chrono::milliseconds backoff_initial{1000};
};

struct BackendDescriptor {
  BackendKind kind = BackendKind::Mock;
  std::string endpoint;  // http only, e.g. "http://127.0.0.1:8000"
  std::optional<std::string> auth_token;
  std::string model_name = "mock";
  HttpOptions http;

  void validate() const;
};

// Per-session identity; the HTTP backend uses it as the conversation id and
// the mock uses the sample id to look up per-sample faults.
struct SessionContext {
  std::string sample_id;
  int repeat_index = 0;

  std::string conversation_id() const;
};

// One multi-turn conversation about a single image. Sends are strictly
// sequential; history only ever grows.
class ChatSession {
 public:
  virtual ~ChatSession() = default;

  // Appends the user turn and the assistant reply. The reply is returned
  // verbatim. Throws Error with Timeout, BackendError or ContextOverflow.
  std::string send(std::string_view prompt);

  const std::vector<ChatTurn>& history() const noexcept { return history_; }
  const std::string& id() const noexcept { return id_; }

 protected:
  explicit ChatSession(std::string id) : id_(std::move(id)) {}
  // Produces the assistant reply for `prompt`; history_ does not yet hold
  // the new user turn.
  virtual std::string exchange(std::string_view prompt) = 0;

  std::vector<ChatTurn> history_;

 private:
  std::string id_;
};

class Backend {
 public:
  virtual ~Backend() = default;

  // Throws Error with BackendUnreachable, AuthFailed or ImageRejected.
  virtual std::unique_ptr<ChatSession> open_session(
      std::string_view image, const SessionConfig& cfg,
      const SessionContext& ctx) = 0;

  virtual std::string describe() const = 0;
};

// ---------------------------------------------------------------------------
// HTTP

// Endpoint capabilities reported by GET <base>/v1/capabilities.
struct EndpointCapabilities {
  bool decoding_width = false;
  bool history_by_id = false;  // server keeps history keyed by conversation id
  std::optional<std::size_t> max_image_bytes;
};

class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(BackendDescriptor descriptor);

  std::unique_ptr<ChatSession> open_session(std::string_view image,
                                            const SessionConfig& cfg,
                                            const SessionContext& ctx) override;
  std::string describe() const override;

  const BackendDescriptor& descriptor() const noexcept { return desc_; }

 private:
  BackendDescriptor desc_;
};

std::string base64_encode(std::string_view bytes);
// "image/png", "image/jpeg", ... from magic bytes.
std::string_view sniff_image_mime(std::string_view bytes);
std::string image_data_uri(std::string_view bytes);

// ---------------------------------------------------------------------------
// Mock

using FaultPlan = std::map<TaskKind, FailureKind>;

// Reply templates and fault texts. See core/assets/mock_script.json.
struct MockScript {
  struct TaskScript {
    std::string reply;                  // placeholders: {score}, {<item key>}
    std::string continue_reply;         // placeholder: {score}
    std::vector<int> score_weights;     // index = score
    std::map<std::uint64_t, std::string> fixed;  // seed -> verbatim reply
    std::string no_score;               // first reply under NoScore
    std::vector<std::string> no_score_followups;
    std::string repeated_answer;
    std::string inconsistent;           // placeholders: {score}, {other}
    std::string malformed;
    std::vector<std::string> malformed_followups;
  };

  std::map<TaskKind, TaskScript> tasks;
  std::string repeated_token = "the";
  int repeated_token_count = 30;
  std::string unknown_prompt_reply;

  static MockScript parse(std::string_view json_text);
  static MockScript load_file(const std::string& path);
  static const MockScript& builtin();
};

struct MockOptions {
  MockScript script = MockScript::builtin();
  FaultPlan faults;                                  // applies to every sample
  std::map<std::string, FaultPlan> sample_faults;    // overrides by sample id
  const PromptSet* prompts = &PromptSet::canonical();
};

// Deterministic scripted backend: identical seed, fault plan and prompts
// produce byte-identical replies. Sessions share the options and may outlive
// the backend.
class MockBackend final : public Backend {
 public:
  explicit MockBackend(MockOptions options = {});

  std::unique_ptr<ChatSession> open_session(std::string_view image,
                                            const SessionConfig& cfg,
                                            const SessionContext& ctx) override;
  std::string describe() const override;

  const MockOptions& options() const noexcept { return *opts_; }

 private:
  std::shared_ptr<const MockOptions> opts_;
};

// Builds the backend a descriptor names. The mock options are ignored for
// HTTP descriptors.
std::unique_ptr<Backend> make_backend(const BackendDescriptor& descriptor,
                                      MockOptions mock = {});

// Stable 64-bit mixing used for seed derivation (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept;
std::uint64_t hash_string(std::string_view s) noexcept;  // FNV-1a

}  // namespace xiqe
