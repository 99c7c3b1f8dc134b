#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace xiqe {

// Evaluation tasks, in chain-of-thought order.
enum class TaskKind { Fidelity, Alignment, Aesthetics };

inline constexpr std::array<TaskKind, 3> kAllTasks = {
    TaskKind::Fidelity, TaskKind::Alignment, TaskKind::Aesthetics};

std::string_view to_string(TaskKind task) noexcept;
std::optional<TaskKind> task_from_string(std::string_view name) noexcept;

// Alignment is scored out of 5, the other tasks out of 10.
constexpr int denominator_for(TaskKind task) noexcept {
  return task == TaskKind::Alignment ? 5 : 10;
}

// Lowest legal numerator: alignment bands start at "(1)".
constexpr int min_score_for(TaskKind task) noexcept {
  return task == TaskKind::Alignment ? 1 : 0;
}

enum class FailureKind {
  NoScore,
  RepeatedAnswer,
  RepeatedToken,
  InconsistentResponses,
  NoAnswer,
  MalformedJson,
  Timeout,
  BackendError,
};

inline constexpr std::array<FailureKind, 8> kAllFailureKinds = {
    FailureKind::NoScore,       FailureKind::RepeatedAnswer,
    FailureKind::RepeatedToken, FailureKind::InconsistentResponses,
    FailureKind::NoAnswer,      FailureKind::MalformedJson,
    FailureKind::Timeout,       FailureKind::BackendError};

std::string_view to_string(FailureKind kind) noexcept;
std::optional<FailureKind> failure_from_string(std::string_view name) noexcept;

struct ImageSample {
  std::string id;
  std::string image_ref;
  std::string caption;
  std::string model_tag;
  bool is_real = false;

  friend bool operator==(const ImageSample&, const ImageSample&) = default;
};

struct ParsedScore {
  int numerator = 0;
  int denominator = 10;
  TaskKind task = TaskKind::Fidelity;
  // Set when the reply carried a decimal that was rounded half-up.
  bool rounded = false;

  double value() const noexcept { return static_cast<double>(numerator); }
  std::string to_string() const;  // "n/d"

  friend bool operator==(const ParsedScore&, const ParsedScore&) = default;
};

// Sub-item keys of the aesthetics prompt, in prompt order.
enum class AestheticItem {
  ColorHarmony,
  ColorBrightness,
  ColorSaturation,
  Composition,
  Perspective,
  LightAndShadow,
  DetailedExpression,
  VividPosture,
  VisualImpact,
};

inline constexpr std::size_t kAestheticItemCount = 9;

// Label as it appears in the prompt, e.g. "Light and shadow".
std::string_view prompt_label(AestheticItem item) noexcept;
// snake_case key used in serialized records, e.g. "light_and_shadow".
std::string_view record_key(AestheticItem item) noexcept;

struct AestheticsBreakdown {
  std::array<std::optional<int>, kAestheticItemCount> items{};
  std::optional<ParsedScore> overall;

  std::optional<int>& operator[](AestheticItem item) {
    return items[static_cast<std::size_t>(item)];
  }
  const std::optional<int>& operator[](AestheticItem item) const {
    return items[static_cast<std::size_t>(item)];
  }

  friend bool operator==(const AestheticsBreakdown&,
                         const AestheticsBreakdown&) = default;
};

enum class Role { User, Assistant };

struct ChatTurn {
  Role role = Role::User;
  std::string text;
  bool image_attached = false;

  friend bool operator==(const ChatTurn&, const ChatTurn&) = default;
};

// Exactly one of score / failure is set for a well-formed outcome. Both are
// plain optionals so that malformed records can still be represented and
// reported by validate_record.
struct TaskOutcome {
  std::optional<ParsedScore> score;
  std::optional<FailureKind> failure;

  bool scored() const noexcept { return score.has_value() && !failure; }

  friend bool operator==(const TaskOutcome&, const TaskOutcome&) = default;
};

// Named key -> analysis text pair, kept in prompt order.
struct AnalysisField {
  std::string key;
  std::string text;

  friend bool operator==(const AnalysisField&, const AnalysisField&) = default;
};

struct TaskResult {
  TaskKind task = TaskKind::Fidelity;
  std::string template_id;
  std::string session_id;
  std::vector<ChatTurn> transcript;
  TaskOutcome outcome;
  std::vector<AnalysisField> analysis;
  std::optional<AestheticsBreakdown> aesthetics;  // aesthetics task only
  std::vector<std::string> diagnostics;
  // Manual annotation only; never set by the harness.
  bool hallucination = false;

  std::size_t user_turns() const noexcept;

  friend bool operator==(const TaskResult&, const TaskResult&) = default;
};

struct RunMetadata {
  double temperature = 0.1;
  int decoding_width = 1;
  std::optional<std::uint64_t> seed;
  int repeat_index = 0;
  int continue_rounds = 2;
  // Continue prompts stop once a reply holds conflicting scores.
  bool stop_on_inconsistent = true;
  std::string prompt_pack;  // SHA-256 of the prompt pack used
  std::string backend;      // backend description
  std::optional<std::string> started_at;   // ISO-8601 UTC
  std::optional<std::string> finished_at;

  friend bool operator==(const RunMetadata&, const RunMetadata&) = default;
};

struct EvaluationRecord {
  ImageSample sample;
  RunMetadata run;
  // Indexed by TaskKind; empty when the task was not run.
  std::array<std::optional<TaskResult>, 3> tasks{};

  std::optional<TaskResult>& task(TaskKind kind) {
    return tasks[static_cast<std::size_t>(kind)];
  }
  const std::optional<TaskResult>& task(TaskKind kind) const {
    return tasks[static_cast<std::size_t>(kind)];
  }

  // Score for a task if it was run and scored.
  std::optional<ParsedScore> score(TaskKind kind) const;

  friend bool operator==(const EvaluationRecord&,
                         const EvaluationRecord&) = default;
};

struct ModelSummary {
  std::string model_tag;
  std::size_t n_samples = 0;
  std::optional<double> mean_fidelity;
  std::optional<double> mean_alignment;
  std::optional<double> mean_aesthetics;
  std::optional<double> overall;
  std::array<double, 3> success_rate{};  // indexed by TaskKind

  std::optional<double> mean(TaskKind kind) const;
  bool empty() const noexcept { return !overall.has_value(); }
};

inline constexpr double kMinTemperature = 0.01;
inline constexpr double kMaxTemperature = 1.0;

double overall_score(double fidelity, double alignment, double aesthetics);

// Lists every invariant violation; empty when the record is well formed.
std::vector<std::string> validate_record(const EvaluationRecord& record);

// Per-model means over scored tasks only. Records with failed tasks still
// count toward n_samples and the success rates.
ModelSummary summarize(std::string model_tag,
                       const std::vector<const EvaluationRecord*>& records);

}  // namespace xiqe
