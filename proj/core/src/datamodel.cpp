#include "xiqe/datamodel.hpp"

#include <cmath>
#include <string>

#include "xiqe/error.hpp"

namespace xiqe {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::MissingCaption: return "MissingCaption";
    case Errc::UnexpectedCaption: return "UnexpectedCaption";
    case Errc::UnknownVariant: return "UnknownVariant";
    case Errc::InvalidPromptPack: return "InvalidPromptPack";
    case Errc::UnparseableScore: return "UnparseableScore";
    case Errc::DenominatorMismatch: return "DenominatorMismatch";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::BackendUnreachable: return "BackendUnreachable";
    case Errc::AuthFailed: return "AuthFailed";
    case Errc::ImageRejected: return "ImageRejected";
    case Errc::Timeout: return "Timeout";
    case Errc::BackendError: return "BackendError";
    case Errc::ContextOverflow: return "ContextOverflow";
    case Errc::EmptyDenominator: return "EmptyDenominator";
    case Errc::ZeroVariance: return "ZeroVariance";
    case Errc::TooFewPairs: return "TooFewPairs";
    case Errc::DegenerateData: return "DegenerateData";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::ParseError: return "ParseError";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::MissingImage: return "MissingImage";
    case Errc::InvalidDataset: return "InvalidDataset";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

std::string_view to_string(TaskKind task) noexcept {
  switch (task) {
    case TaskKind::Fidelity: return "fidelity";
    case TaskKind::Alignment: return "alignment";
    case TaskKind::Aesthetics: return "aesthetics";
  }
  return "unknown";
}

std::optional<TaskKind> task_from_string(std::string_view name) noexcept {
  for (auto task : kAllTasks) {
    if (to_string(task) == name) return task;
  }
  if (name == "Fidelity") return TaskKind::Fidelity;
  if (name == "Alignment") return TaskKind::Alignment;
  if (name == "Aesthetics") return TaskKind::Aesthetics;
  return std::nullopt;
}

std::string_view to_string(FailureKind kind) noexcept {
  switch (kind) {
    case FailureKind::NoScore: return "NoScore";
    case FailureKind::RepeatedAnswer: return "RepeatedAnswer";
    case FailureKind::RepeatedToken: return "RepeatedToken";
    case FailureKind::InconsistentResponses: return "InconsistentResponses";
    case FailureKind::NoAnswer: return "NoAnswer";
    case FailureKind::MalformedJson: return "MalformedJson";
    case FailureKind::Timeout: return "Timeout";
    case FailureKind::BackendError: return "BackendError";
  }
  return "Unknown";
}

std::optional<FailureKind> failure_from_string(std::string_view name) noexcept {
  for (auto kind : kAllFailureKinds) {
    if (to_string(kind) == name) return kind;
  }
  return std::nullopt;
}

std::string_view prompt_label(AestheticItem item) noexcept {
  switch (item) {
    case AestheticItem::ColorHarmony: return "Color harmony";
    case AestheticItem::ColorBrightness: return "Color brightness";
    case AestheticItem::ColorSaturation: return "Color saturation";
    case AestheticItem::Composition: return "Composition";
    case AestheticItem::Perspective: return "Perspective";
    case AestheticItem::LightAndShadow: return "Light and shadow";
    case AestheticItem::DetailedExpression: return "Detailed expression";
    case AestheticItem::VividPosture: return "Vivid posture";
    case AestheticItem::VisualImpact: return "Visual impact";
  }
  return "";
}

std::string_view record_key(AestheticItem item) noexcept {
  switch (item) {
    case AestheticItem::ColorHarmony: return "color_harmony";
    case AestheticItem::ColorBrightness: return "color_brightness";
    case AestheticItem::ColorSaturation: return "color_saturation";
    case AestheticItem::Composition: return "composition";
    case AestheticItem::Perspective: return "perspective";
    case AestheticItem::LightAndShadow: return "light_and_shadow";
    case AestheticItem::DetailedExpression: return "detailed_expression";
    case AestheticItem::VividPosture: return "vivid_posture";
    case AestheticItem::VisualImpact: return "visual_impact";
  }
  return "";
}

std::string ParsedScore::to_string() const {
  return std::to_string(numerator) + "/" + std::to_string(denominator);
}

std::size_t TaskResult::user_turns() const noexcept {
  std::size_t n = 0;
  for (const auto& turn : transcript) {
    if (turn.role == Role::User) ++n;
  }
  return n;
}

std::optional<ParsedScore> EvaluationRecord::score(TaskKind kind) const {
  const auto& result = task(kind);
  if (!result || !result->outcome.scored()) return std::nullopt;
  return result->outcome.score;
}

std::optional<double> ModelSummary::mean(TaskKind kind) const {
  switch (kind) {
    case TaskKind::Fidelity: return mean_fidelity;
    case TaskKind::Alignment: return mean_alignment;
    case TaskKind::Aesthetics: return mean_aesthetics;
  }
  return std::nullopt;
}

double overall_score(double fidelity, double alignment, double aesthetics) {
  return fidelity + alignment + aesthetics;
}

namespace {

void check_score(const ParsedScore& score, TaskKind task,
                 const std::string& field,
                 std::vector<std::string>& out) {
  const int expected_den = denominator_for(task);
  if (score.task != task) out.push_back(field + " score task mismatch");
  if (score.denominator != expected_den) {
    out.push_back(field + " denominator must be " +
                  std::to_string(expected_den));
  }
  if (score.numerator > score.denominator) {
    out.push_back(field + " numerator exceeds denominator");
  }
  if (score.numerator < min_score_for(task)) {
    out.push_back(field + " numerator below minimum " +
                  std::to_string(min_score_for(task)));
  }
}

}  // namespace

std::vector<std::string> validate_record(const EvaluationRecord& record) {
  std::vector<std::string> out;
  const auto& run = record.run;

  if (record.sample.id.empty()) out.push_back("sample.id must be non-empty");
  if (!(run.temperature >= kMinTemperature &&
        run.temperature <= kMaxTemperature)) {
    out.push_back("run.temperature outside [0.01, 1.0]");
  }
  if (run.continue_rounds < 0) out.push_back("run.continue_rounds negative");
  if (run.repeat_index < 0) out.push_back("run.repeat_index negative");

  const std::string* session = nullptr;
  bool image_seen = false;
  bool first_user_turn = true;

  for (auto kind : kAllTasks) {
    const auto& slot = record.task(kind);
    if (!slot) continue;
    const TaskResult& result = *slot;
    const std::string field(to_string(kind));

    if (result.task != kind) out.push_back(field + " stored under wrong task");

    const auto& outcome = result.outcome;
    if (outcome.score && outcome.failure) {
      out.push_back(field + " outcome not exclusive");
    } else if (!outcome.score && !outcome.failure) {
      out.push_back(field + " outcome missing");
    }
    if (outcome.score) check_score(*outcome.score, kind, field, out);

    if (kind == TaskKind::Alignment && record.sample.caption.empty()) {
      out.push_back("sample.caption empty with alignment enabled");
    }

    if (result.aesthetics) {
      if (kind != TaskKind::Aesthetics) {
        out.push_back(field + " carries an aesthetics breakdown");
      }
      for (std::size_t i = 0; i < kAestheticItemCount; ++i) {
        const auto& item = result.aesthetics->items[i];
        if (item && (*item < 0 || *item > 10)) {
          out.push_back(field + "." +
                        std::string(record_key(static_cast<AestheticItem>(i))) +
                        " outside [0,10]");
        }
      }
      if (result.aesthetics->overall) {
        check_score(*result.aesthetics->overall, kind, field + ".overall", out);
      }
    }
    if (kind == TaskKind::Aesthetics && outcome.scored() &&
        (!result.aesthetics || !result.aesthetics->overall)) {
      out.push_back("aesthetics.overall missing on scored record");
    }

    const auto user_turns = result.user_turns();
    // A session that never opened leaves transport failures without turns.
    const bool transport_failure = outcome.failure == FailureKind::Timeout ||
                                   outcome.failure == FailureKind::BackendError;
    if (user_turns == 0 && !transport_failure) {
      out.push_back(field + " transcript has no prompt");
    }
    if (run.continue_rounds >= 0 &&
        user_turns > 1 + static_cast<std::size_t>(run.continue_rounds)) {
      out.push_back(field + " transcript exceeds 1 + continue_rounds prompts");
    }
    for (std::size_t i = 0; i < result.transcript.size(); ++i) {
      const auto& turn = result.transcript[i];
      const Role expected = (i % 2 == 0) ? Role::User : Role::Assistant;
      if (turn.role != expected) {
        out.push_back(field + " transcript roles do not alternate");
        break;
      }
    }
    for (const auto& turn : result.transcript) {
      if (turn.image_attached) {
        if (turn.role != Role::User || !first_user_turn || image_seen) {
          out.push_back(field +
                        " image attached outside the first user turn");
        }
        image_seen = true;
      }
      if (turn.role == Role::User) first_user_turn = false;
    }

    if (session == nullptr) {
      session = &result.session_id;
    } else if (*session != result.session_id) {
      out.push_back(field + " session differs from earlier tasks");
    }
  }
  return out;
}

ModelSummary summarize(std::string model_tag,
                       const std::vector<const EvaluationRecord*>& records) {
  ModelSummary summary;
  summary.model_tag = std::move(model_tag);
  summary.n_samples = records.size();

  std::array<double, 3> sum{};
  std::array<std::size_t, 3> scored{};
  std::array<std::size_t, 3> attempted{};
  for (const auto* record : records) {
    for (auto kind : kAllTasks) {
      const auto idx = static_cast<std::size_t>(kind);
      if (!record->task(kind)) continue;
      ++attempted[idx];
      if (auto score = record->score(kind)) {
        sum[idx] += score->value();
        ++scored[idx];
      }
    }
  }

  std::array<std::optional<double>, 3> means;
  for (std::size_t i = 0; i < 3; ++i) {
    if (scored[i] > 0) means[i] = sum[i] / static_cast<double>(scored[i]);
    summary.success_rate[i] =
        attempted[i] > 0 ? static_cast<double>(scored[i]) /
                               static_cast<double>(attempted[i])
                         : 0.0;
  }
  summary.mean_fidelity = means[0];
  summary.mean_alignment = means[1];
  summary.mean_aesthetics = means[2];
  if (means[0] && means[1] && means[2]) {
    summary.overall = overall_score(*means[0], *means[1], *means[2]);
  }
  return summary;
}

}  // namespace xiqe
