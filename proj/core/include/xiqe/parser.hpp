#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "xiqe/datamodel.hpp"

namespace xiqe {

// A flat JSON object recovered from a reply, keys in order of appearance.
// Scalar values are stored as text (numbers keep their JSON spelling).
using FlatObject = std::vector<std::pair<std::string, std::string>>;

struct ReplyParse {
  std::optional<FlatObject> json_object;
  std::optional<ParsedScore> score;
  // Expected analysis keys found in the reply, labelled as in the prompt.
  std::vector<AnalysisField> analysis_fields;
  std::optional<AestheticsBreakdown> aesthetics;
  std::optional<FailureKind> failure;
  std::vector<std::string> diagnostics;
};

// First balanced {...} region that parses as a flat object. Tolerates
// surrounding prose, code fences and trailing commas.
std::optional<FlatObject> extract_json_block(std::string_view reply);
// Every such region, left to right, non-overlapping.
std::vector<FlatObject> extract_json_blocks(std::string_view reply);

// Accepts "n/d", "n / d", "n out of d" and a bare "n". Decimal numerators are
// rounded half-up and flagged. Throws Error with UnparseableScore,
// DenominatorMismatch or OutOfRange.
ParsedScore parse_fraction(std::string_view text, TaskKind task);
// Same, keyed on the denominator (5 -> alignment, 10 -> fidelity range).
ParsedScore parse_fraction(std::string_view text, int expected_denominator);

// Lower-cases and folds whitespace/underscores; parenthesised hints such as
// "(e.g., 6/10)" are dropped. Used for case-insensitive key matching.
std::string normalize_key(std::string_view key);

ReplyParse parse_task_reply(TaskKind task, std::string_view reply);

struct FailureDetectorOptions {
  double repeat_similarity = 0.9;    // Jaccard threshold for RepeatedAnswer
  double dominant_token_ratio = 0.5;  // share of the most frequent word
  std::size_t min_tokens = 20;        // replies shorter than this never trip
};

// Lower-cased word tokens; any byte outside [A-Za-z0-9] except high-bit
// bytes separates words.
std::vector<std::string> word_tokens(std::string_view text);
// Jaccard similarity of the two replies' word sets; 0 when both are empty.
double jaccard_similarity(std::string_view a, std::string_view b);
// Share of the most frequent token, and the token count.
std::pair<double, std::size_t> dominant_token_share(std::string_view text);

struct TranscriptAssessment {
  std::optional<ParsedScore> score;
  std::optional<FailureKind> failure;
  std::vector<ReplyParse> replies;  // one per assistant turn
  // Index into `replies` of the reply that produced `score`.
  std::optional<std::size_t> scoring_reply;
};

// Parses every assistant turn of one task's transcript and settles the task
// outcome. A unique score (possibly repeated) wins; otherwise the failure
// taxonomy applies in the order RepeatedToken, RepeatedAnswer, NoAnswer,
// then the last reply's parse failure.
TranscriptAssessment assess_transcript(TaskKind task,
                                       std::span<const ChatTurn> transcript,
                                       const FailureDetectorOptions& opts = {});

std::optional<FailureKind> classify_failure(
    TaskKind task, std::span<const ChatTurn> transcript,
    const FailureDetectorOptions& opts = {});

}  // namespace xiqe
