#include "xiqe/parser.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>
#include <variant>

#include <nlohmann/json.hpp>

#include "xiqe/error.hpp"

namespace xiqe {

namespace {

using ordered_json = nlohmann::ordered_json;

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}
bool is_alnum(char c) {
  return is_digit(c) || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}
char lower(char c) { return (c >= 'A' && c <= 'Z') ? char(c - 'A' + 'a') : c; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// ---------------------------------------------------------------------------
// JSON block extraction

// End index (inclusive) of the balanced region starting at `open`, ignoring
// braces inside string literals. Only flat objects are ever accepted, so a
// nested '{' ends the attempt early; this keeps the scan over a reply
// roughly linear even for inputs made of thousands of braces.
std::optional<std::size_t> balanced_end(std::string_view text,
                                        std::size_t open) {
  int depth = 0;
  bool in_string = false;
  bool escape = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escape) {
        escape = false;
      } else if (c == '\\') {
        escape = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      if (++depth > 1) return std::nullopt;
    } else if (c == '}') {
      if (--depth == 0) return i;
    }
  }
  return std::nullopt;
}

// Drops commas that directly precede a closing brace/bracket.
std::string strip_trailing_commas(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool in_string = false;
  bool escape = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      out.push_back(c);
      if (escape) {
        escape = false;
      } else if (c == '\\') {
        escape = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') in_string = true;
    if (c == ',') {
      std::size_t j = i + 1;
      while (j < text.size() && is_space(text[j])) ++j;
      if (j < text.size() && (text[j] == '}' || text[j] == ']')) continue;
    }
    out.push_back(c);
  }
  return out;
}

std::optional<FlatObject> parse_flat(std::string_view region) {
  auto parsed = ordered_json::parse(strip_trailing_commas(region), nullptr,
                                    /*allow_exceptions=*/false);
  if (parsed.is_discarded() || !parsed.is_object()) return std::nullopt;
  FlatObject out;
  for (auto it = parsed.begin(); it != parsed.end(); ++it) {
    const auto& v = it.value();
    if (v.is_structured()) return std::nullopt;
    if (v.is_string()) {
      out.emplace_back(it.key(), v.get<std::string>());
    } else if (v.is_null()) {
      out.emplace_back(it.key(), std::string{});
    } else {
      out.emplace_back(it.key(), v.dump());
    }
  }
  return out;
}

struct BlockScan {
  std::vector<FlatObject> blocks;
  bool saw_region = false;  // a '{' was present
};

BlockScan scan_blocks(std::string_view reply, bool first_only) {
  BlockScan scan;
  std::size_t pos = 0;
  while ((pos = reply.find('{', pos)) != std::string_view::npos) {
    scan.saw_region = true;
    auto end = balanced_end(reply, pos);
    if (end) {
      if (auto obj = parse_flat(reply.substr(pos, *end - pos + 1))) {
        scan.blocks.push_back(std::move(*obj));
        if (first_only) break;
        pos = *end + 1;
        continue;
      }
    }
    ++pos;
  }
  return scan;
}

// ---------------------------------------------------------------------------
// Fractions

struct Number {
  double value = 0;
  bool decimal = false;
  std::size_t end = 0;
};

// Reads digits[.digits] at `pos`. Overlong digit runs saturate.
std::optional<Number> read_number(std::string_view s, std::size_t pos) {
  if (pos >= s.size() || !is_digit(s[pos])) return std::nullopt;
  Number n;
  std::size_t i = pos;
  while (i < s.size() && is_digit(s[i])) {
    n.value = std::min(n.value * 10 + (s[i] - '0'), 1e12);
    ++i;
  }
  if (i + 1 < s.size() && s[i] == '.' && is_digit(s[i + 1])) {
    n.decimal = true;
    double scale = 0.1;
    ++i;
    while (i < s.size() && is_digit(s[i])) {
      n.value += (s[i] - '0') * scale;
      scale *= 0.1;
      ++i;
    }
  }
  n.end = i;
  return n;
}

std::optional<std::pair<long, std::size_t>> read_int(std::string_view s,
                                                     std::size_t pos) {
  if (pos >= s.size() || !is_digit(s[pos])) return std::nullopt;
  long v = 0;
  std::size_t i = pos;
  while (i < s.size() && is_digit(s[i])) {
    v = std::min<long>(v * 10 + (s[i] - '0'), 1000000000L);
    ++i;
  }
  return std::pair{v, i};
}

std::size_t skip_spaces(std::string_view s, std::size_t i) {
  while (i < s.size() && is_space(s[i])) ++i;
  return i;
}

bool match_word(std::string_view s, std::size_t i, std::string_view word) {
  if (i + word.size() > s.size()) return false;
  for (std::size_t k = 0; k < word.size(); ++k) {
    if (lower(s[i + k]) != word[k]) return false;
  }
  return true;
}

struct FractionForm {
  Number numerator;
  std::optional<long> denominator;  // absent for a bare number
  std::size_t end = 0;
};

// Matches "n/d", "n / d" or "n out of d" starting at `pos`; when
// `allow_bare` a lone number also matches.
std::optional<FractionForm> match_fraction_at(std::string_view s,
                                              std::size_t pos,
                                              bool allow_bare) {
  auto num = read_number(s, pos);
  if (!num) return std::nullopt;
  FractionForm form{*num, std::nullopt, num->end};

  std::size_t i = skip_spaces(s, num->end);
  if (i < s.size() && s[i] == '/') {
    auto den = read_int(s, skip_spaces(s, i + 1));
    if (den) {
      form.denominator = den->first;
      form.end = den->second;
      return form;
    }
  } else if (i > num->end && match_word(s, i, "out")) {
    std::size_t j = i + 3;
    const std::size_t after_out = j;
    j = skip_spaces(s, j);
    if (j > after_out && match_word(s, j, "of")) {
      const std::size_t after_of = j + 2;
      const std::size_t k = skip_spaces(s, after_of);
      if (k > after_of) {
        if (auto den = read_int(s, k)) {
          form.denominator = den->first;
          form.end = den->second;
          return form;
        }
      }
    }
  }
  if (allow_bare) return form;
  return std::nullopt;
}

using FractionResult = std::variant<ParsedScore, Errc>;

FractionResult to_score(const FractionForm& form, TaskKind task) {
  const int den = denominator_for(task);
  if (form.denominator && *form.denominator != den) {
    return Errc::DenominatorMismatch;
  }
  const double rounded = std::floor(form.numerator.value + 0.5);
  if (rounded > den || rounded < min_score_for(task)) return Errc::OutOfRange;
  ParsedScore score;
  score.numerator = static_cast<int>(rounded);
  score.denominator = den;
  score.task = task;
  score.rounded = form.numerator.decimal &&
                  rounded != form.numerator.value;
  return score;
}

FractionResult strict_fraction(std::string_view text, TaskKind task) {
  std::string_view t = trim(text);
  if (!t.empty() && t.back() == '.') t = trim(t.substr(0, t.size() - 1));
  bool negative = false;
  if (!t.empty() && t.front() == '-') {
    negative = true;
    t = trim(t.substr(1));
  }
  auto form = match_fraction_at(t, 0, /*allow_bare=*/true);
  if (!form || form->end != t.size()) return Errc::UnparseableScore;
  if (negative) return Errc::OutOfRange;
  return to_score(*form, task);
}

struct FoundFraction {
  std::size_t begin = 0;
  FractionForm form;
};

// Every "n/d" or "n out of d" occurrence in free text. Dates ("1/2/2023"),
// percentages and numbers glued to words are skipped.
std::vector<FoundFraction> find_fractions(std::string_view s) {
  std::vector<FoundFraction> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!is_digit(s[i])) {
      ++i;
      continue;
    }
    const bool boundary =
        i == 0 || !(is_alnum(s[i - 1]) || s[i - 1] == '.' || s[i - 1] == '/' ||
                    s[i - 1] == '-');
    auto form = match_fraction_at(s, i, /*allow_bare=*/false);
    if (!boundary || !form) {
      while (i < s.size() && (is_digit(s[i]) || s[i] == '.')) ++i;
      continue;
    }
    const std::size_t e = form->end;
    const bool clean_end =
        e == s.size() ||
        !(is_alnum(s[e]) || s[e] == '%' || s[e] == '/' ||
          (s[e] == '.' && e + 1 < s.size() && is_digit(s[e + 1])));
    if (clean_end) out.push_back({i, *form});
    i = e;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Keys

const std::vector<std::string_view>& score_key_aliases(TaskKind task) {
  static const std::vector<std::string_view> fidelity = {
      "fidelity", "fidelity score", "fidelity rating"};
  static const std::vector<std::string_view> alignment = {
      "alignment score", "alignment rating", "alignment",
      "text image alignment score"};
  static const std::vector<std::string_view> aesthetics = {
      "overall aesthetic score", "overall aesthetics score",
      "aesthetic score",         "aesthetics score",
      "overall score",           "overall aesthetic rating"};
  switch (task) {
    case TaskKind::Fidelity: return fidelity;
    case TaskKind::Alignment: return alignment;
    case TaskKind::Aesthetics: return aesthetics;
  }
  return fidelity;
}

std::vector<std::string_view> analysis_labels(TaskKind task) {
  switch (task) {
    case TaskKind::Fidelity:
      return {"Image description", "Imperfect details", "Improper composition",
              "Strange colors", "Artificial look"};
    case TaskKind::Alignment:
      return {"Alignment analysis"};
    case TaskKind::Aesthetics: {
      std::vector<std::string_view> labels;
      for (std::size_t i = 0; i < kAestheticItemCount; ++i) {
        labels.push_back(prompt_label(static_cast<AestheticItem>(i)));
      }
      return labels;
    }
  }
  return {};
}

bool is_score_key(TaskKind task, const std::string& normalized) {
  const auto& aliases = score_key_aliases(task);
  return std::find(aliases.begin(), aliases.end(), normalized) != aliases.end();
}

std::string_view anchor_word(TaskKind task) {
  switch (task) {
    case TaskKind::Fidelity: return "fidelity";
    case TaskKind::Alignment: return "alignment";
    case TaskKind::Aesthetics: return "aesthetic";
  }
  return "";
}

// Whether the text just before `pos` on the same line names the task's
// score, e.g. "Fidelity: 6/10" or "Overall aesthetic score is 7/10".
bool anchored(std::string_view text, std::size_t pos, TaskKind task) {
  std::size_t start = pos > 80 ? pos - 80 : 0;
  const auto nl = text.rfind('\n', pos == 0 ? 0 : pos - 1);
  if (nl != std::string_view::npos && nl + 1 > start && nl < pos) {
    start = nl + 1;
  }
  std::string window;
  for (std::size_t i = start; i < pos; ++i) window.push_back(lower(text[i]));
  if (window.find(anchor_word(task)) != std::string::npos) return true;
  return task == TaskKind::Aesthetics &&
         window.find("overall") != std::string::npos;
}

// Distinct valid scores found in free text, anchored occurrences preferred.
std::vector<ParsedScore> prose_scores(std::string_view text, TaskKind task) {
  std::vector<ParsedScore> anchored_scores;
  std::vector<ParsedScore> all_scores;
  for (const auto& found : find_fractions(text)) {
    auto result = to_score(found.form, task);
    if (!std::holds_alternative<ParsedScore>(result)) continue;
    const auto& score = std::get<ParsedScore>(result);
    all_scores.push_back(score);
    if (anchored(text, found.begin, task)) anchored_scores.push_back(score);
  }
  auto& chosen = anchored_scores.empty() ? all_scores : anchored_scores;
  std::vector<ParsedScore> distinct;
  for (const auto& s : chosen) {
    const bool seen = std::any_of(distinct.begin(), distinct.end(),
                                  [&](const ParsedScore& d) {
                                    return d.numerator == s.numerator;
                                  });
    if (!seen) distinct.push_back(s);
  }
  return distinct;
}

// Score carried by a JSON value: the whole value, else fractions inside it.
FractionResult value_score(std::string_view value, TaskKind task,
                           std::vector<ParsedScore>& extra) {
  auto strict = strict_fraction(value, task);
  if (std::holds_alternative<ParsedScore>(strict)) return strict;
  std::vector<ParsedScore> inner;
  for (const auto& found : find_fractions(value)) {
    auto r = to_score(found.form, task);
    if (std::holds_alternative<ParsedScore>(r)) {
      inner.push_back(std::get<ParsedScore>(r));
    }
  }
  if (inner.empty()) return strict;
  for (std::size_t i = 1; i < inner.size(); ++i) extra.push_back(inner[i]);
  return inner.front();
}

std::optional<int> sub_item_score(std::string_view value) {
  auto strict = strict_fraction(value, TaskKind::Aesthetics);
  if (auto* s = std::get_if<ParsedScore>(&strict)) return s->numerator;
  for (const auto& found : find_fractions(value)) {
    auto r = to_score(found.form, TaskKind::Aesthetics);
    if (auto* s = std::get_if<ParsedScore>(&r)) return s->numerator;
  }
  return std::nullopt;
}

[[noreturn]] void throw_fraction(Errc code, std::string_view text) {
  std::string msg;
  switch (code) {
    case Errc::DenominatorMismatch: msg = "denominator mismatch in '"; break;
    case Errc::OutOfRange: msg = "score out of range in '"; break;
    default: msg = "unparseable score '"; break;
  }
  msg.append(text.substr(0, 80));
  msg += "'";
  throw Error(code, msg);
}

}  // namespace

std::optional<FlatObject> extract_json_block(std::string_view reply) {
  auto scan = scan_blocks(reply, /*first_only=*/true);
  if (scan.blocks.empty()) return std::nullopt;
  return std::move(scan.blocks.front());
}

std::vector<FlatObject> extract_json_blocks(std::string_view reply) {
  return scan_blocks(reply, /*first_only=*/false).blocks;
}

ParsedScore parse_fraction(std::string_view text, TaskKind task) {
  auto result = strict_fraction(text, task);
  if (auto* code = std::get_if<Errc>(&result)) throw_fraction(*code, text);
  return std::get<ParsedScore>(result);
}

ParsedScore parse_fraction(std::string_view text, int expected_denominator) {
  if (expected_denominator == 5) return parse_fraction(text, TaskKind::Alignment);
  if (expected_denominator == 10) return parse_fraction(text, TaskKind::Fidelity);
  throw Error(Errc::InvalidConfig, "expected denominator must be 5 or 10");
}

std::string normalize_key(std::string_view key) {
  std::string out;
  int paren = 0;
  bool pending_space = false;
  for (char c : key) {
    if (c == '(') {
      ++paren;
      continue;
    }
    if (c == ')') {
      if (paren > 0) --paren;
      continue;
    }
    if (paren > 0) continue;
    if (is_space(c) || c == '_' || c == '-') {
      pending_space = !out.empty();
      continue;
    }
    if (c == ':') continue;
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(lower(c));
  }
  return out;
}

ReplyParse parse_task_reply(TaskKind task, std::string_view reply) {
  ReplyParse out;
  const auto scan = scan_blocks(reply, /*first_only=*/false);
  const auto labels = analysis_labels(task);

  std::vector<ParsedScore> candidates;
  bool score_key_seen = false;
  const FlatObject* scoring_block = nullptr;

  for (const auto& block : scan.blocks) {
    for (const auto& [key, value] : block) {
      if (!is_score_key(task, normalize_key(key))) continue;
      score_key_seen = true;
      std::vector<ParsedScore> extra;
      auto result = value_score(value, task, extra);
      if (auto* score = std::get_if<ParsedScore>(&result)) {
        if (!scoring_block) scoring_block = &block;
        candidates.push_back(*score);
        candidates.insert(candidates.end(), extra.begin(), extra.end());
      } else {
        out.diagnostics.push_back("score key '" + key + "': " +
                                  std::string(to_string(std::get<Errc>(result))));
      }
    }
  }

  const FlatObject* analysis_block =
      scoring_block ? scoring_block
                    : (scan.blocks.empty() ? nullptr : &scan.blocks.front());
  if (analysis_block) {
    out.json_object = *analysis_block;
    for (auto label : labels) {
      const auto want = normalize_key(label);
      for (const auto& [key, value] : *analysis_block) {
        if (normalize_key(key) == want) {
          out.analysis_fields.push_back({std::string(label), value});
          break;
        }
      }
    }
  }

  if (!score_key_seen) {
    candidates = prose_scores(reply, task);
    if (!candidates.empty()) out.diagnostics.push_back("score recovered from prose");
  }

  std::vector<ParsedScore> distinct;
  for (const auto& c : candidates) {
    if (std::none_of(distinct.begin(), distinct.end(),
                     [&](const ParsedScore& d) {
                       return d.numerator == c.numerator;
                     })) {
      distinct.push_back(c);
    }
  }

  if (distinct.size() > 1) {
    out.failure = FailureKind::InconsistentResponses;
    out.diagnostics.push_back("conflicting scores in one reply");
  } else if (distinct.size() == 1) {
    out.score = distinct.front();
    if (out.score->rounded) {
      out.diagnostics.push_back("fractional score rounded half-up");
    }
  } else if (scan.saw_region && scan.blocks.empty()) {
    out.failure = FailureKind::MalformedJson;
  } else {
    out.failure = FailureKind::NoScore;
  }

  if (task == TaskKind::Aesthetics && analysis_block) {
    AestheticsBreakdown breakdown;
    for (std::size_t i = 0; i < kAestheticItemCount; ++i) {
      const auto want =
          normalize_key(prompt_label(static_cast<AestheticItem>(i)));
      for (const auto& [key, value] : *analysis_block) {
        if (normalize_key(key) == want) {
          breakdown.items[i] = sub_item_score(value);
          break;
        }
      }
    }
    breakdown.overall = out.score;
    out.aesthetics = breakdown;
  } else if (task == TaskKind::Aesthetics && out.score) {
    AestheticsBreakdown breakdown;
    breakdown.overall = out.score;
    out.aesthetics = breakdown;
  }
  return out;
}

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (is_alnum(c) || uc >= 0x80) {
      current.push_back(lower(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

double jaccard_similarity(std::string_view a, std::string_view b) {
  const auto ta = word_tokens(a);
  const auto tb = word_tokens(b);
  const std::set<std::string> sa(ta.begin(), ta.end());
  const std::set<std::string> sb(tb.begin(), tb.end());
  if (sa.empty() && sb.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::pair<double, std::size_t> dominant_token_share(std::string_view text) {
  const auto tokens = word_tokens(text);
  if (tokens.empty()) return {0.0, 0};
  std::unordered_map<std::string, std::size_t> counts;
  std::size_t best = 0;
  for (const auto& t : tokens) best = std::max(best, ++counts[t]);
  return {static_cast<double>(best) / static_cast<double>(tokens.size()),
          tokens.size()};
}

TranscriptAssessment assess_transcript(TaskKind task,
                                       std::span<const ChatTurn> transcript,
                                       const FailureDetectorOptions& opts) {
  TranscriptAssessment out;
  std::vector<std::string_view> replies;
  for (const auto& turn : transcript) {
    if (turn.role != Role::Assistant) continue;
    replies.push_back(turn.text);
    out.replies.push_back(parse_task_reply(task, turn.text));
  }

  bool inconsistent = false;
  std::optional<std::size_t> first_scored;
  for (std::size_t i = 0; i < out.replies.size(); ++i) {
    const auto& parse = out.replies[i];
    if (parse.failure == FailureKind::InconsistentResponses) inconsistent = true;
    if (!parse.score) continue;
    if (!first_scored) {
      first_scored = i;
    } else if (out.replies[*first_scored].score->numerator !=
               parse.score->numerator) {
      inconsistent = true;
    }
  }

  if (inconsistent) {
    out.failure = FailureKind::InconsistentResponses;
    return out;
  }
  if (first_scored) {
    out.score = out.replies[*first_scored].score;
    out.scoring_reply = first_scored;
    return out;
  }
  if (replies.empty()) {
    out.failure = FailureKind::NoAnswer;
    return out;
  }

  for (auto reply : replies) {
    const auto [share, count] = dominant_token_share(reply);
    if (count >= opts.min_tokens && share >= opts.dominant_token_ratio) {
      out.failure = FailureKind::RepeatedToken;
      return out;
    }
  }
  for (std::size_t k = 1; k < replies.size(); ++k) {
    for (std::size_t j = 0; j < k; ++j) {
      if (jaccard_similarity(replies[k], replies[j]) >= opts.repeat_similarity) {
        out.failure = FailureKind::RepeatedAnswer;
        return out;
      }
    }
  }
  if (trim(replies.back()).empty()) {
    out.failure = FailureKind::NoAnswer;
    return out;
  }
  out.failure = out.replies.back().failure.value_or(FailureKind::NoScore);
  return out;
}

std::optional<FailureKind> classify_failure(
    TaskKind task, std::span<const ChatTurn> transcript,
    const FailureDetectorOptions& opts) {
  return assess_transcript(task, transcript, opts).failure;
}

}  // namespace xiqe
