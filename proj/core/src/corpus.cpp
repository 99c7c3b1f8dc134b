#include "xiqe/corpus.hpp"

#include <nlohmann/json.hpp>

#include "xiqe/assets.hpp"
#include "xiqe/error.hpp"

namespace xiqe {

std::vector<ChatTurn> CorpusEntry::transcript() const {
  std::vector<ChatTurn> turns;
  for (std::size_t i = 0; i < replies.size(); ++i) {
    turns.push_back({Role::User, "prompt " + std::to_string(i + 1), i == 0});
    turns.push_back({Role::Assistant, replies[i], false});
  }
  return turns;
}

std::vector<CorpusEntry> parse_corpus(std::string_view jsonl) {
  std::vector<CorpusEntry> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    auto nl = jsonl.find('\n', pos);
    if (nl == std::string_view::npos) nl = jsonl.size();
    const auto line = jsonl.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const auto where = "corpus line " + std::to_string(line_no);
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw Error(Errc::ParseError, where + ": not a JSON object");
    }
    try {
      CorpusEntry e;
      e.id = j.value("id", where);
      auto task = task_from_string(j.at("task").get<std::string>());
      if (!task) throw Error(Errc::ParseError, where + ": unknown task");
      e.task = *task;
      if (j.contains("replies")) {
        e.replies = j["replies"].get<std::vector<std::string>>();
      } else {
        e.replies.push_back(j.at("reply").get<std::string>());
      }
      const auto& expected = j.at("expected");
      if (expected.contains("score")) {
        e.expected_score = parse_fraction(expected["score"].get<std::string>(), e.task);
      } else {
        e.expected_failure =
            failure_from_string(expected.at("failure").get<std::string>());
        if (!e.expected_failure) {
          throw Error(Errc::ParseError, where + ": unknown failure kind");
        }
      }
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(Errc::ParseError, where + ": " + ex.what());
    }
  }
  return out;
}

const std::vector<CorpusEntry>& builtin_corpus() {
  static const std::vector<CorpusEntry> corpus = parse_corpus(assets::parser_corpus());
  return corpus;
}

CorpusVerdict check_corpus_entry(const CorpusEntry& entry,
                                 const FailureDetectorOptions& opts) {
  const auto turns = entry.transcript();
  const auto a = assess_transcript(entry.task, turns, opts);
  CorpusVerdict v;
  v.expected = entry.expected_score ? entry.expected_score->to_string()
                                    : std::string(to_string(*entry.expected_failure));
  if (a.score) {
    v.actual = a.score->to_string();
    v.agrees = entry.expected_score && a.score->numerator == entry.expected_score->numerator;
  } else {
    v.actual = a.failure ? std::string(to_string(*a.failure)) : "none";
    v.agrees = entry.expected_failure && a.failure == entry.expected_failure;
  }
  return v;
}

}  // namespace xiqe
