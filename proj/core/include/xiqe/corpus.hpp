#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xiqe/datamodel.hpp"
#include "xiqe/parser.hpp"

namespace xiqe {

// One labelled reply transcript from the frozen parser corpus
// (core/assets/parser_corpus.jsonl). Each line holds
// {"id", "task", "reply" | "replies": [...], "expected": {"score": "n/d"} |
// {"failure": "<FailureKind>"}}.
struct CorpusEntry {
  std::string id;
  TaskKind task = TaskKind::Fidelity;
  std::vector<std::string> replies;
  std::optional<ParsedScore> expected_score;
  std::optional<FailureKind> expected_failure;

  // Assistant replies interleaved with placeholder user turns.
  std::vector<ChatTurn> transcript() const;
};

// Throws Error(ParseError) naming the offending line.
std::vector<CorpusEntry> parse_corpus(std::string_view jsonl);
const std::vector<CorpusEntry>& builtin_corpus();

struct CorpusVerdict {
  bool agrees = false;
  std::string expected;  // "7/10" or a failure name
  std::string actual;
};

CorpusVerdict check_corpus_entry(const CorpusEntry& entry,
                                 const FailureDetectorOptions& opts = {});

}  // namespace xiqe
