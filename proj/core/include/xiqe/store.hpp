#pragma once

#include <filesystem>
#include <mutex>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "xiqe/datamodel.hpp"
#include "xiqe/error.hpp"

namespace xiqe {

// ---------------------------------------------------------------------------
// Record serialization. Key order is fixed so identical records serialize to
// identical bytes.

nlohmann::ordered_json to_json(const EvaluationRecord& record);
EvaluationRecord record_from_json(const nlohmann::json& doc);

std::string to_json_line(const EvaluationRecord& record);

// ---------------------------------------------------------------------------
// Append-only JSON-lines result store.

using RecordKey = std::pair<std::string, int>;  // (sample id, repeat index)

class ResultStore {
 public:
  explicit ResultStore(std::filesystem::path path);

  const std::filesystem::path& path() const noexcept { return path_; }

  // Reads every complete record. A torn final line (no trailing newline and
  // not valid JSON) is ignored; any other malformed line throws
  // Error(ParseError).
  std::vector<EvaluationRecord> load() const;
  std::set<RecordKey> completed_keys() const;

  // Drops a torn final line so that appends start on a fresh line.
  void repair_tail();
  // Removes all records.
  void truncate();

  // Writes one record as a single line and flushes. Safe to call from
  // several threads.
  void append(const EvaluationRecord& record);

 private:
  std::filesystem::path path_;
  std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Dataset ingestion

struct DatasetIssue {
  std::size_t line = 0;
  Errc code = Errc::ParseError;
  std::string message;
};

class DatasetError : public Error {
 public:
  explicit DatasetError(std::vector<DatasetIssue> issues);
  const std::vector<DatasetIssue>& issues() const noexcept { return issues_; }

 private:
  std::vector<DatasetIssue> issues_;
};

struct IngestOptions {
  bool require_captions = true;  // alignment enabled
  bool check_images = true;      // image files must exist
};

struct Dataset {
  std::filesystem::path source;
  std::vector<ImageSample> samples;
};

// Rows: {"id", "image_path", "caption", "model_tag", "is_real"}. Relative
// image paths resolve against the dataset file's directory. Collects every
// problem before throwing DatasetError.
Dataset ingest_dataset(const std::filesystem::path& path,
                       const IngestOptions& options = {});

std::string read_file(const std::filesystem::path& path);

}  // namespace xiqe
