#include "xiqe/store.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

namespace xiqe {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

[[noreturn]] void schema_error(const std::string& what) {
  throw Error(Errc::ParseError, "record: " + what);
}

const json& require(const json& obj, const char* key) {
  if (!obj.is_object() || !obj.contains(key)) {
    schema_error(std::string("missing field '") + key + "'");
  }
  return obj.at(key);
}

ordered_json score_json(const ParsedScore& s) {
  ordered_json j;
  j["numerator"] = s.numerator;
  j["denominator"] = s.denominator;
  if (s.rounded) j["rounded"] = true;
  return j;
}

ParsedScore score_from(const json& j, TaskKind task) {
  ParsedScore s;
  s.task = task;
  s.numerator = require(j, "numerator").get<int>();
  s.denominator = require(j, "denominator").get<int>();
  s.rounded = j.value("rounded", false);
  return s;
}

ordered_json task_json(const TaskResult& r) {
  ordered_json j;
  j["template"] = r.template_id;
  j["session"] = r.session_id;
  ordered_json turns = ordered_json::array();
  for (const auto& t : r.transcript) {
    ordered_json turn;
    turn["role"] = t.role == Role::User ? "user" : "assistant";
    turn["text"] = t.text;
    if (t.image_attached) turn["image"] = true;
    turns.push_back(std::move(turn));
  }
  j["transcript"] = std::move(turns);
  ordered_json outcome = ordered_json::object();
  if (r.outcome.score) outcome["score"] = score_json(*r.outcome.score);
  if (r.outcome.failure) outcome["failure"] = to_string(*r.outcome.failure);
  j["outcome"] = std::move(outcome);
  ordered_json analysis = ordered_json::object();
  for (const auto& f : r.analysis) analysis[f.key] = f.text;
  j["analysis"] = std::move(analysis);
  if (r.aesthetics) {
    ordered_json a = ordered_json::object();
    for (std::size_t i = 0; i < kAestheticItemCount; ++i) {
      const auto key = std::string(record_key(static_cast<AestheticItem>(i)));
      if (r.aesthetics->items[i]) {
        a[key] = *r.aesthetics->items[i];
      } else {
        a[key] = nullptr;
      }
    }
    a["overall"] = r.aesthetics->overall ? score_json(*r.aesthetics->overall)
                                         : ordered_json(nullptr);
    j["aesthetics"] = std::move(a);
  }
  j["diagnostics"] = r.diagnostics;
  if (r.hallucination) j["hallucination"] = true;
  return j;
}

TaskResult task_from(const json& j, TaskKind task) {
  TaskResult r;
  r.task = task;
  r.template_id = j.value("template", "");
  r.session_id = j.value("session", "");
  for (const auto& t : require(j, "transcript")) {
    ChatTurn turn;
    const auto role = require(t, "role").get<std::string>();
    if (role != "user" && role != "assistant") schema_error("bad role " + role);
    turn.role = role == "user" ? Role::User : Role::Assistant;
    turn.text = require(t, "text").get<std::string>();
    turn.image_attached = t.value("image", false);
    r.transcript.push_back(std::move(turn));
  }
  const auto& outcome = require(j, "outcome");
  if (outcome.contains("score")) {
    r.outcome.score = score_from(outcome["score"], task);
  }
  if (outcome.contains("failure")) {
    auto kind = failure_from_string(outcome["failure"].get<std::string>());
    if (!kind) schema_error("unknown failure kind");
    r.outcome.failure = kind;
  }
  if (j.contains("analysis")) {
    for (const auto& [key, value] : j["analysis"].items()) {
      r.analysis.push_back({key, value.get<std::string>()});
    }
  }
  if (j.contains("aesthetics") && j["aesthetics"].is_object()) {
    AestheticsBreakdown a;
    const auto& aj = j["aesthetics"];
    for (std::size_t i = 0; i < kAestheticItemCount; ++i) {
      const auto key = std::string(record_key(static_cast<AestheticItem>(i)));
      if (aj.contains(key) && aj[key].is_number_integer()) {
        a.items[i] = aj[key].get<int>();
      }
    }
    if (aj.contains("overall") && aj["overall"].is_object()) {
      a.overall = score_from(aj["overall"], task);
    }
    r.aesthetics = a;
  }
  if (j.contains("diagnostics")) {
    r.diagnostics = j["diagnostics"].get<std::vector<std::string>>();
  }
  r.hallucination = j.value("hallucination", false);
  return r;
}

}  // namespace

ordered_json to_json(const EvaluationRecord& record) {
  ordered_json j;
  ordered_json sample;
  sample["id"] = record.sample.id;
  sample["image_path"] = record.sample.image_ref;
  sample["caption"] = record.sample.caption;
  sample["model_tag"] = record.sample.model_tag;
  sample["is_real"] = record.sample.is_real;
  j["sample"] = std::move(sample);

  const auto& run = record.run;
  ordered_json meta;
  meta["repeat_index"] = run.repeat_index;
  meta["temperature"] = run.temperature;
  meta["decoding_width"] = run.decoding_width;
  meta["continue_rounds"] = run.continue_rounds;
  meta["seed"] = run.seed ? ordered_json(*run.seed) : ordered_json(nullptr);
  meta["stop_on_inconsistent"] = run.stop_on_inconsistent;
  meta["prompt_pack"] = run.prompt_pack;
  meta["backend"] = run.backend;
  if (run.started_at) meta["started_at"] = *run.started_at;
  if (run.finished_at) meta["finished_at"] = *run.finished_at;
  j["run"] = std::move(meta);

  ordered_json tasks = ordered_json::object();
  for (auto kind : kAllTasks) {
    if (const auto& t = record.task(kind)) {
      tasks[std::string(to_string(kind))] = task_json(*t);
    }
  }
  j["tasks"] = std::move(tasks);
  return j;
}

EvaluationRecord record_from_json(const json& doc) {
  try {
    EvaluationRecord rec;
    const auto& s = require(doc, "sample");
    rec.sample.id = require(s, "id").get<std::string>();
    rec.sample.image_ref = s.value("image_path", "");
    rec.sample.caption = s.value("caption", "");
    rec.sample.model_tag = s.value("model_tag", "");
    rec.sample.is_real = s.value("is_real", false);

    const auto& run = require(doc, "run");
    rec.run.repeat_index = run.value("repeat_index", 0);
    rec.run.temperature = run.value("temperature", 0.1);
    rec.run.decoding_width = run.value("decoding_width", 1);
    rec.run.continue_rounds = run.value("continue_rounds", 2);
    if (run.contains("seed") && !run["seed"].is_null()) {
      rec.run.seed = run["seed"].get<std::uint64_t>();
    }
    rec.run.stop_on_inconsistent = run.value("stop_on_inconsistent", true);
    rec.run.prompt_pack = run.value("prompt_pack", "");
    rec.run.backend = run.value("backend", "");
    if (run.contains("started_at")) {
      rec.run.started_at = run["started_at"].get<std::string>();
    }
    if (run.contains("finished_at")) {
      rec.run.finished_at = run["finished_at"].get<std::string>();
    }

    const auto& tasks = require(doc, "tasks");
    for (const auto& [name, body] : tasks.items()) {
      auto kind = task_from_string(name);
      if (!kind) schema_error("unknown task " + name);
      rec.task(*kind) = task_from(body, *kind);
    }
    return rec;
  } catch (const json::exception& e) {
    schema_error(e.what());
  }
}

std::string to_json_line(const EvaluationRecord& record) {
  return to_json(record).dump() + "\n";
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// ---------------------------------------------------------------------------

ResultStore::ResultStore(std::filesystem::path path) : path_(std::move(path)) {}

std::vector<EvaluationRecord> ResultStore::load() const {
  std::vector<EvaluationRecord> out;
  if (!std::filesystem::exists(path_)) return out;
  const std::string text = read_file(path_);
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    const bool torn = nl == std::string::npos;
    if (torn) nl = text.size();
    const std::string_view line(text.data() + pos, nl - pos);
    ++line_no;
    pos = nl + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    auto doc = json::parse(line, nullptr, false);
    if (doc.is_discarded()) {
      if (torn) break;
      throw Error(Errc::ParseError, path_.string() + ":" +
                                        std::to_string(line_no) +
                                        ": malformed record line");
    }
    try {
      out.push_back(record_from_json(doc));
    } catch (const Error& e) {
      throw Error(Errc::ParseError, path_.string() + ":" +
                                        std::to_string(line_no) + ": " +
                                        e.what());
    }
  }
  return out;
}

std::set<RecordKey> ResultStore::completed_keys() const {
  std::set<RecordKey> keys;
  for (const auto& r : load()) keys.emplace(r.sample.id, r.run.repeat_index);
  return keys;
}

void ResultStore::repair_tail() {
  std::lock_guard lock(mutex_);
  if (!std::filesystem::exists(path_)) return;
  std::string text = read_file(path_);
  if (text.empty() || text.back() == '\n') return;
  const auto last_nl = text.rfind('\n');
  const std::string_view tail =
      last_nl == std::string::npos ? std::string_view(text)
                                   : std::string_view(text).substr(last_nl + 1);
  if (!json::parse(tail, nullptr, false).is_discarded()) {
    text.push_back('\n');
  } else {
    text.resize(last_nl == std::string::npos ? 0 : last_nl + 1);
  }
  std::ofstream out(path_, std::ios::binary | std::ios::trunc);
  out << text;
}

void ResultStore::truncate() {
  std::lock_guard lock(mutex_);
  std::ofstream out(path_, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot write " + path_.string());
}

void ResultStore::append(const EvaluationRecord& record) {
  const std::string line = to_json_line(record);
  std::lock_guard lock(mutex_);
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw Error(Errc::IoError, "cannot append to " + path_.string());
  out.write(line.data(), static_cast<std::streamsize>(line.size()));
  out.flush();
  if (!out) throw Error(Errc::IoError, "write failed on " + path_.string());
}

// ---------------------------------------------------------------------------

namespace {

std::string summarize_issues(const std::vector<DatasetIssue>& issues) {
  std::string msg = "dataset has " + std::to_string(issues.size()) + " issue(s)";
  if (!issues.empty()) {
    msg += "; first: line " + std::to_string(issues.front().line) + ": " +
           issues.front().message;
  }
  return msg;
}

Errc dominant_code(const std::vector<DatasetIssue>& issues) {
  return issues.empty() ? Errc::InvalidDataset : issues.front().code;
}

}  // namespace

DatasetError::DatasetError(std::vector<DatasetIssue> issues)
    : Error(dominant_code(issues), summarize_issues(issues)),
      issues_(std::move(issues)) {}

Dataset ingest_dataset(const std::filesystem::path& path,
                       const IngestOptions& options) {
  Dataset ds;
  ds.source = path;
  const std::string text = read_file(path);
  const auto base = path.parent_path();
  std::vector<DatasetIssue> issues;
  std::unordered_set<std::string> ids;

  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto row = json::parse(line, nullptr, false);
    if (row.is_discarded() || !row.is_object()) {
      issues.push_back({line_no, Errc::ParseError, "not a JSON object"});
      continue;
    }
    auto str = [&](const char* key) -> std::optional<std::string> {
      if (!row.contains(key) || !row[key].is_string()) return std::nullopt;
      return row[key].get<std::string>();
    };
    ImageSample s;
    auto id = str("id");
    auto image = str("image_path");
    if (!id || id->empty()) {
      issues.push_back({line_no, Errc::ParseError, "missing or empty 'id'"});
      continue;
    }
    if (!image || image->empty()) {
      issues.push_back({line_no, Errc::ParseError,
                        "row '" + *id + "' missing 'image_path'"});
      continue;
    }
    s.id = *id;
    s.caption = str("caption").value_or("");
    s.model_tag = str("model_tag").value_or("");
    if (row.contains("is_real") && !row["is_real"].is_boolean()) {
      issues.push_back({line_no, Errc::ParseError,
                        "row '" + s.id + "': 'is_real' must be a boolean"});
    }
    s.is_real = row.contains("is_real") && row["is_real"].is_boolean() &&
                row["is_real"].get<bool>();

    std::filesystem::path img(*image);
    if (img.is_relative() && !base.empty()) img = base / img;
    s.image_ref = img.lexically_normal().string();

    if (!ids.insert(s.id).second) {
      issues.push_back({line_no, Errc::DuplicateId, "duplicate id '" + s.id + "'"});
      continue;
    }
    if (options.require_captions && s.caption.empty()) {
      issues.push_back({line_no, Errc::InvalidDataset,
                        "row '" + s.id + "' has no caption (alignment enabled)"});
    }
    if (options.check_images && !std::filesystem::is_regular_file(s.image_ref)) {
      issues.push_back({line_no, Errc::MissingImage,
                        "row '" + s.id + "': image not found: " + s.image_ref});
    }
    ds.samples.push_back(std::move(s));
  }
  if (!issues.empty()) throw DatasetError(std::move(issues));
  return ds;
}

}  // namespace xiqe
