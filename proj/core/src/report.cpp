#include "xiqe/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "xiqe/error.hpp"
#include "xiqe/store.hpp"

namespace xiqe {

using ordered_json = nlohmann::ordered_json;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::optional<double> parse_cell(const std::string& cell, std::size_t line_no) {
  if (cell.empty() || cell == "-" || cell == "NA" || cell == "n/a") {
    return std::nullopt;
  }
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used == cell.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw Error(Errc::ParseError, "external metrics line " + std::to_string(line_no) +
                                    ": not a number: '" + cell + "'");
}

std::string fixed_or_na(const std::optional<double>& v, int decimals = 2) {
  return v ? format_fixed(*v, decimals) : std::string("n/a");
}

ordered_json number_or_null(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

std::optional<double> optional_number(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

template <typename T>
std::string join(const std::vector<T>& items) {
  std::ostringstream out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out << ", ";
    out << items[i];
  }
  return items.empty() ? std::string("n/a") : out.str();
}

std::string temperature_text(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", t);
  return buf;
}

const char* kAlphaReference =
    "Reference agreement levels reported for human annotators: 0.11 "
    "(general annotators) and 0.53 (experts). These are literature values, "
    "not computed from this run.";

}  // namespace

ExternalMetrics parse_external_metrics(std::string_view csv) {
  ExternalMetrics out;
  std::istringstream in{std::string(csv)};
  std::string line;
  std::size_t line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (header) {
      if (cells.empty() || cells.front() != "model_tag") {
        throw Error(Errc::ParseError,
                    "external metrics: header must start with model_tag");
      }
      out.columns.assign(cells.begin() + 1, cells.end());
      header = false;
      continue;
    }
    if (cells.size() != out.columns.size() + 1) {
      throw Error(Errc::ParseError, "external metrics line " +
                                        std::to_string(line_no) +
                                        ": wrong number of cells");
    }
    std::vector<std::optional<double>> values;
    for (std::size_t i = 1; i < cells.size(); ++i) {
      values.push_back(parse_cell(cells[i], line_no));
    }
    if (!out.by_model.emplace(cells.front(), std::move(values)).second) {
      throw Error(Errc::DuplicateId, "external metrics: duplicate model_tag " +
                                         cells.front());
    }
  }
  if (header) throw Error(Errc::ParseError, "external metrics: empty file");
  return out;
}

ExternalMetrics ingest_external_metrics(const std::filesystem::path& path) {
  return parse_external_metrics(read_file(path));
}

BenchmarkTable aggregate(const std::vector<EvaluationRecord>& records,
                         const AggregateOptions& options) {
  std::map<std::string, std::vector<const EvaluationRecord*>> by_tag;
  for (const auto& r : records) by_tag[r.sample.model_tag].push_back(&r);

  BenchmarkTable table;
  if (options.external) table.external_columns = options.external->columns;
  for (const auto& [tag, recs] : by_tag) {
    BenchmarkRow row;
    row.summary = summarize(tag, recs);
    row.external.assign(table.external_columns.size(), std::nullopt);
    if (options.external) {
      auto it = options.external->by_model.find(tag);
      if (it != options.external->by_model.end()) row.external = it->second;
    }
    table.rows.push_back(std::move(row));
  }

  std::optional<std::size_t> order_col;
  if (options.order_by) {
    const auto& cols = table.external_columns;
    auto it = std::find(cols.begin(), cols.end(), *options.order_by);
    if (it == cols.end()) {
      throw Error(Errc::InvalidConfig, "unknown ordering column " + *options.order_by);
    }
    order_col = static_cast<std::size_t>(it - cols.begin());
  }
  auto key = [&](const BenchmarkRow& r) {
    return order_col ? r.external[*order_col] : r.summary.overall;
  };
  // by_tag is already sorted by tag, so a stable sort keeps tags ascending
  // among ties.
  std::stable_sort(table.rows.begin(), table.rows.end(),
                   [&](const BenchmarkRow& a, const BenchmarkRow& b) {
                     const auto ka = key(a);
                     const auto kb = key(b);
                     if (ka.has_value() != kb.has_value()) return ka.has_value();
                     return ka && *ka > *kb;
                   });
  return table;
}

double round_half_up(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  // The epsilon absorbs representation error such as 14.525 -> 14.52499...
  return std::floor(value * scale + 0.5 + 1e-9) / scale;
}

std::string format_fixed(double value, int decimals) {
  double r = round_half_up(value, decimals);
  if (r == 0.0) r = 0.0;  // no "-0.00"
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, r);
  return buf;
}

ReportInput build_report_input(const std::vector<EvaluationRecord>& records,
                               const AggregateOptions& options,
                               int recall_threshold) {
  ReportInput in;
  in.table = aggregate(records, options);
  in.record_count = records.size();
  in.recall_threshold = recall_threshold;

  std::set<std::string> packs, backends;
  std::set<double> temps;
  std::set<int> repeats;
  for (const auto& r : records) {
    if (!r.run.prompt_pack.empty()) packs.insert(r.run.prompt_pack);
    if (!r.run.backend.empty()) backends.insert(r.run.backend);
    temps.insert(r.run.temperature);
    repeats.insert(r.run.repeat_index);
    for (auto task : kAllTasks) {
      const auto& t = r.task(task);
      if (t && t->outcome.failure) {
        ++in.failures[static_cast<std::size_t>(task)][*t->outcome.failure];
      }
    }
  }
  in.provenance.prompt_packs.assign(packs.begin(), packs.end());
  in.provenance.backends.assign(backends.begin(), backends.end());
  in.provenance.temperatures.assign(temps.begin(), temps.end());
  in.provenance.repeats.assign(repeats.begin(), repeats.end());

  for (auto task : kAllTasks) {
    const auto idx = static_cast<std::size_t>(task);
    in.histograms[idx] = stats::score_histogram(records, task);
    const bool ran = std::any_of(records.begin(), records.end(),
                                 [&](const auto& r) { return r.task(task).has_value(); });
    if (ran) in.success_rates[idx] = stats::answer_success_rate(records, task);
    if (repeats.size() >= 2) {
      try {
        in.alpha[idx] =
            stats::krippendorff_alpha(stats::reliability_from_records(records, task));
      } catch (const Error&) {
        // Not enough pairable data; reported as n/a.
      }
    }
  }

  try {
    in.recall = stats::recall_generated(records, recall_threshold);
  } catch (const Error&) {
  }

  std::vector<double> real, generated;
  for (const auto& r : records) {
    if (r.run.repeat_index != 0) continue;
    if (auto s = r.score(TaskKind::Fidelity)) {
      (r.sample.is_real ? real : generated).push_back(s->value());
    }
  }
  if (!real.empty() && !generated.empty()) {
    in.fidelity_ks = stats::ks_two_sample(real, generated);
  }
  return in;
}

std::optional<ReportFormat> report_format_from_string(std::string_view name) {
  if (name == "md" || name == "markdown") return ReportFormat::Markdown;
  if (name == "csv") return ReportFormat::Csv;
  if (name == "json") return ReportFormat::Json;
  return std::nullopt;
}

namespace {

std::string render_markdown(const ReportInput& in) {
  std::ostringstream out;
  const auto& cols = in.table.external_columns;
  out << "# Image quality benchmark\n\n";

  out << "## Models\n\n";
  out << "| Model | n | Fidelity | Alignment | Aesthetics | Overall |";
  for (const auto& c : cols) out << ' ' << c << " |";
  out << "\n|---|---:|---:|---:|---:|---:|";
  for (std::size_t i = 0; i < cols.size(); ++i) out << "---:|";
  out << "\n";
  for (const auto& row : in.table.rows) {
    const auto& s = row.summary;
    out << "| " << s.model_tag << " | " << s.n_samples << " | "
        << fixed_or_na(s.mean_fidelity) << " | " << fixed_or_na(s.mean_alignment)
        << " | " << fixed_or_na(s.mean_aesthetics) << " | "
        << fixed_or_na(s.overall) << " |";
    for (const auto& v : row.external) out << ' ' << fixed_or_na(v) << " |";
    out << "\n";
  }
  out << "\nOverall is the sum of the three task means. Means cover scored "
         "answers only.\n";
  if (!cols.empty()) {
    out << "External columns (" << join(cols)
        << ") are ingested, not computed.\n";
  }

  out << "\n## Answer success rate\n\n";
  out << "| Model | Fidelity | Alignment | Aesthetics |\n|---|---:|---:|---:|\n";
  for (const auto& row : in.table.rows) {
    out << "| " << row.summary.model_tag << " |";
    for (double rate : row.summary.success_rate) out << ' ' << format_fixed(rate) << " |";
    out << "\n";
  }
  out << "| all |";
  for (const auto& rate : in.success_rates) out << ' ' << fixed_or_na(rate) << " |";
  out << "\n";

  out << "\n## Failures per task\n\n";
  out << "| Task | Failure | Count |\n|---|---|---:|\n";
  bool any_failure = false;
  for (auto task : kAllTasks) {
    for (const auto& [kind, n] : in.failures[static_cast<std::size_t>(task)]) {
      out << "| " << to_string(task) << " | " << to_string(kind) << " | " << n
          << " |\n";
      any_failure = true;
    }
  }
  if (!any_failure) out << "| all | none | 0 |\n";

  out << "\n## Score distributions\n";
  for (auto task : kAllTasks) {
    out << "\n### " << to_string(task) << "\n\n| Score | Count |\n|---:|---:|\n";
    for (const auto& [score, n] : in.histograms[static_cast<std::size_t>(task)]) {
      out << "| " << score << " | " << n << " |\n";
    }
  }

  out << "\n## Statistics\n\n";
  out << "- Recall of generated images (fidelity <= " << in.recall_threshold
      << "): " << fixed_or_na(in.recall, 4) << "\n";
  for (auto task : kAllTasks) {
    out << "- Krippendorff's alpha (interval), " << to_string(task) << ": "
        << fixed_or_na(in.alpha[static_cast<std::size_t>(task)], 4) << "\n";
  }
  out << "- Kolmogorov-Smirnov, fidelity real vs generated: ";
  if (in.fidelity_ks) {
    out << "D = " << format_fixed(in.fidelity_ks->d, 4)
        << ", p = " << format_fixed(in.fidelity_ks->p, 4) << "\n";
  } else {
    out << "n/a\n";
  }
  out << "\n" << kAlphaReference << "\n";

  out << "\n## Provenance\n\n";
  out << "- records: " << in.record_count << "\n";
  out << "- prompt pack sha256: " << join(in.provenance.prompt_packs) << "\n";
  std::vector<std::string> temps;
  for (double t : in.provenance.temperatures) temps.push_back(temperature_text(t));
  out << "- temperature: " << join(temps) << "\n";
  out << "- backend: " << join(in.provenance.backends) << "\n";
  out << "- repeats: " << in.provenance.repeats.size() << "\n";
  return out.str();
}

std::string render_csv(const ReportInput& in) {
  std::ostringstream out;
  out << "model_tag,n_samples,fidelity,alignment,aesthetics,overall,"
         "success_fidelity,success_alignment,success_aesthetics";
  for (const auto& c : in.table.external_columns) out << ',' << c;
  out << "\n";
  auto cell = [](const std::optional<double>& v) {
    return v ? format_fixed(*v) : std::string();
  };
  for (const auto& row : in.table.rows) {
    const auto& s = row.summary;
    out << s.model_tag << ',' << s.n_samples << ',' << cell(s.mean_fidelity) << ','
        << cell(s.mean_alignment) << ',' << cell(s.mean_aesthetics) << ','
        << cell(s.overall);
    for (double rate : s.success_rate) out << ',' << format_fixed(rate, 4);
    for (const auto& v : row.external) out << ',' << cell(v);
    out << "\n";
  }
  return out.str();
}

std::string render_json(const ReportInput& in) {
  ordered_json doc;
  ordered_json models = ordered_json::array();
  for (const auto& row : in.table.rows) {
    const auto& s = row.summary;
    ordered_json m;
    m["model_tag"] = s.model_tag;
    m["n_samples"] = s.n_samples;
    m["fidelity"] = number_or_null(s.mean_fidelity);
    m["alignment"] = number_or_null(s.mean_alignment);
    m["aesthetics"] = number_or_null(s.mean_aesthetics);
    m["overall"] = number_or_null(s.overall);
    ordered_json rates;
    for (auto task : kAllTasks) {
      rates[std::string(to_string(task))] = s.success_rate[static_cast<std::size_t>(task)];
    }
    m["success_rate"] = std::move(rates);
    ordered_json ext = ordered_json::object();
    for (std::size_t i = 0; i < in.table.external_columns.size(); ++i) {
      ext[in.table.external_columns[i]] = number_or_null(row.external[i]);
    }
    m["external"] = std::move(ext);
    models.push_back(std::move(m));
  }
  doc["models"] = std::move(models);
  doc["external_columns"] = in.table.external_columns;
  doc["records"] = in.record_count;

  ordered_json failures, histograms, success;
  for (auto task : kAllTasks) {
    const auto idx = static_cast<std::size_t>(task);
    const std::string name(to_string(task));
    ordered_json f = ordered_json::object();
    for (const auto& [kind, n] : in.failures[idx]) f[std::string(to_string(kind))] = n;
    failures[name] = std::move(f);
    ordered_json h = ordered_json::object();
    for (const auto& [score, n] : in.histograms[idx]) h[std::to_string(score)] = n;
    histograms[name] = std::move(h);
    success[name] = number_or_null(in.success_rates[idx]);
  }
  doc["failures"] = std::move(failures);
  doc["histograms"] = std::move(histograms);
  doc["success_rate"] = std::move(success);

  ordered_json st;
  ordered_json recall;
  recall["threshold"] = in.recall_threshold;
  recall["value"] = number_or_null(in.recall);
  st["recall_generated"] = std::move(recall);
  ordered_json alpha;
  for (auto task : kAllTasks) {
    alpha[std::string(to_string(task))] =
        number_or_null(in.alpha[static_cast<std::size_t>(task)]);
  }
  st["alpha_interval"] = std::move(alpha);
  if (in.fidelity_ks) {
    st["ks_fidelity_real_vs_generated"] = {{"d", in.fidelity_ks->d},
                                           {"p", in.fidelity_ks->p}};
  } else {
    st["ks_fidelity_real_vs_generated"] = nullptr;
  }
  st["alpha_reference"] = kAlphaReference;
  doc["stats"] = std::move(st);

  ordered_json prov;
  prov["prompt_pack_sha256"] = in.provenance.prompt_packs;
  prov["temperature"] = in.provenance.temperatures;
  prov["backend"] = in.provenance.backends;
  prov["repeats"] = in.provenance.repeats;
  doc["provenance"] = std::move(prov);
  return doc.dump(2) + "\n";
}

}  // namespace

std::string render_report(const ReportInput& input, ReportFormat format) {
  switch (format) {
    case ReportFormat::Markdown:
      return render_markdown(input);
    case ReportFormat::Csv:
      return render_csv(input);
    case ReportFormat::Json:
      return render_json(input);
  }
  throw Error(Errc::InvalidConfig, "unknown report format");
}

BenchmarkTable table_from_json(std::string_view json_report) {
  const auto doc = nlohmann::json::parse(json_report, nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("models")) {
    throw Error(Errc::ParseError, "report: not a JSON report");
  }
  try {
    BenchmarkTable table;
    if (doc.contains("external_columns")) {
      table.external_columns = doc["external_columns"].get<std::vector<std::string>>();
    }
    for (const auto& m : doc["models"]) {
      BenchmarkRow row;
      auto& s = row.summary;
      s.model_tag = m.at("model_tag").get<std::string>();
      s.n_samples = m.at("n_samples").get<std::size_t>();
      s.mean_fidelity = optional_number(m, "fidelity");
      s.mean_alignment = optional_number(m, "alignment");
      s.mean_aesthetics = optional_number(m, "aesthetics");
      s.overall = optional_number(m, "overall");
      for (auto task : kAllTasks) {
        s.success_rate[static_cast<std::size_t>(task)] =
            m.at("success_rate").at(std::string(to_string(task))).get<double>();
      }
      for (const auto& c : table.external_columns) {
        row.external.push_back(m.contains("external") ? optional_number(m["external"], c.c_str())
                                                      : std::nullopt);
      }
      table.rows.push_back(std::move(row));
    }
    return table;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("report: ") + e.what());
  }
}

}  // namespace xiqe
