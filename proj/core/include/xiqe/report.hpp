#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xiqe/datamodel.hpp"
#include "xiqe/stats.hpp"

namespace xiqe {

// Published baseline numbers (CLIP, ImageReward, ...) supplied by the user.
// They are displayed, never computed.
struct ExternalMetrics {
  std::vector<std::string> columns;
  std::map<std::string, std::vector<std::optional<double>>> by_model;
};

// CSV with a header row "model_tag,<col>,<col>..."; empty cells are missing.
ExternalMetrics ingest_external_metrics(const std::filesystem::path& path);
ExternalMetrics parse_external_metrics(std::string_view csv);

struct BenchmarkRow {
  ModelSummary summary;
  std::vector<std::optional<double>> external;  // aligned with table columns
};

struct BenchmarkTable {
  std::vector<std::string> external_columns;
  std::vector<BenchmarkRow> rows;
};

struct AggregateOptions {
  const ExternalMetrics* external = nullptr;
  // Order by this external column instead of the overall score.
  std::optional<std::string> order_by;
};

// One row per model tag, ordered by overall score descending. Models without
// a complete set of means sort last.
BenchmarkTable aggregate(const std::vector<EvaluationRecord>& records,
                         const AggregateOptions& options = {});

// Display rounding: two decimals, half-up.
double round_half_up(double value, int decimals = 2);
std::string format_fixed(double value, int decimals = 2);

struct Provenance {
  std::vector<std::string> prompt_packs;
  std::vector<double> temperatures;
  std::vector<std::string> backends;
  std::vector<int> repeats;  // distinct repeat indices
};

struct ReportInput {
  BenchmarkTable table;
  std::size_t record_count = 0;
  std::array<std::map<int, std::size_t>, 3> histograms;
  std::array<std::map<FailureKind, std::size_t>, 3> failures;
  std::array<std::optional<double>, 3> success_rates;
  std::optional<double> recall;  // generated images, fidelity <= threshold
  int recall_threshold = 4;
  std::array<std::optional<double>, 3> alpha;  // needs >= 2 repeats
  std::optional<stats::KsResult> fidelity_ks;  // real vs generated
  Provenance provenance;
};

ReportInput build_report_input(const std::vector<EvaluationRecord>& records,
                               const AggregateOptions& options = {},
                               int recall_threshold = 4);

enum class ReportFormat { Markdown, Csv, Json };

std::optional<ReportFormat> report_format_from_string(std::string_view name);

// Deterministic: identical input gives identical bytes.
std::string render_report(const ReportInput& input, ReportFormat format);

// Reads the "models" section of a JSON report back into a table.
BenchmarkTable table_from_json(std::string_view json_report);

}  // namespace xiqe
