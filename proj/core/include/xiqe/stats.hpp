#pragma once

#include <initializer_list>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "xiqe/datamodel.hpp"

namespace xiqe::stats {

// Scores keyed by sample id, in insertion order. Ids must be unique.
class ScoreVector {
 public:
  ScoreVector() = default;
  ScoreVector(std::initializer_list<std::pair<std::string, double>> values);

  // Throws Error(InvalidDataset) on a duplicate id.
  void add(std::string sample_id, double value);

  const std::vector<std::pair<std::string, double>>& values() const noexcept {
    return values_;
  }
  std::size_t size() const noexcept { return values_.size(); }

  // Positional ids "0", "1", ... for plain sequences.
  static ScoreVector from_values(const std::vector<double>& values);

 private:
  std::vector<std::pair<std::string, double>> values_;
  std::map<std::string, std::size_t> index_;
};

struct PearsonResult {
  double r = 0;
  std::size_t pairs = 0;
  std::size_t dropped = 0;  // ids present in only one vector
};

// Product-moment correlation over the sample-id intersection. Throws
// Error(TooFewPairs) below two pairs, Error(ZeroVariance) for a constant
// side.
PearsonResult pearson(const ScoreVector& x, const ScoreVector& y);
double pearson(const std::vector<double>& x, const std::vector<double>& y);

// Raters (repeat runs) x units (samples); missing cells are nullopt.
struct ReliabilityMatrix {
  std::vector<std::vector<std::optional<double>>> cells;  // [rater][unit]

  std::size_t raters() const noexcept { return cells.size(); }
  std::size_t units() const noexcept {
    return cells.empty() ? 0 : cells.front().size();
  }
};

// Krippendorff's alpha at the interval level (squared difference), via the
// coincidence matrix. Units with fewer than two values are not pairable and
// are skipped. Throws Error(InsufficientData) when fewer than two pairable
// values remain and Error(DegenerateData) when every pairable value is equal.
double krippendorff_alpha(const ReliabilityMatrix& m);

struct KsResult {
  double d = 0;  // sup |ECDF_a - ECDF_b|
  double p = 1;  // asymptotic Kolmogorov tail at sqrt(n_eff) * d
};

// Kolmogorov survival function Q(lambda) = P(K > lambda), series truncated
// at `terms` terms.
double kolmogorov_survival(double lambda, int terms = 100);

// Two-sample test. Throws Error(EmptyInput) if either side is empty.
KsResult ks_two_sample(const std::vector<double>& a, const std::vector<double>& b);

// Share of generated images with a fidelity score at or below `threshold`.
// Throws Error(EmptyDenominator) when no generated image has a score.
double recall_generated(const std::vector<EvaluationRecord>& records,
                        int threshold = 4);

// Share of records (that ran the task) whose task outcome is a score.
double answer_success_rate(const std::vector<EvaluationRecord>& records,
                           TaskKind task);

// Integer bins over the task's score range, zero bins included.
std::map<int, std::size_t> score_histogram(
    const std::vector<EvaluationRecord>& records, TaskKind task);

// Raters are repeat indices, units the sample ids, cells the task scores.
ReliabilityMatrix reliability_from_records(
    const std::vector<EvaluationRecord>& records, TaskKind task);

// Task scores keyed by sample id for one repeat.
ScoreVector scores_from_records(const std::vector<EvaluationRecord>& records,
                                TaskKind task, int repeat_index = 0);

}  // namespace xiqe::stats
