#include "xiqe/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "xiqe/error.hpp"

namespace xiqe::stats {

ScoreVector::ScoreVector(
    std::initializer_list<std::pair<std::string, double>> values) {
  for (const auto& [id, v] : values) add(id, v);
}

void ScoreVector::add(std::string sample_id, double value) {
  if (!index_.emplace(sample_id, values_.size()).second) {
    throw Error(Errc::InvalidDataset, "duplicate sample id " + sample_id);
  }
  values_.emplace_back(std::move(sample_id), value);
}

ScoreVector ScoreVector::from_values(const std::vector<double>& values) {
  ScoreVector out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out.add(std::to_string(i), values[i]);
  }
  return out;
}

namespace {

double correlate(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2) throw Error(Errc::TooFewPairs, "pearson needs at least two pairs");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0 || syy == 0) {
    throw Error(Errc::ZeroVariance, "pearson undefined for a constant series");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace

PearsonResult pearson(const ScoreVector& x, const ScoreVector& y) {
  std::map<std::string_view, double> ys;
  for (const auto& [id, v] : y.values()) ys.emplace(id, v);
  std::vector<double> xs_joined, ys_joined;
  for (const auto& [id, v] : x.values()) {
    auto it = ys.find(id);
    if (it == ys.end()) continue;
    xs_joined.push_back(v);
    ys_joined.push_back(it->second);
  }
  PearsonResult out;
  out.pairs = xs_joined.size();
  out.dropped = x.size() + y.size() - 2 * out.pairs;
  out.r = correlate(xs_joined, ys_joined);
  return out;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) {
    throw Error(Errc::InvalidConfig, "pearson inputs differ in length");
  }
  return correlate(x, y);
}

double krippendorff_alpha(const ReliabilityMatrix& m) {
  const std::size_t units = m.units();
  for (const auto& row : m.cells) {
    if (row.size() != units) {
      throw Error(Errc::InvalidConfig, "reliability matrix rows differ in length");
    }
  }

  // Coincidences between distinct values, and their marginals.
  std::vector<double> values;
  for (const auto& row : m.cells) {
    for (const auto& c : row) {
      if (c) values.push_back(*c);
    }
  }
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  const std::size_t k = values.size();
  auto index_of = [&](double v) {
    return static_cast<std::size_t>(
        std::lower_bound(values.begin(), values.end(), v) - values.begin());
  };

  std::vector<double> coincidence(k * k, 0.0);
  std::vector<double> counts(k);
  for (std::size_t u = 0; u < units; ++u) {
    std::fill(counts.begin(), counts.end(), 0.0);
    double m_u = 0;
    for (const auto& row : m.cells) {
      if (row[u]) {
        counts[index_of(*row[u])] += 1;
        m_u += 1;
      }
    }
    if (m_u < 2) continue;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t d = 0; d < k; ++d) {
        if (counts[d] == 0) continue;
        const double pairs = counts[c] * (counts[d] - (c == d ? 1.0 : 0.0));
        coincidence[c * k + d] += pairs / (m_u - 1);
      }
    }
  }

  std::vector<double> marginal(k, 0.0);
  double n = 0;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t d = 0; d < k; ++d) marginal[c] += coincidence[c * k + d];
    n += marginal[c];
  }
  if (n < 2) {
    throw Error(Errc::InsufficientData, "alpha needs at least two pairable values");
  }

  double observed = 0, expected = 0;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t d = 0; d < k; ++d) {
      const double delta = values[c] - values[d];
      const double dist = delta * delta;
      observed += coincidence[c * k + d] * dist;
      expected += marginal[c] * marginal[d] * dist;
    }
  }
  if (expected == 0) {
    throw Error(Errc::DegenerateData, "alpha undefined: no expected disagreement");
  }
  return 1.0 - (n - 1) * observed / expected;
}

double kolmogorov_survival(double lambda, int terms) {
  if (lambda <= 0) return 1.0;
  constexpr double pi = std::numbers::pi;
  if (lambda < 1.18) {
    // Small-lambda form of the same distribution; the alternating series
    // converges too slowly here.
    double cdf = 0;
    const double c = pi * pi / (8 * lambda * lambda);
    for (int j = 1; j <= terms; ++j) {
      const double odd = 2.0 * j - 1.0;
      cdf += std::exp(-odd * odd * c);
    }
    cdf *= std::sqrt(2 * pi) / lambda;
    return std::clamp(1.0 - cdf, 0.0, 1.0);
  }
  double sum = 0;
  for (int j = 1; j <= terms; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += (j % 2 == 1) ? term : -term;
  }
  return std::clamp(2 * sum, 0.0, 1.0);
}

KsResult ks_two_sample(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) {
    throw Error(Errc::EmptyInput, "ks_two_sample needs two non-empty samples");
  }
  std::vector<double> sa(a), sb(b);
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());

  // Merge walk; ties advance both sides before comparing.
  std::size_t i = 0, j = 0;
  double d = 0;
  while (i < sa.size() && j < sb.size()) {
    const double t = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] == t) ++i;
    while (j < sb.size() && sb[j] == t) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na -
                             static_cast<double>(j) / nb));
  }
  KsResult out;
  out.d = d;
  const double n_eff = na * nb / (na + nb);
  out.p = kolmogorov_survival(std::sqrt(n_eff) * d);
  return out;
}

double recall_generated(const std::vector<EvaluationRecord>& records,
                        int threshold) {
  std::size_t scored = 0, detected = 0;
  for (const auto& r : records) {
    if (r.sample.is_real) continue;
    auto s = r.score(TaskKind::Fidelity);
    if (!s) continue;
    ++scored;
    if (s->numerator <= threshold) ++detected;
  }
  if (scored == 0) {
    throw Error(Errc::EmptyDenominator,
                "recall needs a generated image with a fidelity score");
  }
  return static_cast<double>(detected) / static_cast<double>(scored);
}

double answer_success_rate(const std::vector<EvaluationRecord>& records,
                           TaskKind task) {
  std::size_t ran = 0, scored = 0;
  for (const auto& r : records) {
    if (!r.task(task)) continue;
    ++ran;
    if (r.score(task)) ++scored;
  }
  return ran == 0 ? 0.0 : static_cast<double>(scored) / static_cast<double>(ran);
}

std::map<int, std::size_t> score_histogram(
    const std::vector<EvaluationRecord>& records, TaskKind task) {
  std::map<int, std::size_t> bins;
  for (int v = min_score_for(task); v <= denominator_for(task); ++v) bins[v] = 0;
  for (const auto& r : records) {
    if (auto s = r.score(task)) {
      if (auto it = bins.find(s->numerator); it != bins.end()) ++it->second;
    }
  }
  return bins;
}

ReliabilityMatrix reliability_from_records(
    const std::vector<EvaluationRecord>& records, TaskKind task) {
  std::map<std::string, std::size_t> unit_index;
  std::set<int> raters;
  for (const auto& r : records) {
    unit_index.emplace(r.sample.id, 0);
    raters.insert(r.run.repeat_index);
  }
  std::size_t u = 0;
  for (auto& [id, idx] : unit_index) idx = u++;
  std::map<int, std::size_t> rater_index;
  std::size_t k = 0;
  for (int rep : raters) rater_index[rep] = k++;

  ReliabilityMatrix m;
  m.cells.assign(raters.size(),
                 std::vector<std::optional<double>>(unit_index.size()));
  for (const auto& r : records) {
    if (auto s = r.score(task)) {
      m.cells[rater_index[r.run.repeat_index]][unit_index[r.sample.id]] =
          s->value();
    }
  }
  return m;
}

ScoreVector scores_from_records(const std::vector<EvaluationRecord>& records,
                                TaskKind task, int repeat_index) {
  ScoreVector out;
  for (const auto& r : records) {
    if (r.run.repeat_index != repeat_index) continue;
    if (auto s = r.score(task)) out.add(r.sample.id, s->value());
  }
  return out;
}

}  // namespace xiqe::stats
