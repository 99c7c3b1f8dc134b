#pragma once

// Brute-force reference implementations used to check the statistics module.
// They follow the textbook definitions as literally as possible and favour
// clarity over speed; none of them shares code with xiqe::stats.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

namespace oracle {

// Covariance divided by the product of standard deviations, each computed
// from its own definition in extended precision.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("pearson");
  const long double n = static_cast<long double>(x.size());
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  long double cov = 0, vx = 0, vy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    cov += (x[i] - mx) * (y[i] - my);
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
  }
  cov /= n;
  const long double sx = std::sqrt(vx / n);
  const long double sy = std::sqrt(vy / n);
  if (sx == 0 || sy == 0) throw std::domain_error("zero variance");
  return static_cast<double>(cov / (sx * sy));
}

// Krippendorff's alpha (interval metric) by enumerating every ordered pair
// of pairable values. Within a unit with m values each ordered pair carries
// weight 1/(m-1); expected disagreement runs over all ordered pairs of the
// n pairable values.
inline double krippendorff_alpha(
    const std::vector<std::vector<std::optional<double>>>& cells) {
  const std::size_t raters = cells.size();
  const std::size_t units = raters == 0 ? 0 : cells[0].size();
  std::vector<double> pooled;
  long double observed = 0;
  for (std::size_t u = 0; u < units; ++u) {
    std::vector<double> values;
    for (std::size_t r = 0; r < raters; ++r) {
      if (cells[r][u]) values.push_back(*cells[r][u]);
    }
    if (values.size() < 2) continue;
    const long double m = static_cast<long double>(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      for (std::size_t j = 0; j < values.size(); ++j) {
        if (i == j) continue;
        const long double d = values[i] - values[j];
        observed += d * d / (m - 1);
      }
    }
    pooled.insert(pooled.end(), values.begin(), values.end());
  }
  const long double n = static_cast<long double>(pooled.size());
  if (pooled.size() < 2) throw std::domain_error("insufficient data");
  long double expected = 0;
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    for (std::size_t j = 0; j < pooled.size(); ++j) {
      if (i == j) continue;
      const long double d = pooled[i] - pooled[j];
      expected += d * d;
    }
  }
  if (expected == 0) throw std::domain_error("degenerate");
  const long double d_o = observed / n;
  const long double d_e = expected / (n * (n - 1));
  return static_cast<double>(1 - d_o / d_e);
}

// Empirical CDF by counting.
inline double ecdf(const std::vector<double>& s, double t) {
  std::size_t k = 0;
  for (double v : s) k += v <= t ? 1 : 0;
  return static_cast<double>(k) / static_cast<double>(s.size());
}

// sup |F_a - F_b|, scanning every breakpoint of the pooled sample.
inline double ks_statistic(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks");
  double d = 0;
  for (const auto* s : {&a, &b}) {
    for (double t : *s) d = std::max(d, std::abs(ecdf(a, t) - ecdf(b, t)));
  }
  return d;
}

// P(K > lambda) from the alternating series 2 * sum (-1)^(j-1) exp(-2 j^2 l^2),
// summed in extended precision until the terms vanish.
inline double kolmogorov_survival(double lambda) {
  if (lambda < 0.02) return 1.0;
  long double sum = 0;
  const long double l2 = static_cast<long double>(lambda) * lambda;
  for (int j = 1; j <= 20000; ++j) {
    const long double term = std::exp(-2.0L * j * j * l2);
    if (term == 0) break;
    sum += (j % 2 == 1) ? term : -term;
  }
  return static_cast<double>(std::clamp(2 * sum, 0.0L, 1.0L));
}

inline double ks_pvalue(const std::vector<double>& a, const std::vector<double>& b) {
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  return kolmogorov_survival(std::sqrt(na * nb / (na + nb)) * ks_statistic(a, b));
}

}  // namespace oracle
