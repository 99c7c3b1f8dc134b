// Regenerates tests/fixtures/stats_oracle.json from the brute-force oracles.
// Usage: xiqe_gen_stats_fixture > tests/fixtures/stats_oracle.json

#include <cstdint>
#include <iostream>
#include <random>

#include <nlohmann/json.hpp>

#include "oracles.hpp"

namespace {

std::vector<double> uniform_draws(std::mt19937_64& rng, std::size_t n, double shift) {
  std::vector<double> out;
  for (std::size_t i = 0; i < n; ++i) {
    // 53 random mantissa bits: portable, unlike std::uniform_real_distribution.
    out.push_back(static_cast<double>(rng() >> 11) * 0x1.0p-53 + shift);
  }
  return out;
}

nlohmann::json cells_json(const std::vector<std::vector<std::optional<double>>>& cells) {
  auto rows = nlohmann::json::array();
  for (const auto& row : cells) {
    auto r = nlohmann::json::array();
    for (const auto& c : row) r.push_back(c ? nlohmann::json(*c) : nlohmann::json(nullptr));
    rows.push_back(r);
  }
  return rows;
}

}  // namespace

int main() {
  nlohmann::ordered_json doc;

  const std::vector<double> px{1, 2, 3}, py{1, 2, 4};
  doc["pearson"] = {{"x", px}, {"y", py}, {"r", oracle::pearson(px, py)}};

  const std::vector<std::vector<std::optional<double>>> cells{
      {1, 2, 3, 3}, {1, 2, 4, std::nullopt}, {2, 2, 3, 4}};
  doc["alpha"] = {{"cells", cells_json(cells)},
                  {"alpha", oracle::krippendorff_alpha(cells)}};

  std::mt19937_64 rng(20231015);
  const auto a = uniform_draws(rng, 100, 0.0);
  const auto b = uniform_draws(rng, 100, 0.2);
  doc["ks"] = {{"a", a},
               {"b", b},
               {"d", oracle::ks_statistic(a, b)},
               {"p", oracle::ks_pvalue(a, b)}};

  std::cout << doc.dump(2) << "\n";
  return 0;
}
