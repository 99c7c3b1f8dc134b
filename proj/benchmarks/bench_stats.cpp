#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "xiqe/stats.hpp"

namespace {

std::vector<double> draws(std::mt19937_64& rng, std::size_t n) {
  std::vector<double> out(n);
  for (auto& v : out) v = static_cast<double>(rng() % 11);
  return out;
}

void BM_Pearson(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = draws(rng, n), y = draws(rng, n);
  for (auto _ : state) benchmark::DoNotOptimize(xiqe::stats::pearson(x, y));
}
BENCHMARK(BM_Pearson)->Range(64, 1 << 16);

void BM_KrippendorffAlpha(benchmark::State& state) {
  std::mt19937_64 rng(2);
  xiqe::stats::ReliabilityMatrix m;
  m.cells.resize(5);
  for (auto& row : m.cells) {
    for (double v : draws(rng, static_cast<std::size_t>(state.range(0)))) row.emplace_back(v);
  }
  for (auto _ : state) benchmark::DoNotOptimize(xiqe::stats::krippendorff_alpha(m));
}
BENCHMARK(BM_KrippendorffAlpha)->Range(64, 1 << 14);

void BM_KsTwoSample(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = draws(rng, n), b = draws(rng, n);
  for (auto _ : state) benchmark::DoNotOptimize(xiqe::stats::ks_two_sample(a, b));
}
BENCHMARK(BM_KsTwoSample)->Range(64, 1 << 16);

}  // namespace
