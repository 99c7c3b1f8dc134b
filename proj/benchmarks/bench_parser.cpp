#include <benchmark/benchmark.h>

#include <random>
#include <string>

#include "xiqe/parser.hpp"

namespace {

const std::string kFidelityReply = R"(Here is my analysis of the image.
```json
{
  "Image description": "A red bicycle leaning against a brick wall at dusk.",
  "Details analysis": "Spokes are continuous, shadows agree with the light source.",
  "Fidelity": "7/10"
}
```
I hope this helps.)";

const std::string kProseReply =
    "The composition is balanced and the colours are natural. Taking everything "
    "into account I would rate the alignment 4/5, since the caption's second "
    "object is only partly visible.";

void BM_ParseJsonReply(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(xiqe::parse_task_reply(xiqe::TaskKind::Fidelity, kFidelityReply));
  }
  state.SetBytesProcessed(static_cast<int64_t>(state.iterations() * kFidelityReply.size()));
}
BENCHMARK(BM_ParseJsonReply);

void BM_ParseProseReply(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(xiqe::parse_task_reply(xiqe::TaskKind::Alignment, kProseReply));
  }
  state.SetBytesProcessed(static_cast<int64_t>(state.iterations() * kProseReply.size()));
}
BENCHMARK(BM_ParseProseReply);

void BM_ParseRandomBytes(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::string bytes(static_cast<std::size_t>(state.range(0)), '\0');
  for (auto& c : bytes) c = static_cast<char>(rng() & 0xff);
  for (auto _ : state) {
    benchmark::DoNotOptimize(xiqe::parse_task_reply(xiqe::TaskKind::Aesthetics, bytes));
  }
  state.SetBytesProcessed(static_cast<int64_t>(state.iterations() * bytes.size()));
}
BENCHMARK(BM_ParseRandomBytes)->Range(64, 64 << 10);

}  // namespace
