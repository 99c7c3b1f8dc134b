#include <benchmark/benchmark.h>

#include <string>

#include "xiqe/orchestrator.hpp"

namespace {

// Full three-task chain against the mock, per image.
void BM_MockRun(benchmark::State& state) {
  xiqe::RunPlan plan;
  for (int i = 0; i < state.range(0); ++i) {
    plan.samples.push_back({"img-" + std::to_string(i), "img.png",
                            "a photo of object " + std::to_string(i), "m", false});
  }
  plan.workers = static_cast<int>(state.range(1));
  plan.max_in_flight = plan.workers;
  const std::string png = std::string("\x89PNG\r\n\x1a\n", 8) + std::string(24, '\0');
  plan.load_image = [&](const xiqe::ImageSample&) { return png; };
  xiqe::MockBackend backend;
  for (auto _ : state) benchmark::DoNotOptimize(xiqe::evaluate_dataset(plan, backend));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MockRun)->UseRealTime()->Args({40, 1})->Args({40, 4})->Args({400, 4});

}  // namespace
