#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xiqe/backend.hpp"
#include "xiqe/datamodel.hpp"
#include "xiqe/parser.hpp"
#include "xiqe/prompts.hpp"
#include "xiqe/store.hpp"

namespace xiqe {

struct RetryPolicy {
  int continue_rounds = 2;
  std::map<TaskKind, int> per_task;
  // More turns cannot repair conflicting scores, so stop asking.
  bool stop_on_inconsistent = true;

  int rounds_for(TaskKind task) const;
};

using ImageLoader = std::function<std::string(const ImageSample&)>;

// Reads sample.image_ref from disk; throws Error(MissingImage).
std::string load_image_file(const ImageSample& sample);

struct RunPlan {
  std::vector<ImageSample> samples;
  BackendDescriptor backend;
  SessionConfig session;
  std::array<PromptVariant, 3> variants{PromptVariant::Main, PromptVariant::Main,
                                        PromptVariant::Main};
  std::array<bool, 3> tasks_enabled{true, true, true};
  // Allows task sets that skip earlier links of the chain.
  bool ablation_mode = false;
  int repeats = 1;
  RetryPolicy retry;
  int workers = 4;
  int max_in_flight = 4;
  std::uint64_t seed = 0;
  bool record_timestamps = false;
  FailureDetectorOptions detector;
  const PromptSet* prompts = &PromptSet::canonical();
  ImageLoader load_image = load_image_file;

  bool enabled(TaskKind task) const {
    return tasks_enabled[static_cast<std::size_t>(task)];
  }
  PromptVariant variant(TaskKind task) const {
    return variants[static_cast<std::size_t>(task)];
  }

  // Throws Error(InvalidConfig).
  void validate() const;
};

// Session seed for one (sample, repeat): depends on the sample id and not
// on its position in the dataset.
std::uint64_t session_seed(const RunPlan& plan, const ImageSample& sample,
                           int repeat_index);

// Runs the enabled tasks in chain order inside one session. Backend
// timeouts and errors become task failures; AuthFailed and
// BackendUnreachable propagate.
EvaluationRecord evaluate_image(const ImageSample& sample, const RunPlan& plan,
                                Backend& backend, int repeat_index = 0);

struct RunReport {
  std::size_t planned = 0;
  std::size_t skipped = 0;  // already in the store (resume)
  std::size_t evaluated = 0;
  std::array<std::map<FailureKind, std::size_t>, 3> failures;  // by task
  std::array<std::size_t, 3> scored{};

  std::string to_text() const;
};

struct DatasetRunOptions {
  ResultStore* store = nullptr;  // optional persistence
  bool resume = false;           // skip (sample, repeat) pairs in the store
  std::function<void(const EvaluationRecord&)> on_record;
};

// Evaluates every sample x repeat. Records are committed in plan order
// (repeat-major, then dataset order) even when evaluated concurrently.
RunReport evaluate_dataset(const RunPlan& plan, Backend& backend,
                           const DatasetRunOptions& options = {});

}  // namespace xiqe
