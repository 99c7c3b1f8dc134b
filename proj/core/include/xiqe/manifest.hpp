#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string_view>

#include "xiqe/backend.hpp"
#include "xiqe/orchestrator.hpp"
#include "xiqe/prompts.hpp"

namespace xiqe {

// A run manifest: JSON naming the dataset, the result store, the backend and
// every knob of the run plan. Relative paths resolve against the manifest's
// directory. The HTTP auth token is read from XIQE_API_KEY when the manifest
// does not carry one.
//
//   {
//     "dataset": "dataset.jsonl",
//     "results": "results.jsonl",
//     "backend": {"kind": "mock" | "http", "endpoint": "...", "model_name": "...",
//                 "http": {"retries": 3, "backoff_ms": 1000},
//                 "mock": {"script": "...", "faults": {"fidelity": "NoScore"},
//                          "sample_faults": {"<id>": {"alignment": "Timeout"}}}},
//     "session": {"temperature": 0.1, "decoding_width": 1,
//                 "max_reply_tokens": 512, "timeout_s": 60},
//     "variant": "main" | {"fidelity": "baseline", ...},
//     "tasks": ["fidelity", "alignment", "aesthetics"],
//     "ablation_mode": false, "repeats": 1, "continue_rounds": 2,
//     "workers": 4, "max_in_flight": 4, "seed": 0,
//     "prompt_pack": "prompts.txt", "record_timestamps": false,
//     "stop_on_inconsistent": true,
//     "external_metrics": "baselines.csv"
//   }
struct Manifest {
  std::filesystem::path dataset;
  std::filesystem::path results;
  std::optional<std::filesystem::path> external_metrics;
  RunPlan plan;  // samples are filled by ingest
  MockOptions mock;
  // Owns a custom prompt pack; plan.prompts and mock.prompts point here.
  std::shared_ptr<const PromptSet> prompt_pack;
};

// Throws Error(InvalidConfig) for unknown keys or bad values.
Manifest parse_manifest(std::string_view json_text,
                        const std::filesystem::path& base_dir);
Manifest load_manifest(const std::filesystem::path& path);

}  // namespace xiqe
