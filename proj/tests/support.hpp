#pragma once

// Shared helpers for the unit and acceptance tests.

#include <array>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "xiqe/orchestrator.hpp"

namespace xiqe::testing {

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "xiqe-test-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Smallest byte string the backends accept as a PNG.
inline std::string fake_png() {
  return std::string("\x89PNG\r\n\x1a\n", 8) + std::string(24, '\0');
}

// `n` samples spread round-robin over `tags`; every fifth sample is real.
inline std::vector<ImageSample> synthetic_samples(std::size_t n,
                                                  const std::vector<std::string>& tags) {
  std::vector<ImageSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    ImageSample s;
    s.id = "img-" + std::to_string(i);
    s.image_ref = "images/" + s.id + ".png";
    s.caption = "a photo of object " + std::to_string(i) + " on a table";
    s.model_tag = tags[i % tags.size()];
    s.is_real = i % 5 == 0;
    out.push_back(std::move(s));
  }
  return out;
}

// Mock plan over in-memory images.
inline RunPlan mock_plan(std::vector<ImageSample> samples) {
  RunPlan plan;
  plan.samples = std::move(samples);
  plan.backend.kind = BackendKind::Mock;
  plan.load_image = [](const ImageSample&) { return fake_png(); };
  return plan;
}

// Hand-built, well-formed record with one prompt/reply pair per task. A
// negative score marks the task as failed with NoScore; nullopt skips it.
inline EvaluationRecord make_record(const std::string& id, const std::string& tag,
                                    std::optional<int> fidelity,
                                    std::optional<int> alignment,
                                    std::optional<int> aesthetics,
                                    bool is_real = false, int repeat = 0) {
  EvaluationRecord rec;
  rec.sample = {id, "images/" + id + ".png", "a caption for " + id, tag, is_real};
  rec.run.repeat_index = repeat;
  rec.run.seed = 1;
  const std::array<std::optional<int>, 3> scores{fidelity, alignment, aesthetics};
  bool first = true;
  for (auto task : kAllTasks) {
    const auto& s = scores[static_cast<std::size_t>(task)];
    if (!s) continue;
    TaskResult r;
    r.task = task;
    r.template_id = std::string(to_string(task)) + ".main";
    r.session_id = id + "#" + std::to_string(repeat);
    r.transcript.push_back({Role::User, "prompt", first});
    first = false;
    if (*s >= 0) {
      ParsedScore p{*s, denominator_for(task), task, false};
      r.transcript.push_back({Role::Assistant, p.to_string(), false});
      r.outcome.score = p;
      if (task == TaskKind::Aesthetics) {
        r.aesthetics.emplace();
        r.aesthetics->overall = p;
      }
    } else {
      r.transcript.push_back({Role::Assistant, "unclear", false});
      r.outcome.failure = FailureKind::NoScore;
    }
    rec.task(task) = std::move(r);
  }
  return rec;
}

// 100 records for `tag` whose task means equal hundredths[i] / 100 exactly:
// each task mixes two adjacent integer scores.
inline std::vector<EvaluationRecord> records_with_means(const std::string& tag,
                                                        std::array<int, 3> hundredths) {
  std::vector<EvaluationRecord> out;
  for (int i = 0; i < 100; ++i) {
    std::array<int, 3> s{};
    for (std::size_t t = 0; t < 3; ++t) {
      const int base = hundredths[t] / 100;
      s[t] = base + (i < hundredths[t] % 100 ? 1 : 0);
    }
    out.push_back(make_record(tag + "-" + std::to_string(i), tag, s[0], s[1], s[2]));
  }
  return out;
}

}  // namespace xiqe::testing
