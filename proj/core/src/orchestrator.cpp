#include "xiqe/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <ctime>
#include <exception>
#include <filesystem>
#include <mutex>
#include <sstream>
#include <thread>

#include "xiqe/error.hpp"

namespace xiqe {

int RetryPolicy::rounds_for(TaskKind task) const {
  auto it = per_task.find(task);
  return it != per_task.end() ? it->second : continue_rounds;
}

std::string load_image_file(const ImageSample& sample) {
  if (!std::filesystem::is_regular_file(sample.image_ref)) {
    throw Error(Errc::MissingImage, "image not found: " + sample.image_ref);
  }
  return read_file(sample.image_ref);
}

void RunPlan::validate() const {
  backend.validate();
  session.validate();
  if (repeats < 1) throw Error(Errc::InvalidConfig, "repeats must be >= 1");
  if (workers < 1) throw Error(Errc::InvalidConfig, "workers must be >= 1");
  if (max_in_flight < 1) {
    throw Error(Errc::InvalidConfig, "max_in_flight must be >= 1");
  }
  if (retry.continue_rounds < 0) {
    throw Error(Errc::InvalidConfig, "continue_rounds must be >= 0");
  }
  for (const auto& [task, rounds] : retry.per_task) {
    if (rounds < 0) throw Error(Errc::InvalidConfig, "continue_rounds must be >= 0");
  }
  if (!prompts) throw Error(Errc::InvalidConfig, "no prompt set");
  if (!load_image) throw Error(Errc::InvalidConfig, "no image loader");
  if (std::none_of(tasks_enabled.begin(), tasks_enabled.end(),
                   [](bool b) { return b; })) {
    throw Error(Errc::InvalidConfig, "no task enabled");
  }
  if (!ablation_mode) {
    if (enabled(TaskKind::Alignment) && !enabled(TaskKind::Fidelity)) {
      throw Error(Errc::InvalidConfig,
                  "alignment requires fidelity earlier in the chain "
                  "(set ablation_mode to break the chain)");
    }
    if (enabled(TaskKind::Aesthetics) &&
        !(enabled(TaskKind::Fidelity) && enabled(TaskKind::Alignment))) {
      throw Error(Errc::InvalidConfig,
                  "aesthetics requires fidelity and alignment earlier in the "
                  "chain (set ablation_mode to break the chain)");
    }
  }
  for (auto task : kAllTasks) {
    if (enabled(task) && variant(task) == PromptVariant::Continue) {
      throw Error(Errc::InvalidConfig, "continue prompts cannot open a task");
    }
    if (enabled(task)) prompts->select(variant(task), task);
  }
}

std::uint64_t session_seed(const RunPlan& plan, const ImageSample& sample,
                           int repeat_index) {
  return mix_seed(mix_seed(plan.seed, hash_string(sample.id)),
                  static_cast<std::uint64_t>(repeat_index));
}

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

FailureKind failure_for(const Error& e) {
  return e.code() == Errc::Timeout ? FailureKind::Timeout
                                   : FailureKind::BackendError;
}

bool fatal(const Error& e) {
  return e.code() == Errc::AuthFailed || e.code() == Errc::BackendUnreachable ||
         e.code() == Errc::InvalidConfig;
}

void fail_all(EvaluationRecord& record, const RunPlan& plan,
              const std::string& session_id, FailureKind kind,
              const std::string& why) {
  for (auto task : kAllTasks) {
    if (!plan.enabled(task)) continue;
    TaskResult r;
    r.task = task;
    r.template_id = plan.prompts->select(plan.variant(task), task).id;
    r.session_id = session_id;
    r.outcome.failure = kind;
    r.diagnostics.push_back(why);
    record.task(task) = std::move(r);
  }
}

TaskResult run_task(TaskKind task, const ImageSample& sample,
                    const RunPlan& plan, ChatSession& session) {
  TaskResult result;
  result.task = task;
  result.session_id = session.id();
  const auto& tpl = plan.prompts->select(plan.variant(task), task);
  const auto& cont = plan.prompts->select(PromptVariant::Continue, task);
  result.template_id = tpl.id;

  const std::size_t history_start = session.history().size();
  const int rounds = plan.retry.rounds_for(task);

  std::string pending;  // prompt in flight, for the transcript on failure
  std::optional<FailureKind> transport_failure;
  try {
    pending = render(tpl, tpl.has_caption_slot()
                              ? std::optional<std::string>(sample.caption)
                              : std::nullopt);
    auto parse = parse_task_reply(task, session.send(pending));
    for (int round = 0; round < rounds; ++round) {
      if (parse.score) break;
      if (plan.retry.stop_on_inconsistent &&
          parse.failure == FailureKind::InconsistentResponses) {
        break;
      }
      pending = cont.body;
      parse = parse_task_reply(task, session.send(pending));
    }
    pending.clear();
  } catch (const Error& e) {
    if (fatal(e) || e.code() == Errc::MissingCaption) throw;
    transport_failure = failure_for(e);
    result.diagnostics.push_back(std::string(to_string(e.code())) + ": " +
                                 e.what());
  }

  const auto& history = session.history();
  result.transcript.assign(history.begin() + static_cast<std::ptrdiff_t>(history_start),
                           history.end());
  if (!pending.empty()) {
    result.transcript.push_back({Role::User, pending, history.empty()});
  }

  auto assessment = assess_transcript(task, result.transcript, plan.detector);
  for (std::size_t i = 0; i < assessment.replies.size(); ++i) {
    for (const auto& d : assessment.replies[i].diagnostics) {
      result.diagnostics.push_back("reply " + std::to_string(i + 1) + ": " + d);
    }
  }

  if (transport_failure && !assessment.score) {
    result.outcome.failure = transport_failure;
  } else if (assessment.score) {
    result.outcome.score = assessment.score;
  } else {
    result.outcome.failure = assessment.failure;
  }

  if (!assessment.replies.empty()) {
    const auto& source =
        assessment.replies[assessment.scoring_reply.value_or(
            assessment.replies.size() - 1)];
    result.analysis = source.analysis_fields;
    if (task == TaskKind::Aesthetics) {
      result.aesthetics = source.aesthetics;
      if (result.outcome.scored()) {
        if (!result.aesthetics) result.aesthetics.emplace();
        result.aesthetics->overall = result.outcome.score;
      } else if (result.aesthetics) {
        result.aesthetics->overall.reset();
      }
    }
  }
  return result;
}

}  // namespace

EvaluationRecord evaluate_image(const ImageSample& sample, const RunPlan& plan,
                                Backend& backend, int repeat_index) {
  EvaluationRecord record;
  record.sample = sample;
  auto& run = record.run;
  run.temperature = plan.session.temperature;
  run.decoding_width = plan.session.decoding_width;
  run.repeat_index = repeat_index;
  run.seed = session_seed(plan, sample, repeat_index);
  run.continue_rounds = plan.retry.continue_rounds;
  run.stop_on_inconsistent = plan.retry.stop_on_inconsistent;
  run.prompt_pack = plan.prompts->digest();
  run.backend = backend.describe();
  for (const auto& [task, rounds] : plan.retry.per_task) {
    if (plan.enabled(task)) run.continue_rounds = std::max(run.continue_rounds, rounds);
  }
  if (plan.record_timestamps) run.started_at = utc_now();

  SessionConfig cfg = plan.session;
  cfg.seed = run.seed;
  const SessionContext ctx{sample.id, repeat_index};

  std::unique_ptr<ChatSession> session;
  try {
    const std::string image = plan.load_image(sample);
    session = backend.open_session(image, cfg, ctx);
  } catch (const Error& e) {
    if (fatal(e)) throw;
    fail_all(record, plan, ctx.conversation_id(), FailureKind::BackendError,
             std::string(to_string(e.code())) + ": " + e.what());
    if (plan.record_timestamps) run.finished_at = utc_now();
    return record;
  }

  for (auto task : kAllTasks) {
    if (!plan.enabled(task)) continue;
    record.task(task) = run_task(task, sample, plan, *session);
  }
  if (plan.record_timestamps) run.finished_at = utc_now();
  return record;
}

std::string RunReport::to_text() const {
  std::ostringstream out;
  out << "planned " << planned << ", skipped " << skipped << ", evaluated "
      << evaluated << "\n";
  for (auto task : kAllTasks) {
    const auto idx = static_cast<std::size_t>(task);
    out << to_string(task) << ": scored " << scored[idx];
    for (const auto& [kind, n] : failures[idx]) {
      out << ", " << to_string(kind) << " " << n;
    }
    out << "\n";
  }
  return out.str();
}

RunReport evaluate_dataset(const RunPlan& plan, Backend& backend,
                           const DatasetRunOptions& options) {
  plan.validate();

  struct Job {
    const ImageSample* sample;
    int repeat;
  };
  std::set<RecordKey> done;
  if (options.store) {
    if (options.resume) {
      options.store->repair_tail();
      done = options.store->completed_keys();
    } else {
      options.store->truncate();
    }
  }

  RunReport report;
  std::vector<Job> jobs;
  for (int r = 0; r < plan.repeats; ++r) {
    for (const auto& s : plan.samples) {
      ++report.planned;
      if (done.count({s.id, r})) {
        ++report.skipped;
        continue;
      }
      jobs.push_back({&s, r});
    }
  }

  std::vector<std::optional<EvaluationRecord>> slots(jobs.size());
  std::size_t next_commit = 0;
  std::mutex mutex;
  std::atomic<std::size_t> next_job{0};
  std::atomic<bool> stop{false};
  std::exception_ptr first_error;

  auto commit_ready = [&] {
    // Caller holds `mutex`.
    while (next_commit < slots.size() && slots[next_commit]) {
      const EvaluationRecord& rec = *slots[next_commit];
      if (options.store) options.store->append(rec);
      if (options.on_record) options.on_record(rec);
      ++report.evaluated;
      for (auto task : kAllTasks) {
        const auto& t = rec.task(task);
        if (!t) continue;
        const auto idx = static_cast<std::size_t>(task);
        if (t->outcome.scored()) {
          ++report.scored[idx];
        } else if (t->outcome.failure) {
          ++report.failures[idx][*t->outcome.failure];
        }
      }
      slots[next_commit].reset();
      ++next_commit;
    }
  };

  auto worker = [&] {
    while (!stop.load()) {
      const std::size_t i = next_job.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        auto rec = evaluate_image(*jobs[i].sample, plan, backend, jobs[i].repeat);
        std::lock_guard lock(mutex);
        slots[i] = std::move(rec);
        commit_ready();
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!first_error) first_error = std::current_exception();
        stop.store(true);
        return;
      }
    }
  };

  const int n_threads = std::max(
      1, std::min({plan.workers, plan.max_in_flight,
                   static_cast<int>(std::max<std::size_t>(jobs.size(), 1))}));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  if (first_error) std::rethrow_exception(first_error);
  return report;
}

}  // namespace xiqe
