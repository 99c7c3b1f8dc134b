// xiqe: run, score and report explainable image-quality evaluations.
//
//   xiqe run <manifest.json> [--results PATH] [--resume] [overrides...]
//   xiqe stats <results.jsonl> --metric recall|pearson|alpha|ks [...]
//   xiqe report <results.jsonl> [--format md|csv|json] [--external CSV]
//   xiqe validate <dataset.jsonl>
//   xiqe corpus-check [--file corpus.jsonl]
//
// Exit status: 0 success, 1 usage or data error, 2 the backend refused or
// could not be reached, 3 a check failed.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "xiqe/corpus.hpp"
#include "xiqe/error.hpp"
#include "xiqe/manifest.hpp"
#include "xiqe/orchestrator.hpp"
#include "xiqe/report.hpp"
#include "xiqe/stats.hpp"
#include "xiqe/store.hpp"

namespace {

using namespace xiqe;

constexpr int kExitData = 1;
constexpr int kExitBackend = 2;
constexpr int kExitCheck = 3;

TaskKind parse_task(const std::string& name) {
  auto t = task_from_string(name);
  if (!t) throw Error(Errc::InvalidConfig, "unknown task '" + name + "'");
  return *t;
}

// ---------------------------------------------------------------------------
// run

struct RunArgs {
  std::string manifest;
  std::optional<std::string> results;
  std::optional<double> temperature;
  std::optional<int> repeats;
  std::optional<std::string> variant;
  std::optional<int> continue_rounds;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  bool resume = false;
  bool quiet = false;
};

int cmd_run(const RunArgs& a) {
  auto m = load_manifest(a.manifest);
  auto& plan = m.plan;
  if (a.results) m.results = *a.results;
  if (a.temperature) plan.session.temperature = *a.temperature;
  if (a.repeats) plan.repeats = *a.repeats;
  if (a.variant) {
    auto v = variant_from_string(*a.variant);
    if (!v) throw Error(Errc::UnknownVariant, "unknown variant '" + *a.variant + "'");
    plan.variants.fill(*v);
  }
  if (a.continue_rounds) {
    plan.retry.continue_rounds = *a.continue_rounds;
    plan.retry.per_task.clear();
  }
  if (a.workers) plan.workers = plan.max_in_flight = *a.workers;
  if (a.seed) plan.seed = *a.seed;

  IngestOptions ingest;
  ingest.require_captions = plan.enabled(TaskKind::Alignment);
  plan.samples = ingest_dataset(m.dataset, ingest).samples;
  plan.validate();

  if (m.results.has_parent_path()) std::filesystem::create_directories(m.results.parent_path());
  ResultStore store(m.results);
  auto backend = make_backend(plan.backend, m.mock);
  DatasetRunOptions opts;
  opts.store = &store;
  opts.resume = a.resume;
  std::size_t done = 0;
  const std::size_t total = plan.samples.size() * static_cast<std::size_t>(plan.repeats);
  if (!a.quiet) {
    opts.on_record = [&](const EvaluationRecord& r) {
      ++done;
      std::fprintf(stderr, "[%zu/%zu] %s#%d\n", done, total, r.sample.id.c_str(),
                   r.run.repeat_index);
    };
  }
  const auto report = evaluate_dataset(plan, *backend, opts);
  std::cout << report.to_text() << "results: " << m.results.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// stats

struct StatsArgs {
  std::string results;
  std::string metric;
  std::string task = "fidelity";
  std::optional<std::string> against;
  int threshold = 4;
  int repeat = 0;
};

int cmd_stats(const StatsArgs& a) {
  const auto records = ResultStore(a.results).load();
  const TaskKind task = parse_task(a.task);
  if (a.metric == "recall") {
    std::cout << "recall_generated(threshold=" << a.threshold
              << ") = " << format_fixed(stats::recall_generated(records, a.threshold), 4)
              << "\n";
  } else if (a.metric == "alpha") {
    const auto m = stats::reliability_from_records(records, task);
    std::cout << "krippendorff_alpha(" << a.task << ", raters=" << m.raters()
              << ", units=" << m.units()
              << ") = " << format_fixed(stats::krippendorff_alpha(m), 4) << "\n";
  } else if (a.metric == "pearson") {
    if (!a.against) throw Error(Errc::InvalidConfig, "pearson needs --against <results>");
    const auto other = ResultStore(*a.against).load();
    const auto r = stats::pearson(stats::scores_from_records(records, task, a.repeat),
                                  stats::scores_from_records(other, task, a.repeat));
    std::cout << "pearson(" << a.task << ", pairs=" << r.pairs << ", dropped=" << r.dropped
              << ") = " << format_fixed(r.r, 4) << "\n";
  } else if (a.metric == "ks") {
    // Real vs generated images of one store, or all images of two stores.
    std::vector<double> lhs, rhs;
    auto collect = [&](const std::vector<EvaluationRecord>& recs, std::vector<double>& real,
                       std::vector<double>& generated) {
      for (const auto& r : recs) {
        if (r.run.repeat_index != a.repeat) continue;
        if (auto s = r.score(task)) (r.sample.is_real ? real : generated).push_back(s->value());
      }
    };
    if (a.against) {
      collect(records, lhs, lhs);
      collect(ResultStore(*a.against).load(), rhs, rhs);
    } else {
      collect(records, lhs, rhs);
    }
    const auto ks = stats::ks_two_sample(lhs, rhs);
    std::cout << "ks(" << a.task << ", n=" << lhs.size() << "/" << rhs.size()
              << ") D = " << format_fixed(ks.d, 4) << ", p = " << format_fixed(ks.p, 4)
              << "\n";
  } else {
    throw Error(Errc::InvalidConfig, "unknown metric '" + a.metric + "'");
  }
  return 0;
}

// ---------------------------------------------------------------------------
// report

struct ReportArgs {
  std::string results;
  std::string format = "md";
  std::optional<std::string> external;
  std::optional<std::string> order_by;
  std::optional<std::string> output;
  int threshold = 4;
};

int cmd_report(const ReportArgs& a) {
  const auto fmt = report_format_from_string(a.format);
  if (!fmt) throw Error(Errc::InvalidConfig, "unknown format '" + a.format + "'");
  std::optional<ExternalMetrics> ext;
  if (a.external) ext = ingest_external_metrics(*a.external);
  AggregateOptions opts;
  opts.external = ext ? &*ext : nullptr;
  opts.order_by = a.order_by;
  const auto text =
      render_report(build_report_input(ResultStore(a.results).load(), opts, a.threshold), *fmt);
  if (a.output) {
    std::ofstream out(*a.output, std::ios::binary);
    out << text;
    if (!out) throw Error(Errc::InvalidConfig, "cannot write " + *a.output);
  } else {
    std::cout << text;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// validate / corpus-check

int cmd_validate(const std::string& path, bool captions_optional) {
  IngestOptions opts;
  opts.require_captions = !captions_optional;
  try {
    const auto ds = ingest_dataset(path, opts);
    std::map<std::string, std::size_t> by_tag;
    for (const auto& s : ds.samples) ++by_tag[s.model_tag];
    std::cout << path << ": " << ds.samples.size() << " samples\n";
    for (const auto& [tag, n] : by_tag) std::cout << "  " << tag << ": " << n << "\n";
    return 0;
  } catch (const DatasetError& e) {
    constexpr std::size_t kShown = 20;
    const auto& issues = e.issues();
    for (std::size_t i = 0; i < std::min(issues.size(), kShown); ++i) {
      std::cerr << path << ":" << issues[i].line << ": " << to_string(issues[i].code)
                << ": " << issues[i].message << "\n";
    }
    if (issues.size() > kShown) {
      std::cerr << "... and " << issues.size() - kShown << " more\n";
    }
    return kExitCheck;
  }
}

int cmd_corpus_check(const std::optional<std::string>& file, bool verbose) {
  const auto corpus = file ? parse_corpus(read_file(*file)) : builtin_corpus();
  std::size_t agree = 0;
  for (const auto& entry : corpus) {
    const auto v = check_corpus_entry(entry);
    if (v.agrees) ++agree;
    if (!v.agrees || verbose) {
      std::cout << (v.agrees ? "ok   " : "DIFF ") << entry.id << ": expected " << v.expected
                << ", got " << v.actual << "\n";
    }
  }
  std::cout << agree << "/" << corpus.size() << " entries agree\n";
  return agree == corpus.size() ? 0 : kExitCheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explainable image-quality evaluation harness"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Evaluate every sample named by a manifest");
  run_cmd->add_option("manifest", run.manifest, "Run manifest (JSON)")->required();
  run_cmd->add_option("--results", run.results, "Result store (overrides the manifest)");
  run_cmd->add_option("--temperature", run.temperature, "Sampling temperature")
      ->check(CLI::Range(kMinTemperature, kMaxTemperature));
  run_cmd->add_option("--repeats", run.repeats, "Runs per image")->check(CLI::PositiveNumber);
  run_cmd->add_option("--variant", run.variant, "Prompt variant for every task");
  run_cmd->add_option("--continue-rounds", run.continue_rounds,
                      "Continue prompts after an unscored reply")
      ->check(CLI::NonNegativeNumber);
  run_cmd->add_option("--workers", run.workers, "Concurrent sessions")
      ->check(CLI::PositiveNumber);
  run_cmd->add_option("--seed", run.seed, "Base seed");
  run_cmd->add_flag("--resume", run.resume, "Skip records already in the store");
  run_cmd->add_flag("-q,--quiet", run.quiet, "No per-record progress");

  StatsArgs st;
  auto* stats_cmd = app.add_subcommand("stats", "Compute one statistic over a result store");
  stats_cmd->add_option("results", st.results, "Result store")->required();
  stats_cmd->add_option("--metric", st.metric, "recall | pearson | alpha | ks")
      ->required()
      ->check(CLI::IsMember({"recall", "pearson", "alpha", "ks"}));
  stats_cmd->add_option("--task", st.task, "fidelity | alignment | aesthetics");
  stats_cmd->add_option("--against", st.against, "Second result store (pearson, ks)");
  stats_cmd->add_option("--threshold", st.threshold, "Recall threshold on fidelity");
  stats_cmd->add_option("--repeat", st.repeat, "Repeat index (pearson, ks)");

  ReportArgs rep;
  auto* report_cmd = app.add_subcommand("report", "Render the benchmark report");
  report_cmd->add_option("results", rep.results, "Result store")->required();
  report_cmd->add_option("--format", rep.format, "md | csv | json");
  report_cmd->add_option("--external", rep.external, "Published baseline metrics (CSV)");
  report_cmd->add_option("--order-by", rep.order_by, "Order rows by an external column");
  report_cmd->add_option("--threshold", rep.threshold, "Recall threshold on fidelity");
  report_cmd->add_option("-o,--output", rep.output, "Write to a file instead of stdout");

  std::string dataset;
  bool captions_optional = false;
  auto* validate_cmd = app.add_subcommand("validate", "Check a dataset file");
  validate_cmd->add_option("dataset", dataset, "Dataset (JSON lines)")->required();
  validate_cmd->add_flag("--no-captions", captions_optional, "Captions are optional");

  std::optional<std::string> corpus_file;
  bool verbose = false;
  auto* corpus_cmd =
      app.add_subcommand("corpus-check", "Classify the parser corpus and report disagreements");
  corpus_cmd->add_option("--file", corpus_file, "Corpus (JSON lines); default: built in");
  corpus_cmd->add_flag("-v,--verbose", verbose, "List every entry");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) return cmd_run(run);
    if (*stats_cmd) return cmd_stats(st);
    if (*report_cmd) return cmd_report(rep);
    if (*validate_cmd) return cmd_validate(dataset, captions_optional);
    if (*corpus_cmd) return cmd_corpus_check(corpus_file, verbose);
  } catch (const DatasetError& e) {
    for (const auto& issue : e.issues()) {
      std::cerr << "line " << issue.line << ": " << issue.message << "\n";
    }
    return kExitData;
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    const bool backend = e.code() == Errc::AuthFailed || e.code() == Errc::BackendUnreachable;
    return backend ? kExitBackend : kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
