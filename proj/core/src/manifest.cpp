#include "xiqe/manifest.hpp"

#include <cmath>
#include <cstdlib>
#include <set>

#include <nlohmann/json.hpp>

#include "xiqe/error.hpp"
#include "xiqe/store.hpp"

namespace xiqe {

using json = nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& what) {
  throw Error(Errc::InvalidConfig, "manifest: " + what);
}

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) bad(where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items()) {
    if (!ok.count(key)) bad("unknown key '" + key + "' in " + where);
  }
}

std::string get_string(const json& obj, const char* key) {
  const auto& v = obj.at(key);
  if (!v.is_string()) bad(std::string(key) + " must be a string");
  return v.get<std::string>();
}

int get_int(const json& obj, const char* key) {
  const auto& v = obj.at(key);
  if (!v.is_number_integer()) bad(std::string(key) + " must be an integer");
  return v.get<int>();
}

double get_number(const json& obj, const char* key) {
  const auto& v = obj.at(key);
  if (!v.is_number()) bad(std::string(key) + " must be a number");
  return v.get<double>();
}

bool get_bool(const json& obj, const char* key) {
  const auto& v = obj.at(key);
  if (!v.is_boolean()) bad(std::string(key) + " must be a boolean");
  return v.get<bool>();
}

std::filesystem::path resolve(const std::filesystem::path& base,
                              const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

TaskKind task_named(const std::string& name) {
  auto t = task_from_string(name);
  if (!t) bad("unknown task '" + name + "'");
  return *t;
}

FaultPlan parse_faults(const json& obj) {
  if (!obj.is_object()) bad("faults must be an object");
  FaultPlan plan;
  for (const auto& [name, kind] : obj.items()) {
    if (!kind.is_string()) bad("fault kind must be a string");
    auto f = failure_from_string(kind.get<std::string>());
    if (!f) bad("unknown failure kind '" + kind.get<std::string>() + "'");
    plan[task_named(name)] = *f;
  }
  return plan;
}

PromptVariant variant_named(const std::string& name) {
  auto v = variant_from_string(name);
  if (!v) throw Error(Errc::UnknownVariant, "manifest: unknown variant '" + name + "'");
  return *v;
}

void parse_backend(const json& b, Manifest& m, const std::filesystem::path& base) {
  check_keys(b, "backend", {"kind", "endpoint", "model_name", "auth_token", "http", "mock"});
  auto& desc = m.plan.backend;
  if (b.contains("kind")) {
    const auto kind = get_string(b, "kind");
    if (kind == "mock") {
      desc.kind = BackendKind::Mock;
    } else if (kind == "http") {
      desc.kind = BackendKind::Http;
    } else {
      bad("unknown backend kind '" + kind + "'");
    }
  }
  if (b.contains("endpoint")) desc.endpoint = get_string(b, "endpoint");
  if (b.contains("model_name")) desc.model_name = get_string(b, "model_name");
  if (b.contains("auth_token")) desc.auth_token = get_string(b, "auth_token");
  if (b.contains("http")) {
    const auto& h = b["http"];
    check_keys(h, "backend.http", {"retries", "backoff_ms"});
    if (h.contains("retries")) desc.http.transport_retries = get_int(h, "retries");
    if (h.contains("backoff_ms")) {
      desc.http.backoff_initial = std::chrono::milliseconds(get_int(h, "backoff_ms"));
    }
  }
  if (b.contains("mock")) {
    const auto& mk = b["mock"];
    check_keys(mk, "backend.mock", {"script", "faults", "sample_faults"});
    if (mk.contains("script")) {
      m.mock.script = MockScript::load_file(resolve(base, get_string(mk, "script")).string());
    }
    if (mk.contains("faults")) m.mock.faults = parse_faults(mk["faults"]);
    if (mk.contains("sample_faults")) {
      if (!mk["sample_faults"].is_object()) bad("sample_faults must be an object");
      for (const auto& [id, faults] : mk["sample_faults"].items()) {
        m.mock.sample_faults[id] = parse_faults(faults);
      }
    }
  }
  if (desc.kind == BackendKind::Http && !desc.auth_token) {
    if (const char* key = std::getenv("XIQE_API_KEY"); key && *key) {
      desc.auth_token = std::string(key);
    }
  }
}

void parse_session(const json& s, SessionConfig& cfg) {
  check_keys(s, "session", {"temperature", "decoding_width", "max_reply_tokens", "timeout_s"});
  if (s.contains("temperature")) cfg.temperature = get_number(s, "temperature");
  if (s.contains("decoding_width")) cfg.decoding_width = get_int(s, "decoding_width");
  if (s.contains("max_reply_tokens")) cfg.max_reply_tokens = get_int(s, "max_reply_tokens");
  if (s.contains("timeout_s")) {
    const double t = get_number(s, "timeout_s");
    if (!(t > 0)) bad("timeout_s must be positive");
    cfg.timeout = std::chrono::milliseconds(static_cast<long long>(std::llround(t * 1000)));
  }
}

}  // namespace

Manifest parse_manifest(std::string_view json_text,
                        const std::filesystem::path& base_dir) {
  const auto doc = json::parse(json_text, nullptr, false);
  if (doc.is_discarded()) bad("not valid JSON");
  check_keys(doc, "manifest",
             {"dataset", "results", "backend", "session", "variant", "tasks",
              "ablation_mode", "repeats", "continue_rounds", "workers",
              "max_in_flight", "seed", "prompt_pack", "record_timestamps",
              "stop_on_inconsistent",
              "external_metrics"});

  Manifest m;
  auto& plan = m.plan;
  if (!doc.contains("dataset")) bad("missing 'dataset'");
  m.dataset = resolve(base_dir, get_string(doc, "dataset"));
  m.results = doc.contains("results") ? resolve(base_dir, get_string(doc, "results"))
                                      : base_dir / "results.jsonl";
  if (doc.contains("external_metrics")) {
    m.external_metrics = resolve(base_dir, get_string(doc, "external_metrics"));
  }

  if (doc.contains("prompt_pack")) {
    m.prompt_pack = std::make_shared<const PromptSet>(
        PromptSet::load_file(resolve(base_dir, get_string(doc, "prompt_pack")).string()));
    plan.prompts = m.prompt_pack.get();
    m.mock.prompts = m.prompt_pack.get();
  }
  if (doc.contains("backend")) parse_backend(doc["backend"], m, base_dir);
  if (doc.contains("session")) parse_session(doc["session"], plan.session);

  if (doc.contains("variant")) {
    const auto& v = doc["variant"];
    if (v.is_string()) {
      plan.variants.fill(variant_named(v.get<std::string>()));
    } else if (v.is_object()) {
      for (const auto& [task, name] : v.items()) {
        if (!name.is_string()) bad("variant names must be strings");
        plan.variants[static_cast<std::size_t>(task_named(task))] =
            variant_named(name.get<std::string>());
      }
    } else {
      bad("variant must be a string or an object");
    }
  }
  if (doc.contains("tasks")) {
    if (!doc["tasks"].is_array()) bad("tasks must be an array");
    plan.tasks_enabled = {false, false, false};
    for (const auto& t : doc["tasks"]) {
      if (!t.is_string()) bad("task names must be strings");
      plan.tasks_enabled[static_cast<std::size_t>(task_named(t.get<std::string>()))] = true;
    }
  }
  if (doc.contains("ablation_mode")) plan.ablation_mode = get_bool(doc, "ablation_mode");
  if (doc.contains("repeats")) plan.repeats = get_int(doc, "repeats");
  if (doc.contains("continue_rounds")) {
    const auto& c = doc["continue_rounds"];
    if (c.is_object()) {
      for (const auto& [task, n] : c.items()) {
        if (!n.is_number_integer()) bad("continue_rounds must be integers");
        plan.retry.per_task[task_named(task)] = n.get<int>();
      }
    } else {
      plan.retry.continue_rounds = get_int(doc, "continue_rounds");
    }
  }
  if (doc.contains("workers")) plan.workers = get_int(doc, "workers");
  if (doc.contains("max_in_flight")) plan.max_in_flight = get_int(doc, "max_in_flight");
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned()) bad("seed must be a non-negative integer");
    plan.seed = doc["seed"].get<std::uint64_t>();
  }
  if (doc.contains("stop_on_inconsistent")) {
    plan.retry.stop_on_inconsistent = get_bool(doc, "stop_on_inconsistent");
  }
  if (doc.contains("record_timestamps")) {
    plan.record_timestamps = get_bool(doc, "record_timestamps");
  }
  return m;
}

Manifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file(path), path.parent_path());
}

}  // namespace xiqe
