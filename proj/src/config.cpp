#include "icleval/config.hpp"

#include "icleval/digest.hpp"
#include "icleval/error.hpp"

#include <fmt/format.h>

#include <fstream>
#include <set>

namespace icleval {

using nlohmann::json;

BackendType parse_backend_type(std::string_view name) {
  if (name == "mock") return BackendType::kMock;
  if (name == "remote") return BackendType::kRemote;
  throw ConfigError(fmt::format("unknown backend '{}' (mock, remote)", name));
}

namespace {

// Collects diagnostics so a bad config reports every problem at once.
class Reader {
 public:
  void error(std::string msg) { errors_.push_back(std::move(msg)); }

  void check_keys(const json& obj, const std::string& where, std::initializer_list<std::string_view> allowed) {
    if (!obj.is_object()) {
      error(fmt::format("{}: expected an object", where));
      return;
    }
    for (const auto& [key, _] : obj.items()) {
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) error(fmt::format("{}.{}: unknown key", where, key));
    }
  }

  template <typename T>
  std::optional<T> get(const json& obj, const std::string& where, const std::string& key) {
    if (!obj.is_object() || !obj.contains(key) || obj[key].is_null()) return std::nullopt;
    try {
      return obj[key].get<T>();
    } catch (const json::exception&) {
      error(fmt::format("{}.{}: wrong type ({})", where, key, obj[key].dump()));
      return std::nullopt;
    }
  }

  std::optional<std::size_t> count(const json& obj, const std::string& where, const std::string& key) {
    if (!obj.is_object() || !obj.contains(key) || obj[key].is_null()) return std::nullopt;
    if (!obj[key].is_number_integer() || obj[key].get<long long>() < 0) {
      error(fmt::format("{}.{}: expected a non-negative integer", where, key));
      return std::nullopt;
    }
    return obj[key].get<std::size_t>();
  }

  template <typename F>
  void attempt(const std::string& where, F&& f) {
    try {
      f();
    } catch (const Error& e) {
      error(fmt::format("{}: {}", where, e.what()));
    }
  }

  void finish() const {
    if (errors_.empty()) return;
    std::string msg = "invalid config:";
    for (const auto& e : errors_) msg += "\n  " + e;
    throw ConfigError(msg);
  }

 private:
  std::vector<std::string> errors_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

}  // namespace

ExperimentConfig parse_experiment_config(const json& j, const std::filesystem::path& base_dir,
                                         const ConfigOverrides& overrides) {
  Reader rd;
  ExperimentConfig c;
  c.base_dir = base_dir;
  c.raw = j;
  rd.check_keys(j, "config", {"dataset", "template", "run", "backend", "output", "analytics", "verify"});

  // dataset
  const json ds = j.value("dataset", json::object());
  if (!j.contains("dataset")) rd.error("dataset: block is required");
  rd.check_keys(ds, "dataset", {"name", "format", "train", "eval", "text_fields", "label", "id", "classes"});
  c.dataset_name = rd.get<std::string>(ds, "dataset", "name").value_or("dataset");
  if (auto train = rd.get<std::string>(ds, "dataset", "train")) {
    c.train_path = resolve(base_dir, *train);
    c.raw["dataset"]["train"] = c.train_path.string();
  } else {
    rd.error("dataset.train: required");
  }
  if (auto eval = rd.get<std::string>(ds, "dataset", "eval")) {
    c.eval_path = resolve(base_dir, *eval);
    c.raw["dataset"]["eval"] = c.eval_path.string();
  } else {
    rd.error("dataset.eval: required");
  }
  if (auto fmt_name = rd.get<std::string>(ds, "dataset", "format")) {
    rd.attempt("dataset.format", [&] { c.format = parse_file_format(*fmt_name); });
  } else {
    c.format = infer_file_format(c.train_path);
  }
  if (ds.contains("text_fields") && ds["text_fields"].is_array()) {
    for (const auto& f : ds["text_fields"]) {
      if (f.is_string()) {
        c.schema.text_fields.push_back({f.get<std::string>(), f.get<std::string>()});
      } else if (f.is_object() && f.contains("name") && f.contains("key") && f["name"].is_string() && f["key"].is_string()) {
        rd.check_keys(f, "dataset.text_fields[]", {"name", "key"});
        c.schema.text_fields.push_back({f["name"].get<std::string>(), f["key"].get<std::string>()});
      } else {
        rd.error("dataset.text_fields: entries must be strings or {\"name\",\"key\"} objects");
      }
    }
  } else {
    rd.error("dataset.text_fields: required list");
  }
  c.schema.label_key = rd.get<std::string>(ds, "dataset", "label").value_or("label");
  c.schema.id_key = rd.get<std::string>(ds, "dataset", "id");
  c.schema.classes = rd.get<std::vector<std::string>>(ds, "dataset", "classes").value_or(std::vector<std::string>{});
  rd.attempt("dataset", [&] { c.schema.validate(); });
  if (c.schema.classes.size() < 2) rd.error("dataset.classes: at least two classes are required");

  // template
  const json tj = j.value("template", json{{"preset", "single-text"}});
  rd.check_keys(tj, "template", {"preset", "file", "instruction", "exemplar_format", "query_format", "separator"});
  if (tj.contains("preset")) {
    const auto preset = rd.get<std::string>(tj, "template", "preset").value_or("");
    if (preset == "single-text") c.tmpl = single_text_template();
    else if (preset == "text-pair") c.tmpl = text_pair_template();
    else rd.error(fmt::format("template.preset: unknown preset '{}' (single-text, text-pair)", preset));
  } else if (tj.contains("file")) {
    const auto file = resolve(base_dir, rd.get<std::string>(tj, "template", "file").value_or(""));
    c.raw["template"]["file"] = file.string();
    rd.attempt("template.file", [&] { c.tmpl = load_template(file); });
  } else {
    c.tmpl.instruction = rd.get<std::string>(tj, "template", "instruction").value_or("");
    c.tmpl.exemplar_format = rd.get<std::string>(tj, "template", "exemplar_format").value_or("");
    c.tmpl.query_format = rd.get<std::string>(tj, "template", "query_format").value_or("");
    c.tmpl.separator = rd.get<std::string>(tj, "template", "separator").value_or("\n\n");
  }
  {
    const auto names = c.schema.field_names();
    rd.attempt("template", [&] { c.tmpl.validate(names); });
  }

  // run
  const json rj = j.value("run", json::object());
  rd.check_keys(rj, "run", {"K", "P", "trials", "seed", "eval_subsample", "cache", "cache_file", "concurrency",
                            "permutations", "support"});
  if (auto v = rd.count(rj, "run", "K")) c.run.k = *v;
  if (auto v = rd.count(rj, "run", "P")) c.run.permutations = *v;
  if (auto v = rd.count(rj, "run", "trials")) c.run.trials = *v;
  if (auto v = rd.get<std::uint64_t>(rj, "run", "seed")) c.run.seed = *v;
  if (auto v = rd.count(rj, "run", "eval_subsample")) c.run.eval_subsample = *v;
  if (auto v = rd.get<bool>(rj, "run", "cache")) c.run.cache = *v;
  if (auto v = rd.count(rj, "run", "concurrency")) c.run.concurrency = *v;
  if (auto v = rd.get<std::string>(rj, "run", "cache_file")) {
    c.cache_file = resolve(base_dir, *v);
    c.raw["run"]["cache_file"] = c.cache_file->string();
  }
  if (auto v = rd.get<std::string>(rj, "run", "permutations")) {
    if (*v == "random") c.run.permutation_source = PermutationSource::kRandom;
    else if (*v == "exhaustive") c.run.permutation_source = PermutationSource::kExhaustive;
    else rd.error(fmt::format("run.permutations: unknown value '{}' (random, exhaustive)", *v));
  }
  if (auto v = rd.get<std::vector<std::string>>(rj, "run", "support")) c.run.fixed_support = *v;
  if (overrides.seed) c.run.seed = *overrides.seed;
  rd.attempt("run", [&] { c.run.validate(); });

  // backend
  const json bj = j.value("backend", json::object());
  if (!j.contains("backend")) rd.error("backend: block is required");
  rd.check_keys(bj, "backend", {"type", "mock", "remote"});
  std::string type = overrides.backend.value_or(rd.get<std::string>(bj, "backend", "type").value_or("mock"));
  rd.attempt("backend.type", [&] { c.backend = parse_backend_type(type); });
  if (bj.contains("mock")) {
    rd.attempt("backend.mock", [&] {
      c.mock = MockModelSpec::from_json(bj["mock"]);
      c.mock->validate(c.schema.classes.size());
    });
  }
  if (bj.contains("remote")) {
    const json r = bj["remote"];
    rd.check_keys(r, "backend.remote", {"url", "model", "api_key_env", "max_in_flight", "retries", "backoff_ms",
                                        "timeout_s", "length_normalize", "candidate_prefix", "max_prompt_chars",
                                        "audit_log"});
    RemoteConfig rc;
    rc.url = rd.get<std::string>(r, "backend.remote", "url").value_or("");
    rc.model = rd.get<std::string>(r, "backend.remote", "model").value_or("");
    rc.api_key_env = rd.get<std::string>(r, "backend.remote", "api_key_env").value_or("");
    if (auto v = rd.get<int>(r, "backend.remote", "max_in_flight")) rc.max_in_flight = *v;
    if (auto v = rd.get<int>(r, "backend.remote", "retries")) rc.retries = *v;
    if (auto v = rd.get<int>(r, "backend.remote", "backoff_ms")) rc.backoff_ms = *v;
    if (auto v = rd.get<double>(r, "backend.remote", "timeout_s")) rc.timeout_s = *v;
    if (auto v = rd.get<bool>(r, "backend.remote", "length_normalize")) rc.length_normalize = *v;
    if (auto v = rd.get<std::string>(r, "backend.remote", "candidate_prefix")) rc.candidate_prefix = *v;
    if (auto v = rd.count(r, "backend.remote", "max_prompt_chars")) rc.max_prompt_chars = *v;
    if (auto v = rd.get<std::string>(r, "backend.remote", "audit_log")) {
      rc.audit_log = resolve(base_dir, *v);
      c.raw["backend"]["remote"]["audit_log"] = rc.audit_log->string();
    }
    rd.attempt("backend.remote", [&] { rc.validate(); });
    c.remote = rc;
  }
  if (c.backend == BackendType::kMock && !c.mock && !bj.contains("mock")) rd.error("backend.mock: required when type is mock");
  if (c.backend == BackendType::kRemote && !bj.contains("remote")) rd.error("backend.remote: required when type is remote");

  // output
  const json oj = j.value("output", json::object());
  rd.check_keys(oj, "output", {"dir"});
  c.output_dir = resolve(base_dir, rd.get<std::string>(oj, "output", "dir").value_or("out"));
  if (overrides.output_dir) c.output_dir = std::filesystem::absolute(*overrides.output_dir).lexically_normal();
  c.raw["output"]["dir"] = c.output_dir.string();

  // analytics
  const json aj = j.value("analytics", json::object());
  rd.check_keys(aj, "analytics", {"mu_mode", "z_threshold", "set_size"});
  if (auto v = overrides.mu_mode ? overrides.mu_mode : rd.get<std::string>(aj, "analytics", "mu_mode")) {
    rd.attempt("analytics.mu_mode", [&] { c.mu_mode = parse_exemplar_mean_mode(*v); });
  }
  if (auto v = rd.get<double>(aj, "analytics", "z_threshold")) c.z_threshold = *v;
  if (auto v = rd.count(aj, "analytics", "set_size")) c.set_size = *v;
  if (c.z_threshold < 0) rd.error("analytics.z_threshold: must be >= 0");
  if (c.set_size < 1) rd.error("analytics.set_size: must be >= 1");

  // verify
  const json vj = j.value("verify", json::object());
  rd.check_keys(vj, "verify", {"tolerance", "sigmas", "max_k"});
  c.verify_tolerance.absolute = rd.get<double>(vj, "verify", "tolerance");
  if (auto v = rd.get<double>(vj, "verify", "sigmas")) c.verify_tolerance.sigmas = *v;
  if (auto v = rd.count(vj, "verify", "max_k")) c.oracle_max_k = *v;

  rd.finish();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path, const ConfigOverrides& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("config '{}': {}", path.string(), e.what()));
  }
  return parse_experiment_config(j, std::filesystem::absolute(path).parent_path(), overrides);
}

Dataset load_experiment_dataset(const ExperimentConfig& config) {
  Dataset d = load_dataset(config.dataset_name, config.train_path, config.eval_path, config.format, config.schema);
  if (config.run.k > d.train.size()) {
    throw ConfigError(fmt::format("run.K={} exceeds the train split size {}", config.run.k, d.train.size()));
  }
  return d;
}

std::unique_ptr<Backend> make_backend(const ExperimentConfig& config, const Dataset& dataset) {
  if (config.backend == BackendType::kMock) return std::make_unique<MockBackend>(config.mock.value_or(MockModelSpec{}), dataset);
  return std::make_unique<RemoteBackend>(*config.remote);
}

std::string experiment_digest(const ExperimentConfig& config, const Dataset& dataset, const Backend& backend) {
  return Sha256()
      .update_field(config.run.digest())
      .update_field(dataset_digest(dataset))
      .update_field(config.tmpl.digest())
      .update_field(backend.identity())
      .hex_digest();
}

}  // namespace icleval
