#include "icleval/commands.hpp"

#include "icleval/artifact_io.hpp"
#include "icleval/error.hpp"
#include "icleval/random.hpp"

#include <CLI11.hpp>
#include <fcntl.h>
#include <fmt/format.h>
#include <unistd.h>

#include <fstream>
#include <ostream>

namespace icleval {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Exclusive lock on an output directory for the lifetime of one command.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir) : path_(dir / ".icleval.lock") {
    fs::create_directories(dir);
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
      throw ConfigError(fmt::format("output directory '{}' is locked by another command (remove {} if stale)",
                                    dir.string(), path_.string()));
    }
    const auto pid = std::to_string(::getpid());
    [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
  }
  ~DirectoryLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  fs::path path_;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError(fmt::format("cannot write '{}'", path.string()));
  out << text;
}

template <typename Writer>
void write_with(const fs::path& path, Writer&& writer) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError(fmt::format("cannot write '{}'", path.string()));
  writer(out);
}

void write_reports(const fs::path& dir, const RunArtifact& artifact) {
  const auto curve = summarize_curve(artifact.records);
  write_text(dir / "curve.json", to_json(curve).dump(2) + "\n");
  write_with(dir / "curve.csv", [&](std::ostream& o) { write_curve_csv(o, curve); });
  write_with(dir / "plot_curve.csv", [&](std::ostream& o) { write_curve_plot_csv(o, curve); });
  write_with(dir / "plot_traces.csv", [&](std::ostream& o) { write_trace_csv(o, artifact.records); });
  write_with(dir / "plot_one_shot.csv", [&](std::ostream& o) { write_one_shot_csv(o, artifact.records); });
}

ExperimentConfig require_config(const CommandOptions& options) {
  if (!options.config) throw ConfigError("--config is required");
  return load_experiment_config(*options.config, options.overrides);
}

template <typename F>
int guarded(std::ostream& log, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << '\n';
    return exit_code::kConfig;
  } catch (const DataError& e) {
    log << "error: " << e.what() << '\n';
    return exit_code::kConfig;
  } catch (const OracleError& e) {
    log << "error: " << e.what() << '\n';
    return exit_code::kConfig;
  } catch (const SelectionError& e) {
    log << "error: " << e.what() << '\n';
    return exit_code::kSelection;
  } catch (const BackendError& e) {
    log << "error: " << e.what() << '\n';
    return exit_code::kBackend;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return exit_code::kFailed;
  }
}

}  // namespace

int cmd_run(const CommandOptions& options, std::ostream& log) {
  return guarded(log, [&] {
    const auto config = require_config(options);
    const Dataset dataset = load_experiment_dataset(config);
    const auto backend = make_backend(config, dataset);
    DirectoryLock lock(config.output_dir);

    std::optional<PredictionCache> cache;
    if (config.run.cache) {
      if (config.cache_file) cache.emplace(*config.cache_file);
      else cache.emplace(config.output_dir / "cache.jsonl");
    }

    const Checkpoint checkpoint(config.output_dir / "checkpoint.jsonl", experiment_digest(config, dataset, *backend));
    ExperimentHooks hooks;
    if (options.resume) {
      hooks.completed = checkpoint.load();
      log << fmt::format("resuming: {} completed trial(s) loaded from {}\n", hooks.completed.size(),
                         checkpoint.path().string());
    } else {
      fs::remove(checkpoint.path());
    }
    hooks.on_trial_complete = [&](const TrialOutput& t) {
      checkpoint.append(t);
      log << fmt::format("trial {} done ({} records)\n", t.support.trial, t.records.size());
    };

    RunArtifact artifact;
    try {
      artifact = run_experiment(config.run, dataset, *backend, config.tmpl, cache ? &*cache : nullptr, hooks);
    } catch (const BackendError& e) {
      log << "error: " << e.what() << '\n';
      log << fmt::format("completed trials are checkpointed in {}; rerun with --resume\n", checkpoint.path().string());
      return exit_code::kBackend;
    }

    write_records(config.output_dir / "records.jsonl", artifact);
    write_reports(config.output_dir, artifact);
    fs::remove(checkpoint.path());
    log << fmt::format("wrote {} records to {}\n", artifact.records.size(), (config.output_dir / "records.jsonl").string());
    return exit_code::kOk;
  });
}

int cmd_select(const CommandOptions& options, std::ostream& log) {
  return guarded(log, [&] {
    const auto config = require_config(options);
    const fs::path records_path = options.records.value_or(config.output_dir / "records.jsonl");
    const RunArtifact artifact = read_records(records_path);
    DirectoryLock lock(config.output_dir);

    ZScoreReport report;
    report.mode = config.mu_mode;
    report.threshold = config.z_threshold;
    report.set_size = config.set_size;
    for (const auto& means : per_example_average(artifact.records, artifact.provenance.support_sets, config.mu_mode)) {
      report.trials.push_back(trial_zscores(means));
    }
    // Per-exemplar scores are written even when selection turns out infeasible.
    auto write_scores = [&] {
      write_text(config.output_dir / "zscores.json", to_json(report).dump(2) + "\n");
      write_with(config.output_dir / "zscores.csv", [&](std::ostream& o) { write_zscores_csv(o, report); });
    };
    try {
      report.selection = select_extremes(report.trials, config.z_threshold, config.set_size);
    } catch (const SelectionError&) {
      write_scores();
      throw;
    }
    write_scores();

    // Random baseline of the same size, drawn from the full train split.
    const Dataset dataset = load_experiment_dataset(config);
    if (dataset.train.size() < config.set_size) throw ConfigError("train split smaller than the selection set size");
    const std::uint64_t baseline_seed = derive_seed(config.run.seed, SeedStream::kBaseline);
    Rng rng(baseline_seed);
    std::vector<std::string> baseline;
    for (std::size_t i : rng.sample_without_replacement(dataset.train.size(), config.set_size)) {
      baseline.push_back(dataset.train[i].id);
    }

    auto ids = [](const std::vector<PooledScore>& set) {
      std::vector<std::string> out;
      for (const auto& s : set) out.push_back(s.id);
      return out;
    };
    const fs::path followup_dir = config.output_dir / "followup";
    fs::create_directories(followup_dir);
    ordered_json selection;
    selection["records"] = fs::absolute(records_path).string();
    selection["mode"] = std::string(to_string(config.mu_mode));
    selection["threshold"] = config.z_threshold;
    selection["set_size"] = config.set_size;
    selection["high"] = ids(report.selection.high);
    selection["low"] = ids(report.selection.low);
    selection["random"] = baseline;
    selection["random_seed"] = baseline_seed;
    ordered_json followups;
    for (const auto& [name, members] : {std::pair{"high", ids(report.selection.high)},
                                        std::pair{"low", ids(report.selection.low)}, std::pair{"random", baseline}}) {
      nlohmann::json next = config.raw;
      next["run"]["K"] = config.set_size;
      next["run"]["trials"] = 1;
      next["run"]["support"] = members;
      next["run"].erase("cache_file");
      next["output"]["dir"] = (config.output_dir / "followup" / name).string();
      const fs::path path = followup_dir / (std::string(name) + ".json");
      write_text(path, next.dump(2) + "\n");
      followups[name] = path.string();
    }
    selection["followup_configs"] = followups;
    write_text(config.output_dir / "selection.json", selection.dump(2) + "\n");

    log << fmt::format("{} candidates with |z| > {}; high and low sets of {} written to {}\n", report.selection.candidates,
                       config.z_threshold, config.set_size, (config.output_dir / "selection.json").string());
    return exit_code::kOk;
  });
}

int cmd_verify(const CommandOptions& options, std::ostream& log) {
  return guarded(log, [&] {
    const auto config = require_config(options);
    if (config.backend != BackendType::kMock) throw ConfigError("verify requires the mock backend");
    if (config.run.k > config.oracle_max_k) {
      throw OracleError(fmt::format("K={} exceeds the oracle limit of {} (verify.max_k)", config.run.k, config.oracle_max_k));
    }
    const Dataset dataset = load_experiment_dataset(config);
    const auto backend = make_backend(config, dataset);
    DirectoryLock lock(config.output_dir);

    OracleOptions oracle;
    oracle.max_k = config.oracle_max_k;
    const auto report = verify_estimator(config.run, dataset, *backend, config.tmpl, config.verify_tolerance, oracle);
    write_text(config.output_dir / "verify.json", to_json(report).dump(2) + "\n");
    log << fmt::format("verify {}: max |error| = {} over {} rows\n", report.passed ? "PASS" : "FAIL",
                       report.max_abs_error, report.rows.size());
    return report.passed ? exit_code::kOk : exit_code::kFailed;
  });
}

int cmd_report(const CommandOptions& options, std::ostream& log) {
  return guarded(log, [&] {
    std::optional<ExperimentConfig> config;
    if (options.config) config = require_config(options);
    fs::path records_path;
    if (options.records) records_path = *options.records;
    else if (config) records_path = config->output_dir / "records.jsonl";
    else throw ConfigError("report needs --records or --config");

    fs::path out_dir;
    if (options.overrides.output_dir) out_dir = *options.overrides.output_dir;
    else if (config) out_dir = config->output_dir;
    else out_dir = records_path.parent_path().empty() ? fs::path(".") : records_path.parent_path();

    const RunArtifact artifact = read_records(records_path);
    DirectoryLock lock(out_dir);
    write_reports(out_dir, artifact);
    log << fmt::format("report tables written to {}\n", out_dir.string());
    return exit_code::kOk;
  });
}

int run_cli(int argc, char** argv, std::ostream& log) {
  CLI::App app{"Monte Carlo evaluation of in-context learning over exemplar orderings"};
  app.require_subcommand(1);

  CommandOptions options;
  std::string config_path;
  std::string out_path;
  std::string records_path;
  std::string backend;
  std::string mode;
  std::uint64_t seed = 0;

  auto common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", config_path, "experiment config (JSON)");
    if (config_required) opt->required();
    sub->add_option("--out", out_path, "output directory (overrides output.dir)");
    sub->add_option("--seed", seed, "master seed override");
    sub->add_option("--backend", backend, "backend override: mock | remote");
    sub->add_option("--mode", mode, "per-exemplar mean mode: at-addition | in-prefix");
  };
  auto* run = app.add_subcommand("run", "run the sampling experiment");
  common(run, true);
  run->add_flag("--resume", options.resume, "continue from the checkpoint in the output directory");
  auto* select = app.add_subcommand("select", "z-score exemplar selection from a records file");
  common(select, true);
  select->add_option("--records", records_path, "records file (default: <out>/records.jsonl)");
  auto* verify = app.add_subcommand("verify", "compare the estimator against exact enumeration");
  common(verify, true);
  auto* report = app.add_subcommand("report", "plot-data tables from a records file");
  common(report, false);
  report->add_option("--records", records_path, "records file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = app.exit(e, out, err);
    log << out.str() << err.str();
    return code == 0 ? exit_code::kOk : exit_code::kConfig;
  }

  if (!config_path.empty()) options.config = config_path;
  if (!records_path.empty()) options.records = records_path;
  if (!out_path.empty()) options.overrides.output_dir = out_path;
  if (!backend.empty()) options.overrides.backend = backend;
  if (!mode.empty()) options.overrides.mu_mode = mode;
  for (auto* sub : {run, select, verify, report}) {
    if (sub->count("--seed") > 0) options.overrides.seed = seed;
  }

  if (run->parsed()) return cmd_run(options, log);
  if (select->parsed()) return cmd_select(options, log);
  if (verify->parsed()) return cmd_verify(options, log);
  return cmd_report(options, log);
}

}  // namespace icleval
