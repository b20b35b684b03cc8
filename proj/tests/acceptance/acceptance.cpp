// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include "fixtures.hpp"

#include "icleval/analytics.hpp"
#include "icleval/artifact_io.hpp"
#include "icleval/commands.hpp"
#include "icleval/digest.hpp"
#include "icleval/error.hpp"
#include "icleval/oracle.hpp"
#include "icleval/remote_backend.hpp"
// After Eigen: <resolv.h>, reached through httplib, defines _res.
#include "stub_server.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

using namespace icleval;
using namespace icleval::testing;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool passed = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      passed = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// 20-query fixture with 8 gold-0 instances.
Dataset oracle_fixture() { return make_dataset(12, 20, 8); }

json smoke_config_json(const std::string& out) {
  json j = json::parse(R"({
    "dataset": {"name": "smoke", "format": "jsonl", "train": "train.jsonl", "eval": "eval.jsonl",
                "text_fields": ["sentence"], "label": "label", "id": "idx", "classes": ["negative", "positive"]},
    "template": {"preset": "single-text"},
    "run": {"K": 3, "P": 4, "trials": 2, "seed": 1, "concurrency": 2},
    "backend": {"type": "mock", "mock": {"mode": "hash", "salt": 3}}
  })");
  j["output"]["dir"] = out;
  return j;
}

struct SmokeWorkspace {
  TempDir dir;
  explicit SmokeWorkspace(std::size_t n_train = 30, std::size_t n_eval = 20) {
    write_jsonl_split(dir / "train.jsonl", "t", n_train);
    write_jsonl_split(dir / "eval.jsonl", "q", n_eval, n_eval / 2, false);
  }
  fs::path config(const json& j, const std::string& name) const {
    write_file(dir / name, j.dump(2));
    return dir / name;
  }
};

// The smoke config as an in-memory experiment.
struct SmokeExperiment {
  Dataset dataset = make_dataset(30, 20, 10);
  MockBackend backend{mock_spec(MockMode::kHash, 0, 3), dataset};
  RunConfig config;
  SmokeExperiment() {
    config.k = 3;
    config.permutations = 4;
    config.trials = 2;
    config.seed = 1;
    config.concurrency = 2;
  }
};

CommandOptions options_for(const fs::path& config) {
  CommandOptions o;
  o.config = config;
  return o;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    // The prediction cache is an append log whose line order follows thread scheduling.
    if (entry.path().filename() == "cache.jsonl") continue;
    files[fs::relative(entry.path(), dir).string()] = read_file(entry.path());
  }
  return files;
}

bool zero_shot_uniform(const std::vector<EvalRecord>& records) {
  std::map<int, std::size_t> zero;
  for (const auto& r : records) {
    if (r.k != 0) continue;
    auto [it, inserted] = zero.emplace(r.trial, r.correct);
    if (!inserted && it->second != r.correct) return false;
  }
  return !zero.empty();
}

Outcome exhaustive_oracle_equivalence() {
  Outcome o;
  const auto start = Clock::now();
  const Dataset d = oracle_fixture();
  const MockBackend backend(mock_spec(MockMode::kPrefixMajority, 0), d);
  RunConfig cfg;
  cfg.k = 4;
  cfg.permutations = 24;
  cfg.trials = 1;
  cfg.seed = 3;
  cfg.permutation_source = PermutationSource::kExhaustive;
  const auto report = verify_estimator(cfg, d, backend, test_template(), {});

  // Independent path: curve summary over the engine's records against the oracle.
  const auto artifact = run_experiment(cfg, d, backend, test_template(), nullptr);
  const auto curve = summarize_curve(artifact.records);
  const auto exact = exact_expectation(artifact.provenance.support_sets[0], d, backend, test_template());
  double max_double = 0.0;
  for (std::size_t k = 0; k <= cfg.k; ++k) {
    max_double = std::max(max_double, std::abs(curve.grand_mean(static_cast<Eigen::Index>(k)) - exact.exact_mean[k].value()));
  }
  const double elapsed = seconds_since(start);
  bool exact_equal = report.rows.size() == cfg.k + 1;
  for (const auto& row : report.rows) exact_equal = exact_equal && row.exact == row.estimate;
  o.require(exact_equal, "exact fractions differ");
  o.require(report.max_abs_error == 0.0, fmt::format("max |error| {}", report.max_abs_error));
  o.require(max_double <= 1e-15, fmt::format("grand_mean deviates by {}", max_double));
  o.require(elapsed < 10.0, fmt::format("took {:.2f}s", elapsed));
  if (o.passed) o.detail = fmt::format("K=4, 24 orderings, all 5 k exact; {:.2f}s", elapsed);
  return o;
}

Outcome monte_carlo_convergence() {
  Outcome o;
  const auto start = Clock::now();
  const Dataset d = oracle_fixture();
  const MockBackend backend(mock_spec(MockMode::kHash, 0, 11), d);
  double worst_ratio = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RunConfig cfg;
    cfg.k = 4;
    cfg.permutations = 500;
    cfg.trials = 1;
    cfg.seed = seed;
    const auto report = verify_estimator(cfg, d, backend, test_template(), {});
    for (const auto& row : report.rows) {
      const double bound = 3.0 * row.std_error;
      o.require(row.abs_error <= bound, fmt::format("seed {} k {}: |error| {} > {}", seed, row.k, row.abs_error, bound));
      if (bound > 0) worst_ratio = std::max(worst_ratio, row.abs_error / row.std_error);
    }
  }
  const double elapsed = seconds_since(start);
  o.require(elapsed < 60.0, fmt::format("took {:.2f}s", elapsed));
  if (o.passed) o.detail = fmt::format("5 seeds, worst |error| = {:.2f} SE; {:.2f}s", worst_ratio, elapsed);
  return o;
}

Outcome protocol_shape() {
  Outcome o;
  const auto start = Clock::now();
  SmokeWorkspace ws(400, 1000);
  StubServer stub;
  stub.set_logprob([](const std::string& text, const std::string&, std::size_t) {
    return -static_cast<double>(fnv1a64(text) % 9) / 3.0;
  });
  json cfg = json::parse(R"({
    "dataset": {"name": "default", "train": "train.jsonl", "eval": "eval.jsonl",
                "text_fields": ["sentence"], "id": "idx", "classes": ["negative", "positive"]}
  })");
  cfg["backend"] = {{"type", "remote"}, {"remote", {{"url", stub.url()}, {"backoff_ms", 10}}}};
  cfg["output"]["dir"] = "out";
  std::ostringstream log;
  const int code = cmd_run(options_for(ws.config(cfg, "default.json")), log);
  o.require(code == 0, fmt::format("run exited {}: {}", code, log.str()));
  if (code != 0) return o;
  const auto artifact = read_records(ws.dir / "out" / "records.jsonl");
  std::set<std::pair<int, int>> perms;
  for (const auto& r : artifact.records) perms.insert({r.trial, r.perm});
  o.require(artifact.records.size() == 2100, fmt::format("{} records", artifact.records.size()));
  o.require(artifact.provenance.eval_ids.size() == 256, fmt::format("eval of {}", artifact.provenance.eval_ids.size()));
  o.require(perms.size() == 100, fmt::format("{} permutations", perms.size()));
  o.require(artifact.provenance.support_sets.size() == 5, "support sets");
  for (const auto& r : artifact.records) {
    if (r.total != 256) {
      o.require(false, "record total differs from 256");
      break;
    }
  }
  o.require(zero_shot_uniform(artifact.records), "k=0 accuracy varies within a trial");
  if (o.passed) {
    o.detail = fmt::format("2100 records, eval 256, 100 permutations, {} requests to the stub; {:.1f}s", stub.requests(),
                           seconds_since(start));
  }
  return o;
}

Outcome zero_shot_invariance() {
  Outcome o;
  SmokeExperiment smoke;
  const auto artifact = run_experiment(smoke.config, smoke.dataset, smoke.backend, test_template(), nullptr);
  o.require(zero_shot_uniform(artifact.records), "k=0 accuracy varies within a trial (hash mock)");
  for (auto mode : {MockMode::kPrefixMajority, MockMode::kLabelBias}) {
    const MockBackend b(mock_spec(mode, 1), smoke.dataset);
    o.require(zero_shot_uniform(run_experiment(smoke.config, smoke.dataset, b, test_template(), nullptr).records),
              "k=0 accuracy varies within a trial");
  }
  // Per trial with the cache on: exactly |eval| zero-shot backend calls.
  auto cfg = smoke.config;
  cfg.permutations = 20;
  for (int trial = 0; trial < 3; ++trial) {
    CountingBackend counting(smoke.backend);
    PredictionCache cache;
    run_trial(cfg, trial, smoke.dataset, counting, test_template(), &cache);
    o.require(counting.zero_shot_calls == smoke.dataset.eval.size(),
              fmt::format("trial {}: {} zero-shot calls for |eval| = {}", trial, counting.zero_shot_calls.load(),
                          smoke.dataset.eval.size()));
  }
  // Across an experiment the shared cache never exceeds |eval| zero-shot calls.
  cfg.trials = 5;
  CountingBackend counting(smoke.backend);
  run_experiment(cfg, smoke.dataset, counting, test_template(), nullptr);
  o.require(counting.zero_shot_calls == smoke.dataset.eval.size(), "experiment-wide zero-shot call count");
  if (o.passed) o.detail = fmt::format("uniform k=0 rows; {} zero-shot calls per trial (P=20)", smoke.dataset.eval.size());
  return o;
}

Outcome cache_transparency() {
  Outcome o;
  SmokeWorkspace ws;
  std::ostringstream log;
  json on = smoke_config_json("on");
  json off = smoke_config_json("off");
  off["run"]["cache"] = false;
  o.require(cmd_run(options_for(ws.config(on, "on.json")), log) == 0, "cache-on run failed");
  o.require(cmd_run(options_for(ws.config(off, "off.json")), log) == 0, "cache-off run failed");
  o.require(read_file(ws.dir / "on" / "records.jsonl") == read_file(ws.dir / "off" / "records.jsonl"),
            "records files differ");
  SmokeExperiment smoke;
  auto cfg_off = smoke.config;
  cfg_off.cache = false;
  o.require(run_experiment(smoke.config, smoke.dataset, smoke.backend, test_template(), nullptr).records ==
                run_experiment(cfg_off, smoke.dataset, smoke.backend, test_template(), nullptr).records,
            "in-memory records differ");
  if (o.passed) o.detail = "records.jsonl bit-identical with cache on and off";
  return o;
}

Outcome determinism() {
  Outcome o;
  SmokeWorkspace ws(20, 40);
  json run_cfg = smoke_config_json("out");
  run_cfg["run"] = {{"K", 20}, {"P", 6}, {"trials", 5}, {"seed", 8}, {"concurrency", 4}};
  json pinned = json::object();
  for (int i = 0; i < 6; ++i) pinned["t" + std::to_string(i)] = "help";
  for (int i = 6; i < 12; ++i) pinned["t" + std::to_string(i)] = "hurt";
  run_cfg["backend"]["mock"]["pinned"] = pinned;
  const auto run_path = ws.config(run_cfg, "run.json");
  json verify_cfg = smoke_config_json("verify");
  verify_cfg["run"] = {{"K", 4}, {"P", 50}, {"trials", 2}, {"seed", 8}};
  const auto verify_path = ws.config(verify_cfg, "verify.json");

  auto execute = [&](std::map<std::string, std::string>& out_files, std::map<std::string, std::string>& verify_files) {
    std::ostringstream log;
    fs::remove_all(ws.dir / "out");
    fs::remove_all(ws.dir / "verify");
    bool ok = cmd_run(options_for(run_path), log) == 0;
    ok = ok && cmd_select(options_for(run_path), log) == 0;
    CommandOptions report;
    report.records = ws.dir / "out" / "records.jsonl";
    report.overrides.output_dir = ws.dir / "out" / "report";
    ok = ok && cmd_report(report, log) == 0;
    ok = ok && cmd_verify(options_for(verify_path), log) == 0;
    if (ok) {
      out_files = snapshot(ws.dir / "out");
      verify_files = snapshot(ws.dir / "verify");
    }
    return ok;
  };
  std::map<std::string, std::string> a_out, a_verify, b_out, b_verify;
  o.require(execute(a_out, a_verify), "first execution failed");
  o.require(execute(b_out, b_verify), "second execution failed");
  o.require(!a_out.empty() && a_out == b_out, "run/select/report outputs differ");
  o.require(!a_verify.empty() && a_verify == b_verify, "verify outputs differ");
  if (o.passed) o.detail = fmt::format("{} files from run, select, report and verify byte-identical", a_out.size() + a_verify.size());
  return o;
}

Outcome zscore_correctness() {
  Outcome o;
  TrialExemplarMeans m;
  m.ids = {"a", "b", "c"};
  m.mu = Eigen::Vector3d(0.5, 0.7, 0.9);
  const auto z = trial_zscores(m);
  const double z_expected = 0.2 / std::sqrt(0.08 / 3.0);
  o.require(std::abs(z.mu_t - 0.7) < 1e-6, fmt::format("mu_t {}", z.mu_t));
  o.require(std::abs(z.sigma_t - std::sqrt(0.08 / 3.0)) < 1e-6, fmt::format("sigma_t {}", z.sigma_t));
  o.require(std::abs(z.z(0) + 1.2247) < 1e-4 && std::abs(z.z(0) + z_expected) < 1e-6, fmt::format("z0 {}", z.z(0)));
  o.require(std::abs(z.z(1)) < 1e-6, fmt::format("z1 {}", z.z(1)));
  o.require(std::abs(z.z(2) - 1.2247) < 1e-4 && std::abs(z.z(2) - z_expected) < 1e-6, fmt::format("z2 {}", z.z(2)));

  // Mean 0 / population std 1 on real per-trial z-scores.
  std::size_t checked = 0;
  const Dataset d = make_dataset(80, 40, 20);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const MockBackend backend(mock_spec(MockMode::kHash, 0, seed), d);
    RunConfig cfg;
    cfg.k = 8;
    cfg.permutations = 10;
    cfg.trials = 5;
    cfg.seed = seed;
    cfg.concurrency = 1;
    const auto artifact = run_experiment(cfg, d, backend, test_template(), nullptr);
    for (auto mode : {ExemplarMeanMode::kAtAddition, ExemplarMeanMode::kInPrefix}) {
      for (const auto& means : per_example_average(artifact.records, artifact.provenance.support_sets, mode)) {
        const auto t = trial_zscores(means);
        if (t.sigma_t == 0.0) continue;
        const double mean = t.z.mean();
        const double sd = std::sqrt((t.z.array() - mean).square().mean());
        o.require(std::abs(mean) < 1e-9 && std::abs(sd - 1.0) < 1e-9,
                  fmt::format("trial z mean {} std {}", mean, sd));
        ++checked;
      }
    }
  }
  if (o.passed) o.detail = fmt::format("z = {{-{0:.4f}, 0, +{0:.4f}}}; {1} trials standardized", z_expected, checked);
  return o;
}

Outcome selection_pipeline() {
  Outcome o;
  SmokeWorkspace ws(20, 40);
  json cfg = smoke_config_json("out");
  cfg["run"] = {{"K", 20}, {"P", 20}, {"trials", 5}, {"seed", 2}};
  std::set<std::string> helped;
  std::set<std::string> hurt;
  json pinned = json::object();
  for (int i : {1, 4, 7, 10, 13, 16}) {
    helped.insert("t" + std::to_string(i));
    pinned["t" + std::to_string(i)] = "help";
  }
  for (int i : {2, 5, 8, 11, 14, 17}) {
    hurt.insert("t" + std::to_string(i));
    pinned["t" + std::to_string(i)] = "hurt";
  }
  cfg["backend"]["mock"]["pinned"] = pinned;
  const auto path = ws.config(cfg, "select.json");
  std::ostringstream log;
  o.require(cmd_run(options_for(path), log) == 0, "run failed: " + log.str());
  const int code = cmd_select(options_for(path), log);
  o.require(code == 0, fmt::format("select exited {}: {}", code, log.str()));
  if (code != 0) return o;
  const auto sel = json::parse(read_file(ws.dir / "out" / "selection.json"));
  const std::set<std::string> high(sel["high"].begin(), sel["high"].end());
  const std::set<std::string> low(sel["low"].begin(), sel["low"].end());
  o.require(sel["high"].size() == 6 && sel["low"].size() == 6, "set sizes");
  std::vector<std::string> overlap;
  std::set_intersection(high.begin(), high.end(), low.begin(), low.end(), std::back_inserter(overlap));
  o.require(overlap.empty(), "high and low overlap");
  o.require(high == helped, "high set misses planted helpful exemplars");
  o.require(low == hurt, "low set misses planted harmful exemplars");
  std::size_t configs = 0;
  for (const char* name : {"high", "low", "random"}) {
    const fs::path f = ws.dir / "out" / "followup" / (std::string(name) + ".json");
    if (!fs::exists(f)) continue;
    const auto j = json::parse(read_file(f));
    configs += j["run"]["support"].size() == 6 && j["run"]["K"] == 6;
  }
  o.require(configs == 3, fmt::format("{} follow-up configs", configs));
  if (o.passed) o.detail = "disjoint 6/6 sets equal to the planted ids; high, low and random follow-up configs";
  return o;
}

Outcome remote_contract() {
  Outcome o;
  std::size_t passed = 0;
  auto contract = [&](const std::string& name, const std::function<bool()>& body) {
    bool ok = false;
    try {
      ok = body();
    } catch (const std::exception& e) {
      o.require(false, name + ": " + e.what());
      return;
    }
    o.require(ok, name);
    passed += ok;
  };
  auto config_for = [](const StubServer& stub) {
    RemoteConfig c;
    c.url = stub.url();
    c.retries = 4;
    c.backoff_ms = 1;
    c.timeout_s = 10;
    return c;
  };
  const std::vector<std::string> classes = {"negative", "positive"};

  contract("summed log-probability", [&] {
    StubServer stub;
    const RemoteBackend b(config_for(stub));
    const std::vector<std::string> two_tokens = {" very good"};
    return b.score_remote("Review: x\nSentiment:", two_tokens)[0].score == -2.0;
  });
  contract("argmax over candidates", [&] {
    StubServer stub;
    stub.set_logprob([](const std::string&, const std::string& t, std::size_t) { return t == " positive" ? -0.2 : -2.2; });
    const RemoteBackend b(config_for(stub));
    const auto c = classify(b, RenderedPrompt{"Review: x\nSentiment:", {}, "q"}, classes);
    return c.predicted == 1 && stub.requests() == 2;
  });
  contract("tie-break to lowest index", [&] {
    StubServer stub;
    const RemoteBackend b(config_for(stub));
    return classify(b, RenderedPrompt{"Review: x\nSentiment:", {}, "q"}, classes).predicted == 0;
  });
  contract("retry then succeed", [&] {
    StubServer stub;
    stub.set_status([](std::size_t n) { return n < 3 ? 500 : 0; });
    stub.set_logprob([](const std::string&, const std::string&, std::size_t) { return -0.5; });
    const RemoteBackend b(config_for(stub));
    const std::vector<std::string> cand = {" yes"};
    return b.score_remote("Q: x\nA:", cand)[0].score == -0.5 && stub.requests() == 4;
  });
  contract("retries exhausted is a transport error", [&] {
    StubServer stub;
    stub.set_status([](std::size_t) { return 503; });
    auto cfg = config_for(stub);
    cfg.retries = 2;
    const RemoteBackend b(cfg);
    try {
      b.score(RenderedPrompt{"Q: x\nA:", {}, "q-1"}, classes);
    } catch (const TransportError& e) {
      return stub.requests() == 3 && std::string(e.what()).find("q-1") != std::string::npos;
    }
    return false;
  });
  contract("missing logprobs is a protocol error", [&] {
    StubServer stub;
    stub.omit_logprobs(true);
    const RemoteBackend b(config_for(stub));
    try {
      b.score(RenderedPrompt{"Q: x\nA:", {}, "q-2"}, classes);
    } catch (const ProtocolError& e) {
      return std::string(e.what()).find("logprobs") != std::string::npos;
    }
    return false;
  });
  o.detail = fmt::format("{}/6 contract tests{}", passed, o.detail.empty() ? "" : ": " + o.detail);
  return o;
}

Outcome dispatch_independence() {
  Outcome o;
  SmokeExperiment smoke;
  auto one = smoke.config;
  one.concurrency = 1;
  auto sixteen = smoke.config;
  sixteen.concurrency = 16;
  auto shuffled = sixteen;
  shuffled.dispatch_shuffle_seed = 99;
  const auto a = run_experiment(one, smoke.dataset, smoke.backend, test_template(), nullptr);
  o.require(a.records == run_experiment(sixteen, smoke.dataset, smoke.backend, test_template(), nullptr).records,
            "cap 1 vs cap 16 differ");
  o.require(a.records == run_experiment(shuffled, smoke.dataset, smoke.backend, test_template(), nullptr).records,
            "shuffled dispatch differs");
  if (o.passed) o.detail = fmt::format("{} records identical at caps 1 and 16 and under shuffled dispatch", a.records.size());
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"oracle equivalence, exhaustive", exhaustive_oracle_equivalence},
      {"Monte Carlo convergence", monte_carlo_convergence},
      {"protocol shape", protocol_shape},
      {"zero-shot invariance", zero_shot_invariance},
      {"cache transparency", cache_transparency},
      {"determinism", determinism},
      {"z-score correctness", zscore_correctness},
      {"selection pipeline", selection_pipeline},
      {"remote-backend contract", remote_contract},
      {"dispatch-order independence", dispatch_independence},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome outcome;
    try {
      outcome = criteria[i].second();
    } catch (const std::exception& e) {
      outcome.passed = false;
      outcome.detail = std::string("exception: ") + e.what();
    }
    failures += !outcome.passed;
    std::cout << fmt::format("[{}] {:2}. {}: {}", outcome.passed ? "PASS" : "FAIL", i + 1, criteria[i].first, outcome.detail)
              << std::endl;
  }
  std::cout << fmt::format("{}/{} criteria passed", criteria.size() - static_cast<std::size_t>(failures), criteria.size())
            << std::endl;
  return failures == 0 ? 0 : 1;
}
