#include "icleval/oracle.hpp"

#include "icleval/error.hpp"

#include <fmt/format.h>

#include <cmath>
#include <functional>

namespace icleval {

namespace {

class PrefixScorer {
 public:
  PrefixScorer(const Dataset& dataset, const Backend& backend, const PromptTemplate& tmpl, const OracleOptions& options)
      : dataset_(dataset), index_(dataset), backend_(backend), tmpl_(tmpl), options_(options) {}

  std::size_t correct(const std::vector<std::string>& prefix) const {
    std::vector<const Exemplar*> exemplars;
    for (const auto& id : prefix) exemplars.push_back(&index_.at(id));
    std::size_t hits = 0;
    for (const auto& query : dataset_.eval) {
      const auto prompt = render(tmpl_, dataset_.classes, exemplars, query);
      const auto first = classify(backend_, prompt, dataset_.classes);
      if (options_.check_determinism) {
        const auto second = classify(backend_, prompt, dataset_.classes);
        bool same = first.predicted == second.predicted;
        for (std::size_t c = 0; same && c < first.scores.size(); ++c) same = first.scores[c].score == second.scores[c].score;
        if (!same) {
          throw OracleError(fmt::format("nondeterministic backend: two evaluations of prefix length {}, query '{}' disagree",
                                        prefix.size(), query.id));
        }
      }
      hits += first.predicted == query.label;
    }
    return hits;
  }

 private:
  const Dataset& dataset_;
  ExemplarIndex index_;
  const Backend& backend_;
  const PromptTemplate& tmpl_;
  const OracleOptions& options_;
};

void check_preconditions(const SupportSet& support, const Dataset& dataset, const Backend& backend,
                         const OracleOptions& options) {
  if (support.members.size() > options.max_k) {
    throw OracleError(fmt::format("exact enumeration refused: K={} exceeds the oracle limit of {}",
                                  support.members.size(), options.max_k));
  }
  if (!backend.deterministic()) throw OracleError("exact enumeration requires a deterministic backend");
  if (dataset.eval.empty()) throw DataError("eval split is empty");
}

// Accumulates per-k sums of correct counts over enumerated prefixes.
struct Accumulator {
  std::vector<std::uint64_t> correct_sum;
  std::vector<double> acc_sum;
  std::vector<double> acc_sq_sum;
  std::vector<std::size_t> count;

  explicit Accumulator(std::size_t k_max)
      : correct_sum(k_max + 1, 0), acc_sum(k_max + 1, 0.0), acc_sq_sum(k_max + 1, 0.0), count(k_max + 1, 0) {}

  void add(std::size_t k, std::size_t correct, std::size_t total) {
    const double acc = static_cast<double>(correct) / static_cast<double>(total);
    correct_sum[k] += correct;
    acc_sum[k] += acc;
    acc_sq_sum[k] += acc * acc;
    ++count[k];
  }

  ExactCurve finish(std::size_t total) const {
    ExactCurve c;
    for (std::size_t k = 0; k < count.size(); ++k) {
      c.exact_mean.push_back(Fraction::make(correct_sum[k], static_cast<std::uint64_t>(count[k]) * total));
      const double mean = acc_sum[k] / static_cast<double>(count[k]);
      c.variance.push_back(std::max(0.0, acc_sq_sum[k] / static_cast<double>(count[k]) - mean * mean));
      c.prefix_count.push_back(count[k]);
    }
    return c;
  }
};

}  // namespace

ExactCurve exact_expectation(const SupportSet& support, const Dataset& dataset, const Backend& backend,
                             const PromptTemplate& tmpl, const OracleOptions& options) {
  check_preconditions(support, dataset, backend, options);
  const std::size_t k_max = support.members.size();
  const std::size_t total = dataset.eval.size();
  PrefixScorer scorer(dataset, backend, tmpl, options);
  Accumulator acc(k_max);

  // Depth-first over ordered prefixes; every node is one k-permutation.
  std::vector<std::string> prefix;
  std::vector<bool> used(k_max, false);
  std::function<void()> visit = [&] {
    acc.add(prefix.size(), scorer.correct(prefix), total);
    if (prefix.size() == k_max) return;
    for (std::size_t i = 0; i < k_max; ++i) {
      if (used[i]) continue;
      used[i] = true;
      prefix.push_back(support.members[i]);
      visit();
      prefix.pop_back();
      used[i] = false;
    }
  };
  visit();
  return acc.finish(total);
}

ExactCurve exact_expectation_by_subsets(const SupportSet& support, const Dataset& dataset, const Backend& backend,
                                        const PromptTemplate& tmpl, const OracleOptions& options) {
  check_preconditions(support, dataset, backend, options);
  const std::size_t k_max = support.members.size();
  const std::size_t total = dataset.eval.size();
  PrefixScorer scorer(dataset, backend, tmpl, options);
  Accumulator acc(k_max);
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << k_max); ++mask) {
    std::vector<std::string> subset;
    for (std::size_t i = 0; i < k_max; ++i) {
      if (mask >> i & 1U) subset.push_back(support.members[i]);
    }
    acc.add(subset.size(), scorer.correct(subset), total);
  }
  return acc.finish(total);
}

VerifyReport verify_estimator(const RunConfig& config, const Dataset& dataset, const Backend& backend,
                              const PromptTemplate& tmpl, const VerifyTolerance& tolerance,
                              const OracleOptions& options) {
  config.validate();
  if (config.k > options.max_k) {
    throw OracleError(fmt::format("exact enumeration refused: K={} exceeds the oracle limit of {}", config.k, options.max_k));
  }
  const Dataset data = subsample_eval(dataset, config.eval_subsample, config.seed);
  const RunArtifact artifact = run_experiment(config, data, backend, tmpl, nullptr);

  VerifyReport report;
  report.permutations = config.permutations;
  const std::size_t total = data.eval.size();
  const std::size_t ks = config.k + 1;
  for (const auto& support : artifact.provenance.support_sets) {
    const ExactCurve exact = exact_expectation(support, data, backend, tmpl, options);
    std::vector<std::uint64_t> correct(ks, 0);
    for (const auto& r : artifact.records) {
      if (r.trial == support.trial) correct[static_cast<std::size_t>(r.k)] += r.correct;
    }
    for (std::size_t k = 0; k < ks; ++k) {
      VerifyRow row;
      row.trial = support.trial;
      row.k = k;
      row.exact = exact.exact_mean[k];
      row.estimate = Fraction::make(correct[k], static_cast<std::uint64_t>(config.permutations) * total);
      row.abs_error = row.estimate == row.exact ? 0.0 : std::abs(row.estimate.value() - row.exact.value());
      row.std_error = std::sqrt(exact.variance[k] / static_cast<double>(config.permutations));
      row.tolerance = tolerance.absolute ? *tolerance.absolute : tolerance.sigmas * row.std_error;
      row.passed = row.abs_error <= row.tolerance;
      report.max_abs_error = std::max(report.max_abs_error, row.abs_error);
      report.passed = report.passed && row.passed;
      report.rows.push_back(row);
    }
  }
  return report;
}

nlohmann::ordered_json to_json(const ExactCurve& curve) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < curve.exact_mean.size(); ++k) {
    rows.push_back({{"k", k},
                    {"exact_mean", curve.exact_mean[k].str()},
                    {"exact_mean_value", curve.exact_mean[k].value()},
                    {"variance", curve.variance[k]},
                    {"prefixes", curve.prefix_count[k]}});
  }
  return rows;
}

nlohmann::ordered_json to_json(const VerifyReport& report) {
  nlohmann::ordered_json j;
  j["passed"] = report.passed;
  j["permutations"] = report.permutations;
  j["max_abs_error"] = report.max_abs_error;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"trial", r.trial},
                    {"k", r.k},
                    {"exact", r.exact.str()},
                    {"estimate", r.estimate.str()},
                    {"abs_error", r.abs_error},
                    {"std_error", r.std_error},
                    {"tolerance", r.tolerance},
                    {"passed", r.passed}});
  }
  j["rows"] = rows;
  return j;
}

}  // namespace icleval
