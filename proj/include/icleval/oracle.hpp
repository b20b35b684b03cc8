#pragma once

#include "icleval/engine.hpp"
#include "icleval/fraction.hpp"

#include <json.hpp>

#include <optional>

namespace icleval {

struct OracleOptions {
  std::size_t max_k = 8;
  // Evaluate every (prefix, query) twice and fail on disagreement.
  bool check_determinism = true;
};

struct ExactCurve {
  std::vector<Fraction> exact_mean;       // per k, over all K!/(K-k)! ordered k-prefixes
  std::vector<double> variance;           // population variance of accuracy over those prefixes
  std::vector<std::size_t> prefix_count;  // K!/(K-k)!
};

// Exact expectation over orderings for one fixed support, by enumerating every
// ordered k-prefix. Uses dataset.eval as the evaluation set.
ExactCurve exact_expectation(const SupportSet& support, const Dataset& dataset, const Backend& backend,
                             const PromptTemplate& tmpl, const OracleOptions& options = {});

// Same quantity for backends whose prediction ignores prefix order: averages
// over the C(K,k) unordered subsets, each rendered in support order.
ExactCurve exact_expectation_by_subsets(const SupportSet& support, const Dataset& dataset, const Backend& backend,
                                        const PromptTemplate& tmpl, const OracleOptions& options = {});

struct VerifyTolerance {
  std::optional<double> absolute;  // fixed bound on |error|
  double sigmas = 3.0;             // otherwise sigmas * sqrt(v_k / P) per k
};

struct VerifyRow {
  int trial = 0;
  std::size_t k = 0;
  Fraction exact;
  Fraction estimate;  // engine mean over permutations, in exact arithmetic
  double abs_error = 0.0;
  double std_error = 0.0;  // sqrt(v_k / P)
  double tolerance = 0.0;
  bool passed = true;
};

struct VerifyReport {
  std::size_t permutations = 0;
  std::vector<VerifyRow> rows;
  double max_abs_error = 0.0;
  bool passed = true;
};

// Runs the engine, then compares each trial's per-k mean over permutations
// against the exact expectation for that trial's support.
VerifyReport verify_estimator(const RunConfig& config, const Dataset& dataset, const Backend& backend,
                              const PromptTemplate& tmpl, const VerifyTolerance& tolerance,
                              const OracleOptions& options = {});

nlohmann::ordered_json to_json(const ExactCurve& curve);
nlohmann::ordered_json to_json(const VerifyReport& report);

}  // namespace icleval
