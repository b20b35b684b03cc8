#pragma once

#include "icleval/corpus.hpp"
#include "icleval/prediction_cache.hpp"
#include "icleval/prompting.hpp"
#include "icleval/scorer.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>

namespace icleval {

enum class PermutationSource {
  kRandom,      // P independent uniform shuffles (with replacement over K!)
  kExhaustive,  // test hook: permutation p is the p-th lexicographic ordering; requires P == K!
};

struct RunConfig {
  std::size_t k = 20;
  std::size_t permutations = 20;
  std::size_t trials = 5;
  std::uint64_t seed = 0;
  std::size_t eval_subsample = 256;
  bool cache = true;
  std::size_t concurrency = 8;
  PermutationSource permutation_source = PermutationSource::kRandom;
  // Every trial uses this support instead of drawing one (follow-up runs on selected sets).
  std::optional<std::vector<std::string>> fixed_support;
  // Test hook: shuffle the execution order of (prefix, query) evaluations.
  std::optional<std::uint64_t> dispatch_shuffle_seed;

  void validate() const;
  // Only the fields that determine results; execution knobs are left out.
  nlohmann::ordered_json to_json() const;
  std::string digest() const;
};

struct EvalRecord {
  int trial = 0;
  int perm = 0;
  int k = 0;
  std::size_t correct = 0;  // accuracy is stored exactly as correct / total
  std::size_t total = 0;
  std::vector<std::string> prefix_ids;

  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
  bool operator==(const EvalRecord&) const = default;
};

struct Provenance {
  std::string config_digest;
  std::string dataset_digest;
  std::string template_digest;
  std::string backend_identity;
  nlohmann::ordered_json run;  // RunConfig::to_json()
  std::vector<std::string> eval_ids;
  std::vector<SupportSet> support_sets;

  bool operator==(const Provenance&) const = default;
};

struct RunArtifact {
  Provenance provenance;
  std::vector<EvalRecord> records;
};

std::size_t factorial(std::size_t n);

// Ordering of the support for one permutation index; seeded from (seed, trial, perm_index).
std::vector<std::string> permute(const SupportSet& support, std::size_t perm_index, std::uint64_t seed);

// The index-th ordering of `members` in lexicographic order of positions.
std::vector<std::string> nth_permutation(std::span<const std::string> members, std::size_t index);

// Shared state for evaluating prefixes against one eval split.
class PrefixEvaluator {
 public:
  PrefixEvaluator(const Dataset& dataset, const Backend& backend, const PromptTemplate& tmpl,
                  PredictionCache* cache, std::size_t concurrency,
                  std::optional<std::uint64_t> dispatch_shuffle_seed = std::nullopt);

  // Correct-prediction counts over the eval split, one per prefix. All
  // (prefix, query) pairs are dispatched together up to the concurrency cap.
  // With a cache, duplicate prefixes are evaluated once.
  std::vector<std::size_t> correct_counts(std::span<const std::vector<std::string>> prefixes) const;

  double accuracy(const std::vector<std::string>& prefix) const;

  std::size_t eval_size() const { return dataset_.eval.size(); }
  const std::string& template_digest() const { return template_digest_; }
  const std::string& backend_digest() const { return backend_digest_; }

 private:
  bool predict_correct(const std::vector<std::string>& prefix, const Exemplar& query) const;

  const Dataset& dataset_;
  ExemplarIndex index_;
  const Backend& backend_;
  PromptTemplate tmpl_;
  PredictionCache* cache_;
  std::size_t concurrency_;
  std::optional<std::uint64_t> shuffle_seed_;
  std::string template_digest_;
  std::string backend_digest_;
};

struct TrialOutput {
  SupportSet support;
  std::vector<EvalRecord> records;  // ordered by (perm, k)
};

// One pass of the sampling loop: draw S^K, P orderings, and score every
// prefix length 0..K of each ordering. `dataset` is used as-is (no subsampling).
TrialOutput run_trial(const RunConfig& config, int trial, const Dataset& dataset, const Backend& backend,
                      const PromptTemplate& tmpl, PredictionCache* cache);

struct ExperimentHooks {
  // Trials already completed (from a checkpoint); they are not re-run.
  std::map<int, TrialOutput> completed;
  std::function<void(const TrialOutput&)> on_trial_complete;
};

// Subsamples eval per config, then runs trials 0..trials-1.
RunArtifact run_experiment(const RunConfig& config, const Dataset& dataset, const Backend& backend,
                           const PromptTemplate& tmpl, PredictionCache* cache, const ExperimentHooks& hooks = {});

}  // namespace icleval
