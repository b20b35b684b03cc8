#include "icleval/engine.hpp"

#include "icleval/digest.hpp"
#include "icleval/error.hpp"
#include "icleval/random.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

namespace icleval {

void RunConfig::validate() const {
  if (k < 1) throw ConfigError("run.K must be >= 1");
  if (permutations < 1) throw ConfigError("run.P must be >= 1");
  if (trials < 1) throw ConfigError("run.trials must be >= 1");
  if (eval_subsample < 1) throw ConfigError("run.eval_subsample must be >= 1");
  if (concurrency < 1) throw ConfigError("run.concurrency must be >= 1");
  if (permutation_source == PermutationSource::kExhaustive) {
    if (k > 10) throw ConfigError("run.permutations=exhaustive supports K <= 10");
    if (permutations != factorial(k)) {
      throw ConfigError(fmt::format("run.permutations=exhaustive requires P == K! = {}", factorial(k)));
    }
  }
  if (fixed_support) {
    if (fixed_support->size() != k) {
      throw ConfigError(fmt::format("run.support lists {} ids but K = {}", fixed_support->size(), k));
    }
    std::set<std::string> distinct(fixed_support->begin(), fixed_support->end());
    if (distinct.size() != fixed_support->size()) throw ConfigError("run.support ids must be distinct");
  }
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["K"] = k;
  j["P"] = permutations;
  j["trials"] = trials;
  j["seed"] = seed;
  j["eval_subsample"] = eval_subsample;
  j["permutations"] = permutation_source == PermutationSource::kExhaustive ? "exhaustive" : "random";
  if (fixed_support) j["support"] = *fixed_support;
  return j;
}

std::string RunConfig::digest() const { return sha256_hex(to_json().dump()); }

std::size_t factorial(std::size_t n) {
  std::size_t f = 1;
  for (std::size_t i = 2; i <= n; ++i) f *= i;
  return f;
}

std::vector<std::string> permute(const SupportSet& support, std::size_t perm_index, std::uint64_t seed) {
  std::vector<std::string> order = support.members;
  Rng rng(derive_seed(seed, SeedStream::kPermutation,
                      {static_cast<std::uint64_t>(support.trial), static_cast<std::uint64_t>(perm_index)}));
  rng.shuffle(std::span<std::string>(order));
  return order;
}

std::vector<std::string> nth_permutation(std::span<const std::string> members, std::size_t index) {
  std::vector<std::string> pool(members.begin(), members.end());
  std::vector<std::string> out;
  out.reserve(pool.size());
  index %= factorial(pool.size());
  while (!pool.empty()) {
    const std::size_t block = factorial(pool.size() - 1);
    const std::size_t pick = index / block;
    index %= block;
    out.push_back(std::move(pool[pick]));
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return out;
}

PrefixEvaluator::PrefixEvaluator(const Dataset& dataset, const Backend& backend, const PromptTemplate& tmpl,
                                 PredictionCache* cache, std::size_t concurrency,
                                 std::optional<std::uint64_t> dispatch_shuffle_seed)
    : dataset_(dataset),
      index_(dataset),
      backend_(backend),
      tmpl_(tmpl),
      cache_(cache),
      concurrency_(std::max<std::size_t>(1, concurrency)),
      shuffle_seed_(dispatch_shuffle_seed),
      template_digest_(tmpl.digest()),
      backend_digest_(sha256_hex(backend.identity())) {}

bool PrefixEvaluator::predict_correct(const std::vector<std::string>& prefix, const Exemplar& query) const {
  std::string key;
  if (cache_) {
    key = prefix_key(template_digest_, backend_digest_, prefix, query.id);
    if (auto hit = cache_->find(key)) return hit->predicted == query.label;
  }
  std::vector<const Exemplar*> exemplars;
  exemplars.reserve(prefix.size());
  for (const auto& id : prefix) exemplars.push_back(&index_.at(id));
  const auto prompt = render(tmpl_, dataset_.classes, exemplars, query);
  const auto result = classify(backend_, prompt, dataset_.classes);
  if (cache_) {
    CachedPrediction entry{result.predicted, {}};
    for (const auto& s : result.scores) entry.scores.push_back(s.score);
    cache_->insert(key, entry);
  }
  return result.predicted == query.label;
}

namespace {

[[noreturn]] void rethrow_with_context(std::exception_ptr error, const std::string& context) {
  try {
    std::rethrow_exception(error);
  } catch (const TransportError& e) {
    throw TransportError(context + e.what());
  } catch (const ProtocolError& e) {
    throw ProtocolError(context + e.what());
  } catch (const BackendError& e) {
    throw BackendError(context + e.what());
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw BackendError(context + e.what());
  }
}

}  // namespace

std::vector<std::size_t> PrefixEvaluator::correct_counts(std::span<const std::vector<std::string>> prefixes) const {
  const std::size_t n_eval = dataset_.eval.size();
  if (n_eval == 0) throw DataError("eval split is empty");

  // Without a cache every requested prefix is its own slot, so repeated
  // prefixes are re-evaluated.
  std::vector<std::size_t> slot_of(prefixes.size());
  std::vector<const std::vector<std::string>*> slots;
  if (cache_) {
    std::map<std::vector<std::string>, std::size_t> seen;
    for (std::size_t i = 0; i < prefixes.size(); ++i) {
      auto [it, inserted] = seen.emplace(prefixes[i], slots.size());
      if (inserted) slots.push_back(&prefixes[i]);
      slot_of[i] = it->second;
    }
  } else {
    for (std::size_t i = 0; i < prefixes.size(); ++i) {
      slot_of[i] = i;
      slots.push_back(&prefixes[i]);
    }
  }

  const std::size_t n_tasks = slots.size() * n_eval;
  std::vector<std::size_t> order(n_tasks);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle_seed_) Rng(derive_seed(*shuffle_seed_, SeedStream::kDispatchShuffle)).shuffle(std::span(order));

  std::vector<std::uint8_t> correct(n_tasks, 0);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex error_mu;
  std::exception_ptr error;
  std::string error_context;

  auto worker = [&] {
    while (!stop.load(std::memory_order_relaxed)) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n_tasks) return;
      const std::size_t task = order[i];
      const auto& prefix = *slots[task / n_eval];
      const auto& query = dataset_.eval[task % n_eval];
      try {
        correct[task] = predict_correct(prefix, query) ? 1 : 0;
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) {
          error = std::current_exception();
          error_context = fmt::format("prefix length {}, query '{}': ", prefix.size(), query.id);
        }
        stop = true;
      }
    }
  };

  const std::size_t n_threads = std::min(concurrency_, n_tasks);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  if (error) rethrow_with_context(error, error_context);

  std::vector<std::size_t> per_slot(slots.size(), 0);
  for (std::size_t t = 0; t < n_tasks; ++t) per_slot[t / n_eval] += correct[t];
  std::vector<std::size_t> out(prefixes.size());
  for (std::size_t i = 0; i < prefixes.size(); ++i) out[i] = per_slot[slot_of[i]];
  return out;
}

double PrefixEvaluator::accuracy(const std::vector<std::string>& prefix) const {
  const auto counts = correct_counts(std::span(&prefix, 1));
  return static_cast<double>(counts[0]) / static_cast<double>(eval_size());
}

namespace {

SupportSet resolve_support(const RunConfig& config, int trial, const Dataset& dataset) {
  if (!config.fixed_support) return sample_support(dataset, config.k, trial, config.seed);
  for (const auto& id : *config.fixed_support) {
    bool in_train = std::any_of(dataset.train.begin(), dataset.train.end(), [&](const auto& e) { return e.id == id; });
    if (!in_train) throw ConfigError(fmt::format("run.support id '{}' is not in the train split", id));
  }
  return SupportSet{trial, *config.fixed_support, derive_seed(config.seed, SeedStream::kSupport, {static_cast<std::uint64_t>(trial)})};
}

TrialOutput run_trial_with(const RunConfig& config, int trial, const Dataset& dataset,
                           const PrefixEvaluator& evaluator) {
  TrialOutput out;
  out.support = resolve_support(config, trial, dataset);

  const std::size_t k_max = config.k;
  std::vector<std::vector<std::string>> prefixes;
  prefixes.reserve(config.permutations * (k_max + 1));
  for (std::size_t p = 0; p < config.permutations; ++p) {
    auto order = config.permutation_source == PermutationSource::kExhaustive
                     ? nth_permutation(out.support.members, p)
                     : permute(out.support, p, config.seed);
    for (std::size_t k = 0; k <= k_max; ++k) {
      prefixes.emplace_back(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    }
  }

  const auto counts = evaluator.correct_counts(prefixes);
  out.records.reserve(prefixes.size());
  for (std::size_t i = 0; i < prefixes.size(); ++i) {
    EvalRecord r;
    r.trial = trial;
    r.perm = static_cast<int>(i / (k_max + 1));
    r.k = static_cast<int>(i % (k_max + 1));
    r.correct = counts[i];
    r.total = evaluator.eval_size();
    r.prefix_ids = std::move(prefixes[i]);
    out.records.push_back(std::move(r));
  }
  return out;
}

}  // namespace

TrialOutput run_trial(const RunConfig& config, int trial, const Dataset& dataset, const Backend& backend,
                      const PromptTemplate& tmpl, PredictionCache* cache) {
  config.validate();
  PredictionCache local_cache;
  PredictionCache* active = config.cache ? (cache ? cache : &local_cache) : nullptr;
  PrefixEvaluator evaluator(dataset, backend, tmpl, active, config.concurrency, config.dispatch_shuffle_seed);
  return run_trial_with(config, trial, dataset, evaluator);
}

RunArtifact run_experiment(const RunConfig& config, const Dataset& dataset, const Backend& backend,
                           const PromptTemplate& tmpl, PredictionCache* cache, const ExperimentHooks& hooks) {
  config.validate();
  const Dataset data = subsample_eval(dataset, config.eval_subsample, config.seed);
  tmpl.validate(text_field_names(data));

  // A private in-memory cache keeps prefix dedup within and across trials
  // when the caller did not supply one.
  PredictionCache local_cache;
  PredictionCache* active = config.cache ? (cache ? cache : &local_cache) : nullptr;
  PrefixEvaluator evaluator(data, backend, tmpl, active, config.concurrency, config.dispatch_shuffle_seed);

  RunArtifact artifact;
  auto& prov = artifact.provenance;
  prov.config_digest = config.digest();
  prov.dataset_digest = dataset_digest(data);
  prov.template_digest = evaluator.template_digest();
  prov.backend_identity = backend.identity();
  prov.run = config.to_json();
  for (const auto& e : data.eval) prov.eval_ids.push_back(e.id);

  for (std::size_t t = 0; t < config.trials; ++t) {
    const int trial = static_cast<int>(t);
    TrialOutput out;
    if (auto it = hooks.completed.find(trial); it != hooks.completed.end()) {
      out = it->second;
    } else {
      out = run_trial_with(config, trial, data, evaluator);
      if (hooks.on_trial_complete) hooks.on_trial_complete(out);
    }
    prov.support_sets.push_back(out.support);
    for (auto& r : out.records) artifact.records.push_back(std::move(r));
  }
  return artifact;
}

}  // namespace icleval
