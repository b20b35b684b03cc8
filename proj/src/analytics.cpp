#include "icleval/analytics.hpp"

#include "icleval/error.hpp"
#include "icleval/stats.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <set>
#include <unordered_map>

namespace icleval {

using nlohmann::ordered_json;

std::vector<TrialGrid> build_grids(std::span<const EvalRecord> records) {
  if (records.empty()) throw DataError("no records");
  std::set<int> trial_ids;
  int max_perm = -1;
  int max_k = -1;
  for (const auto& r : records) {
    if (r.perm < 0 || r.k < 0) throw DataError(fmt::format("record with negative index (trial {}, perm {}, k {})", r.trial, r.perm, r.k));
    trial_ids.insert(r.trial);
    max_perm = std::max(max_perm, r.perm);
    max_k = std::max(max_k, r.k);
  }
  const auto perms = static_cast<std::size_t>(max_perm + 1);
  const auto ks = static_cast<std::size_t>(max_k + 1);

  std::map<int, std::size_t> slot;
  std::vector<TrialGrid> grids;
  for (int t : trial_ids) {
    slot[t] = grids.size();
    TrialGrid g;
    g.trial = t;
    g.accuracy = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(perms), static_cast<Eigen::Index>(ks));
    g.cells.assign(perms * ks, nullptr);
    grids.push_back(std::move(g));
  }
  for (const auto& r : records) {
    auto& g = grids[slot[r.trial]];
    auto& cell = g.cells[static_cast<std::size_t>(r.perm) * ks + static_cast<std::size_t>(r.k)];
    if (cell) throw DataError(fmt::format("duplicate record (trial {}, perm {}, k {})", r.trial, r.perm, r.k));
    cell = &r;
    g.accuracy(r.perm, r.k) = r.accuracy();
  }
  for (const auto& g : grids) {
    for (std::size_t i = 0; i < g.cells.size(); ++i) {
      if (!g.cells[i]) {
        throw DataError(fmt::format("incomplete grid: missing record (trial {}, perm {}, k {})", g.trial, i / ks, i % ks));
      }
    }
  }
  return grids;
}

CurveSummary summarize_curve(std::span<const EvalRecord> records) {
  const auto grids = build_grids(records);
  CurveSummary c;
  c.permutations = static_cast<std::size_t>(grids.front().accuracy.rows());
  c.k_max = static_cast<std::size_t>(grids.front().accuracy.cols()) - 1;
  const auto n_trials = static_cast<Eigen::Index>(grids.size());
  const auto perms = grids.front().accuracy.rows();
  const auto ks = grids.front().accuracy.cols();

  c.mean_over_perms.resize(n_trials, ks);
  Eigen::MatrixXd all(n_trials * perms, ks);
  for (Eigen::Index t = 0; t < n_trials; ++t) {
    const auto& g = grids[static_cast<std::size_t>(t)];
    c.trials.push_back(g.trial);
    c.mean_over_perms.row(t) = g.accuracy.colwise().mean();
    all.middleRows(t * perms, perms) = g.accuracy;
  }
  c.grand_mean = c.mean_over_perms.colwise().mean();
  c.std_over_trials = stats::colwise_population_std(c.mean_over_perms);
  c.std_over_all_perms = stats::colwise_population_std(all);
  return c;
}

std::string_view to_string(ExemplarMeanMode mode) {
  return mode == ExemplarMeanMode::kAtAddition ? "at-addition" : "in-prefix";
}

ExemplarMeanMode parse_exemplar_mean_mode(std::string_view name) {
  if (name == "at-addition") return ExemplarMeanMode::kAtAddition;
  if (name == "in-prefix") return ExemplarMeanMode::kInPrefix;
  throw ConfigError(fmt::format("unknown exemplar mean mode '{}' (at-addition, in-prefix)", name));
}

std::vector<TrialExemplarMeans> per_example_average(std::span<const EvalRecord> records,
                                                    std::span<const SupportSet> support_sets,
                                                    ExemplarMeanMode mode) {
  const auto grids = build_grids(records);
  std::vector<TrialExemplarMeans> out;
  for (const auto& g : grids) {
    auto support = std::find_if(support_sets.begin(), support_sets.end(), [&](const auto& s) { return s.trial == g.trial; });
    if (support == support_sets.end()) throw DataError(fmt::format("no support set recorded for trial {}", g.trial));

    std::unordered_map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < support->members.size(); ++i) pos.emplace(support->members[i], i);
    const auto n = static_cast<Eigen::Index>(support->members.size());
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd count = Eigen::VectorXd::Zero(n);

    auto index_of = [&](const std::string& id) {
      auto it = pos.find(id);
      if (it == pos.end()) throw DataError(fmt::format("trial {}: prefix exemplar '{}' is not in the support set", g.trial, id));
      return static_cast<Eigen::Index>(it->second);
    };
    for (Eigen::Index p = 0; p < g.accuracy.rows(); ++p) {
      for (Eigen::Index k = 1; k < g.accuracy.cols(); ++k) {
        const auto& rec = g.cell(static_cast<std::size_t>(p), static_cast<std::size_t>(k));
        const double acc = g.accuracy(p, k);
        if (mode == ExemplarMeanMode::kAtAddition) {
          const auto i = index_of(rec.prefix_ids.back());
          sum(i) += acc;
          count(i) += 1;
        } else {
          for (const auto& id : rec.prefix_ids) {
            const auto i = index_of(id);
            sum(i) += acc;
            count(i) += 1;
          }
        }
      }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      if (count(i) == 0) {
        throw DataError(fmt::format("trial {}: exemplar '{}' never appears in the records", g.trial,
                                    support->members[static_cast<std::size_t>(i)]));
      }
    }
    out.push_back({g.trial, support->members, (sum.array() / count.array()).matrix()});
  }
  return out;
}

TrialZScores trial_zscores(const TrialExemplarMeans& means) {
  if (means.mu.size() < 2) throw ConfigError(fmt::format("trial {}: z-scores need at least 2 exemplars", means.trial));
  TrialZScores z;
  z.trial = means.trial;
  z.ids = means.ids;
  z.mu = means.mu;
  z.z = stats::standardize(means.mu, &z.mu_t, &z.sigma_t);
  return z;
}

Selection select_extremes(std::span<const TrialZScores> trials, double threshold, std::size_t set_size) {
  if (set_size == 0) throw ConfigError("selection set size must be >= 1");
  std::map<std::string, PooledScore> pooled;
  for (const auto& t : trials) {
    for (std::size_t i = 0; i < t.ids.size(); ++i) {
      const double z = t.z(static_cast<Eigen::Index>(i));
      auto [it, inserted] = pooled.try_emplace(t.ids[i], PooledScore{t.ids[i], z, t.trial});
      if (!inserted && std::abs(z) > std::abs(it->second.z)) it->second = PooledScore{t.ids[i], z, t.trial};
    }
  }
  std::vector<PooledScore> candidates;
  for (const auto& [id, score] : pooled) {
    if (std::abs(score.z) > threshold) candidates.push_back(score);
  }
  Selection sel;
  sel.pooled_exemplars = pooled.size();
  sel.candidates = candidates.size();
  if (candidates.size() < 2 * set_size) {
    throw SelectionError(fmt::format(
        "only {} of {} exemplars have |z| > {}; need {} for two sets of {} (try a lower threshold)",
        candidates.size(), pooled.size(), threshold, 2 * set_size, set_size));
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const auto& a, const auto& b) { return a.z != b.z ? a.z > b.z : a.id < b.id; });
  sel.high.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(set_size));
  std::vector<PooledScore> rest(candidates.begin() + static_cast<std::ptrdiff_t>(set_size), candidates.end());
  std::sort(rest.begin(), rest.end(), [](const auto& a, const auto& b) { return a.z != b.z ? a.z < b.z : a.id < b.id; });
  sel.low.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(set_size));
  return sel;
}

ordered_json to_json(const CurveSummary& c) {
  ordered_json j;
  j["trials"] = c.trials;
  j["permutations"] = c.permutations;
  j["K"] = c.k_max;
  ordered_json rows = ordered_json::array();
  for (Eigen::Index k = 0; k < c.grand_mean.size(); ++k) {
    ordered_json row;
    row["k"] = k;
    row["grand_mean"] = c.grand_mean(k);
    row["std_over_trials"] = c.std_over_trials(k);
    row["std_over_all_perms"] = c.std_over_all_perms(k);
    std::vector<double> per_trial(static_cast<std::size_t>(c.mean_over_perms.rows()));
    for (Eigen::Index t = 0; t < c.mean_over_perms.rows(); ++t) per_trial[static_cast<std::size_t>(t)] = c.mean_over_perms(t, k);
    row["mean_over_perms_per_trial"] = per_trial;
    rows.push_back(row);
  }
  j["curve"] = rows;
  return j;
}

void write_curve_csv(std::ostream& out, const CurveSummary& c) {
  out << "k,grand_mean,std_over_trials,std_over_all_perms";
  for (int t : c.trials) out << ",trial" << t << "_mean";
  out << '\n';
  for (Eigen::Index k = 0; k < c.grand_mean.size(); ++k) {
    out << fmt::format("{},{},{},{}", k, c.grand_mean(k), c.std_over_trials(k), c.std_over_all_perms(k));
    for (Eigen::Index t = 0; t < c.mean_over_perms.rows(); ++t) out << ',' << fmt::format("{}", c.mean_over_perms(t, k));
    out << '\n';
  }
}

namespace {

ordered_json pooled_json(const std::vector<PooledScore>& set) {
  ordered_json a = ordered_json::array();
  for (const auto& s : set) a.push_back({{"id", s.id}, {"z", s.z}, {"trial", s.trial}});
  return a;
}

}  // namespace

ordered_json to_json(const ZScoreReport& r) {
  ordered_json j;
  j["mode"] = std::string(to_string(r.mode));
  j["threshold"] = r.threshold;
  j["set_size"] = r.set_size;
  ordered_json trials = ordered_json::array();
  for (const auto& t : r.trials) {
    ordered_json tj;
    tj["trial"] = t.trial;
    tj["mu_t"] = t.mu_t;
    tj["sigma_t"] = t.sigma_t;
    ordered_json ex = ordered_json::array();
    for (std::size_t i = 0; i < t.ids.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      ex.push_back({{"id", t.ids[i]}, {"mu_e", t.mu(ii)}, {"z", t.z(ii)}});
    }
    tj["exemplars"] = ex;
    trials.push_back(tj);
  }
  j["trials"] = trials;
  j["candidates"] = r.selection.candidates;
  j["pooled_exemplars"] = r.selection.pooled_exemplars;
  j["high_set"] = pooled_json(r.selection.high);
  j["low_set"] = pooled_json(r.selection.low);
  return j;
}

void write_zscores_csv(std::ostream& out, const ZScoreReport& r) {
  out << "trial,exemplar,mu_e,mu_t,sigma_t,z\n";
  for (const auto& t : r.trials) {
    for (std::size_t i = 0; i < t.ids.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      out << fmt::format("{},{},{},{},{},{}\n", t.trial, t.ids[i], t.mu(ii), t.mu_t, t.sigma_t, t.z(ii));
    }
  }
}

void write_curve_plot_csv(std::ostream& out, const CurveSummary& c) {
  out << "k,grand_mean,std_over_trials,lower,upper,std_over_all_perms\n";
  for (Eigen::Index k = 0; k < c.grand_mean.size(); ++k) {
    const double m = c.grand_mean(k);
    const double s = c.std_over_trials(k);
    out << fmt::format("{},{},{},{},{},{}\n", k, m, s, m - s, m + s, c.std_over_all_perms(k));
  }
}

void write_trace_csv(std::ostream& out, std::span<const EvalRecord> records) {
  const auto grids = build_grids(records);
  const auto ks = grids.front().accuracy.cols();
  out << "trial,perm";
  for (Eigen::Index k = 0; k < ks; ++k) out << ",acc_k" << k;
  out << '\n';
  for (const auto& g : grids) {
    for (Eigen::Index p = 0; p < g.accuracy.rows(); ++p) {
      out << g.trial << ',' << p;
      for (Eigen::Index k = 0; k < ks; ++k) out << ',' << fmt::format("{}", g.accuracy(p, k));
      out << '\n';
    }
  }
}

void write_one_shot_csv(std::ostream& out, std::span<const EvalRecord> records) {
  const auto grids = build_grids(records);
  out << "trial,perm,kind,exemplar,accuracy\n";
  for (const auto& g : grids) {
    // k=0 is identical for every permutation, so one reference row per trial.
    out << fmt::format("{},,zero-shot,,{}\n", g.trial, g.accuracy(0, 0));
    if (g.accuracy.cols() < 2) continue;
    for (Eigen::Index p = 0; p < g.accuracy.rows(); ++p) {
      const auto& rec = g.cell(static_cast<std::size_t>(p), 1);
      out << fmt::format("{},{},one-shot,{},{}\n", g.trial, p, rec.prefix_ids.front(), g.accuracy(p, 1));
    }
  }
}

}  // namespace icleval
