#pragma once

#include "icleval/engine.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace icleval {

// Records of one trial arranged as a P x (K+1) accuracy grid.
struct TrialGrid {
  int trial = 0;
  Eigen::MatrixXd accuracy;                  // (perm, k)
  std::vector<const EvalRecord*> cells;      // row-major (perm, k); points into the record list

  const EvalRecord& cell(std::size_t perm, std::size_t k) const { return *cells[perm * static_cast<std::size_t>(accuracy.cols()) + k]; }
};

// Every trial must cover the same full grid; throws DataError naming the
// first missing or duplicated (trial, perm, k). Trials come out sorted.
std::vector<TrialGrid> build_grids(std::span<const EvalRecord> records);

struct CurveSummary {
  std::vector<int> trials;
  std::size_t permutations = 0;
  std::size_t k_max = 0;
  Eigen::MatrixXd mean_over_perms;     // trials x (K+1)
  Eigen::RowVectorXd grand_mean;       // mean over trials of per-trial means
  Eigen::RowVectorXd std_over_trials;  // population std of the per-trial means
  Eigen::RowVectorXd std_over_all_perms;  // population std over every (trial, perm) cell
};

CurveSummary summarize_curve(std::span<const EvalRecord> records);

enum class ExemplarMeanMode {
  kAtAddition,  // accuracy at the step where the exemplar is the newest prefix element
  kInPrefix,    // every cell whose prefix contains the exemplar
};

std::string_view to_string(ExemplarMeanMode mode);
ExemplarMeanMode parse_exemplar_mean_mode(std::string_view name);

struct TrialExemplarMeans {
  int trial = 0;
  std::vector<std::string> ids;  // support order
  Eigen::VectorXd mu;
};

std::vector<TrialExemplarMeans> per_example_average(std::span<const EvalRecord> records,
                                                    std::span<const SupportSet> support_sets,
                                                    ExemplarMeanMode mode = ExemplarMeanMode::kAtAddition);

struct TrialZScores {
  int trial = 0;
  std::vector<std::string> ids;
  Eigen::VectorXd mu;
  double mu_t = 0.0;
  double sigma_t = 0.0;  // population std of mu
  Eigen::VectorXd z;     // all zero when sigma_t == 0
};

TrialZScores trial_zscores(const TrialExemplarMeans& means);

struct PooledScore {
  std::string id;
  double z = 0.0;
  int trial = 0;  // trial that produced the pooled (most extreme) z

  bool operator==(const PooledScore&) const = default;
};

struct Selection {
  std::vector<PooledScore> high;  // z descending
  std::vector<PooledScore> low;   // z ascending
  std::size_t candidates = 0;
  std::size_t pooled_exemplars = 0;
};

// Pools each exemplar's most extreme z across trials, keeps those with
// |z| > threshold, and takes the set_size largest and smallest. Ties are
// broken by exemplar id.
Selection select_extremes(std::span<const TrialZScores> trials, double threshold = 1.0, std::size_t set_size = 6);

struct ZScoreReport {
  ExemplarMeanMode mode = ExemplarMeanMode::kAtAddition;
  double threshold = 1.0;
  std::size_t set_size = 6;
  std::vector<TrialZScores> trials;
  Selection selection;
};

nlohmann::ordered_json to_json(const CurveSummary& curve);
void write_curve_csv(std::ostream& out, const CurveSummary& curve);
nlohmann::ordered_json to_json(const ZScoreReport& report);
void write_zscores_csv(std::ostream& out, const ZScoreReport& report);

// Plot data tables.
// k, grand_mean, std_over_trials, lower, upper, std_over_all_perms
void write_curve_plot_csv(std::ostream& out, const CurveSummary& curve);
// trial, perm, acc_k0 .. acc_kK: one row per permutation
void write_trace_csv(std::ostream& out, std::span<const EvalRecord> records);
// trial, perm, kind, exemplar, accuracy: one one-shot row per permutation and
// one zero-shot reference row per trial
void write_one_shot_csv(std::ostream& out, std::span<const EvalRecord> records);

}  // namespace icleval
