#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "condfilter/model.hpp"
#include "condfilter/pipeline.hpp"

namespace condfilter {

enum class GoldModel { kHomogeneous, kHeterogeneousByRegion };

/// Synthetic calibration/augmentation draw. Embeddings are i.i.d. standard
/// normal; the region of a record is 1 when its first coordinate is >= 0.
struct ScenarioSpec {
  int n_cal = 200;
  int n_aug = 100;
  int K = 5;
  int d = 2;
  GoldModel gold_model = GoldModel::kHomogeneous;
  double surrogate_noise_sd = 0.1;
  std::uint64_t seed = 0;
  // Mean gold score; region 0 uses gold_mean, region 1 gold_mean - region_gap
  // under the heterogeneous model.
  double gold_mean = 0.7;
  double region_gap = 0.3;
  double beta_concentration = 4.0;
  // Spread of generation feature vectors around their parent embedding.
  double feature_noise_sd = 0.5;

  void validate() const;
};

/// sample_id -> gen_id -> gold score.
using HiddenGold = std::unordered_map<std::string, std::unordered_map<std::string, double>>;

struct Scenario {
  Dataset cal;  // gold attached
  Dataset aug;  // surrogate only
  HiddenGold hidden_gold;  // gold for aug generations
  std::unordered_map<std::string, int> region;  // every record
  // "<sample_id>/<gen_id>" -> generation feature vector
  std::unordered_map<std::string, Eigen::VectorXd> generation_features;
};

std::string generation_key(const std::string& sample_id, const std::string& gen_id);

Scenario generate_scenario(const ScenarioSpec& spec);

/// Realized false-inclusion count of one decision against hidden gold.
std::size_t realized_loss(const FilterDecision& decision, const HiddenGold& hidden_gold,
                          double lambda);

struct CoverageTally {
  std::size_t covered = 0;
  std::size_t total = 0;
  double rate() const { return total == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(total); }
};

/// Fraction of decisions whose realized loss is <= rho. Throws
/// std::invalid_argument when a decision has no hidden gold entry.
double empirical_coverage(std::span<const FilterDecision> decisions,
                          const HiddenGold& hidden_gold, double lambda, int rho);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool degenerate = false;  // some denominator was empty
};

/// Positive class: gold >= lambda. Predicted positive: kept.
Prf selection_prf(std::span<const FilterDecision> decisions, const HiddenGold& hidden_gold,
                  double lambda);

/// ||A||_F^2 / ||A||_2^2. Throws std::invalid_argument for a zero matrix.
double stable_rank(const Eigen::MatrixXd& matrix);

/// Entropy in bits of the normalized counts.
double shannon_entropy(std::span<const long long> counts);

struct LogisticConfig {
  double learning_rate = 0.5;
  int iterations = 500;
  double l2 = 1e-3;
};

struct LogisticModel {
  Eigen::VectorXd weights;
  double bias = 0.0;
  double predict_probability(const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

/// Mean log-loss plus l2/2 ||w||^2 (bias unpenalized); parameters are packed
/// as [w; b].
double logistic_objective(const Eigen::MatrixXd& x, const Eigen::VectorXi& y,
                          const Eigen::VectorXd& params, double l2);
Eigen::VectorXd logistic_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXi& y,
                                  const Eigen::VectorXd& params, double l2);

/// Full-batch gradient descent from zero. Throws std::invalid_argument when
/// the labels contain a single class.
LogisticModel fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXi& y,
                           const LogisticConfig& config);

/// F1 of the positive class (label 1).
double binary_f1(const Eigen::VectorXi& truth, const Eigen::VectorXi& predicted);

/// Two-class task where half the generations are corrupted: drawn from the
/// opposite class while inheriting the parent's label, with low gold.
struct ToyTaskSpec {
  int n_base = 20;
  int n_cal = 100;
  int n_aug = 100;
  int n_test = 400;
  int K = 4;
  int d = 2;
  double class_separation = 3.0;
  double corrupted_fraction = 0.5;
  double generation_noise_sd = 0.5;
  double good_gold_mean = 0.8;
  double bad_gold_mean = 0.2;
  double beta_concentration = 8.0;
  double surrogate_noise_sd = 0.15;
  std::uint64_t seed = 0;
};

struct ToyTask {
  Eigen::MatrixXd base_x;
  Eigen::VectorXi base_y;
  Eigen::MatrixXd test_x;
  Eigen::VectorXi test_y;
  Scenario scenario;
};

ToyTask generate_toy_task(const ToyTaskSpec& spec);

/// Trains on base samples plus every kept augmentation generation (features
/// from the scenario, label inherited from the parent record) and returns
/// test F1.
double downstream_toy_eval(const ToyTask& task, std::span<const FilterDecision> decisions,
                           const LogisticConfig& config);

struct StrategyReport {
  std::string strategy;
  double alpha = 0.0;
  int rho = 0;
  std::size_t n_trials = 0;
  double coverage = 0.0;
  std::map<int, CoverageTally> per_region;
  // Spread of per-replicate coverage.
  double coverage_sd = 0.0;
  double coverage_q1 = 0.0;
  double coverage_median = 0.0;
  double coverage_q3 = 0.0;
  Prf prf;
  std::optional<double> stable_rank;  // of kept generation features, mean over replicates
  std::optional<double> entropy;      // of kept generation labels, pooled
};

/// Runs `replicates` independent scenarios derived from `base` (seed per
/// replicate) through one strategy and aggregates coverage and metrics.
StrategyReport simulate_strategy(const ScenarioSpec& base, int replicates,
                                 const Strategy& strategy, const FilterConfig& config,
                                 unsigned workers = 0);

}  // namespace condfilter
