#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "condfilter/kernel.hpp"
#include "condfilter/model.hpp"

namespace condfilter {

enum class StrategyKind {
  kUnaugmented,
  kUnfiltered,
  kFixedSurrogateThreshold,
  kHybrid,
  kMarginalCp,
  kConditionalCp,
};

struct Strategy {
  StrategyKind kind = StrategyKind::kConditionalCp;
  double threshold = 0.5;  // used by fixed_surrogate_threshold and hybrid

  /// Accepts "unaugmented", "unfiltered", "fixed_surrogate_threshold[:t]",
  /// "hybrid[:t]", "marginal_cp", "conditional_cp". Throws
  /// std::invalid_argument otherwise.
  static Strategy parse(std::string_view text);
  std::string name() const;
  bool needs_calibration() const {
    return kind == StrategyKind::kMarginalCp || kind == StrategyKind::kConditionalCp;
  }

  bool operator==(const Strategy&) const = default;
};

/// Everything the filter stage needs from the gold-scored calibration split.
struct Calibration {
  std::vector<std::string> sample_ids;
  AnchorMatrix embeddings;
  Eigen::VectorXd scores;
  KernelSpec kernel;
};

/// Validates `cal` (gold required), scores it and resolves the kernel
/// bandwidth ("auto" uses the median heuristic over calibration embeddings).
Calibration calibrate(const Dataset& cal, const FilterConfig& config);

/// Decisions for every record of `aug`, in input order. `calibration` may be
/// null for strategies that do not need it. Hybrid thresholds gold where a
/// record carries it and the surrogate otherwise.
std::vector<FilterDecision> apply_filter(const Calibration* calibration,
                                         const Dataset& aug, const Strategy& strategy,
                                         const FilterConfig& config, unsigned workers = 0);

/// Calibrates on `cal` and filters `aug`. For the hybrid strategy the
/// gold-thresholded calibration records follow the augmentation decisions.
std::vector<FilterDecision> run_filter(const Dataset& cal, const Dataset& aug,
                                       const Strategy& strategy,
                                       const FilterConfig& config, unsigned workers = 0);

/// Feature vector of one generation for the surrogate learner.
using GenerationFeatureMap =
    std::function<Eigen::VectorXd(const SampleRecord&, const ScoredGeneration&)>;

/// Parent embedding followed by the generation's raw surrogate score.
Eigen::VectorXd default_generation_features(const SampleRecord& record,
                                            const ScoredGeneration& generation);

enum class LearnerMethod { kNone, kKnnSmoother };

/// Smooths raw surrogate observations by averaging the k nearest training
/// generations (Euclidean distance in feature space, ties broken by
/// training order).
class SurrogateLearner {
 public:
  SurrogateLearner() = default;  // method none: identity

  LearnerMethod method() const { return method_; }
  int k() const { return k_; }
  Eigen::Index feature_dimension() const { return features_.cols(); }

  double predict(const Eigen::Ref<const Eigen::VectorXd>& feature) const;
  const GenerationFeatureMap& feature_map() const { return map_; }

 private:
  friend SurrogateLearner train_surrogate_learner(const Dataset&, LearnerMethod, int,
                                                  GenerationFeatureMap);
  LearnerMethod method_ = LearnerMethod::kNone;
  int k_ = 0;
  AnchorMatrix features_;
  Eigen::VectorXd targets_;
  GenerationFeatureMap map_ = default_generation_features;
};

SurrogateLearner train_surrogate_learner(
    const Dataset& train, LearnerMethod method, int k = 5,
    GenerationFeatureMap map = default_generation_features);

/// Copy of `dataset` with smoothed_surrogate set on every generation.
Dataset apply_surrogate_learner(const SurrogateLearner& learner, const Dataset& dataset);

struct DatasetSplits {
  Dataset train;
  Dataset calib;
  Dataset aug;
};

/// Seeded shuffle, then cut at floor(N * cumulative fraction) boundaries.
DatasetSplits split_dataset(const Dataset& records, const std::array<double, 3>& fractions,
                            std::uint64_t seed);

}  // namespace condfilter
