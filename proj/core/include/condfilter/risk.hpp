#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "condfilter/model.hpp"

namespace condfilter {

/// Contract for losses usable inside the nonconformity score: monotone in
/// the selected set and zero on the empty selection.
class MonotoneLoss {
 public:
  virtual ~MonotoneLoss() = default;
  virtual double operator()(std::span<const std::size_t> selected,
                            std::span<const double> golds,
                            double lambda) const = 0;
};

/// Counts selected generations whose gold score is below lambda.
class FalseInclusionLoss final : public MonotoneLoss {
 public:
  double operator()(std::span<const std::size_t> selected,
                    std::span<const double> golds,
                    double lambda) const override;
};

/// |{k : surrogates[k] >= s and golds[k] < lambda}|.
std::size_t false_inclusion_loss(std::span<const double> surrogates,
                                 std::span<const double> golds, double s,
                                 double lambda);

/// Offset below min(surrogates) used when no threshold is too low, i.e. the
/// infimum is unbounded below.
inline constexpr double kScoreFloorOffset = 1.0;

/// Infimum over s of {s : loss(S(surrogates, s)) <= rho}, where
/// S(surrogates, s) keeps generations with surrogate >= s.
///
/// The loss only changes at observed surrogate values, so the feasible set
/// is an open half-line (g, inf) with g the largest surrogate value whose
/// selection still violates rho. That g is returned. When every threshold
/// is feasible the score is min(surrogates) - kScoreFloorOffset.
///
/// A cutoff c therefore controls the loss (loss at c <= rho) exactly when
/// c > score, which is the event conformal calibration targets.
double nonconformity_score(std::span<const double> surrogates,
                           std::span<const double> golds, double lambda,
                           int rho, const MonotoneLoss& loss);

double nonconformity_score(std::span<const double> surrogates,
                           std::span<const double> golds, double lambda,
                           int rho);

struct CalibrationScore {
  std::string sample_id;
  double score;
};

/// One nonconformity score per record, computed on effective surrogates.
/// Every record must carry gold scores.
std::vector<CalibrationScore> score_calibration_set(const Dataset& records,
                                                    const FilterConfig& config);

}  // namespace condfilter
