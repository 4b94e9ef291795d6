#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string_view>

#include <Eigen/Core>

#include "condfilter/kernel.hpp"
#include "condfilter/kqr.hpp"
#include "condfilter/model.hpp"

namespace condfilter {

/// Acceptance level for the test point's dual coefficient. Randomized draws
/// are uniform on (-alpha, 1 - alpha); deterministic mode compares strictly
/// against 1 - alpha.
struct RandomizationDraw {
  double u = 0.0;
  Randomization mode = Randomization::kRandomized;

  bool accepts(double test_dual, double alpha) const {
    return mode == Randomization::kRandomized ? test_dual <= u
                                              : test_dual < 1.0 - alpha;
  }
};

/// Stable per-record seed: FNV-1a of `id` mixed with `seed` by splitmix64.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view id);

RandomizationDraw make_draw(const FilterConfig& config, std::string_view sample_id);

/// The ceil((n+1)(1-alpha))-th smallest calibration score, or +infinity when
/// that index exceeds n.
double marginal_threshold(std::span<const double> cal_scores, double alpha);

struct CutoffResult {
  double cutoff = 0.0;
  int probes = 0;
  long long solver_iterations = 0;
  // Test dual coefficient and fit at the accepted imputed score.
  double test_dual = 0.0;
  KqrFit fit;
  bool keep_nothing = false;   // event held across the whole bracket
  bool keep_everything = false;  // event failed across the whole bracket
};

/// Calibration state for conditional cutoffs: calibration anchors, their
/// nonconformity scores and the shared calibration Gram block. Immutable
/// after construction; cutoff() is safe to call concurrently.
class ConditionalCalibrator {
 public:
  ConditionalCalibrator(AnchorMatrix cal_embeddings, Eigen::VectorXd cal_scores,
                        const KernelSpec& kernel, const FilterConfig& config);

  /// max{S : event(u_test(S))}, located by bisection over
  /// [min grid - 1, max grid + 1] where the grid holds the calibration
  /// scores and `test_surrogates`.
  CutoffResult cutoff(const Eigen::Ref<const Eigen::VectorXd>& test_embedding,
                      std::span<const double> test_surrogates,
                      const RandomizationDraw& draw) const;

  /// Problem with the test point appended; its score is a placeholder.
  KqrProblem problem_for(const Eigen::Ref<const Eigen::VectorXd>& test_embedding) const;

  const AnchorMatrix& embeddings() const { return *cal_embeddings_; }
  const Eigen::VectorXd& scores() const { return cal_scores_; }
  const KernelSpec& kernel() const { return kernel_; }
  const FilterConfig& config() const { return config_; }

 private:
  std::shared_ptr<const AnchorMatrix> cal_embeddings_;
  Eigen::VectorXd cal_scores_;
  KernelSpec kernel_;
  FilterConfig config_;
  Eigen::MatrixXd cal_gram_;
};

CutoffResult conditional_cutoff(const AnchorMatrix& cal_embeddings,
                                const Eigen::VectorXd& cal_scores,
                                const Eigen::Ref<const Eigen::VectorXd>& test_embedding,
                                std::span<const double> test_surrogates,
                                const KernelSpec& kernel, const FilterConfig& config,
                                const RandomizationDraw& draw);

/// Plug-in estimate of the conditional coverage deviation at x':
/// -gamma f_W(x') / mean_i W(X_i, x').
double coverage_gap_estimate(const KqrFit& fit,
                             const Eigen::Ref<const Eigen::VectorXd>& x_prime,
                             const AnchorMatrix& cal_embeddings);

}  // namespace condfilter
