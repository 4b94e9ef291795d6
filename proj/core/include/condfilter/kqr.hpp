#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "condfilter/kernel.hpp"

namespace condfilter {

/// Regularized kernel quantile regression with an unpenalized intercept,
///
///   min_{beta, f}  1/m sum_i pinball_alpha(S_i - beta - f(X_i)) + gamma/2 ||f||^2,
///
/// over m anchors (calibration points followed by the test point). The
/// optimum is f = tau * sum_j u_j W(., X_j) with tau = 1 / (gamma m) and the
/// dual coefficients u_j in [-alpha, 1 - alpha], sum_j u_j = 0, solving
///
///   max_u  u'S - tau/2 u'Ku.
struct KqrProblem {
  std::shared_ptr<const AnchorMatrix> anchors;
  Eigen::VectorXd scores;
  double alpha = 0.1;
  double gamma = 1.0;
  KernelSpec kernel;
  std::shared_ptr<const Eigen::MatrixXd> gram;

  Eigen::Index size() const { return scores.size(); }
  double rkhs_scale() const { return 1.0 / (gamma * static_cast<double>(size())); }
  double lower() const { return -alpha; }
  double upper() const { return 1.0 - alpha; }

  /// Throws std::invalid_argument on inconsistent sizes or parameters.
  void validate() const;

  /// Assembles a problem, computing the Gram matrix from the anchors.
  static KqrProblem build(AnchorMatrix anchors, Eigen::VectorXd scores,
                          double alpha, double gamma, const KernelSpec& kernel);
};

struct KqrDiagnostics {
  long long iterations = 0;
  double max_violation = 0.0;   // max_{up} g - min_{low} g at exit
  double kkt_residual = 0.0;
  double duality_gap = 0.0;
  bool jitter_applied = false;
};

struct KqrFit {
  double intercept = 0.0;
  Eigen::VectorXd dual_coeffs;
  // K * dual_coeffs at the anchors; reused for warm starts.
  Eigen::VectorXd kernel_dual;
  std::shared_ptr<const AnchorMatrix> anchors;
  KernelSpec kernel;
  double gamma = 1.0;
  KqrDiagnostics diagnostics;

  double rkhs_scale() const {
    return 1.0 / (gamma * static_cast<double>(dual_coeffs.size()));
  }
  /// f_W(x), the fitted function without its intercept.
  double rkhs_part(const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Pairwise (SMO-style) dual ascent. `warm_start`, when given, must come
/// from a problem with the same anchors; its coefficients seed the solve.
/// Throws SolverError after 100 m^2 pairwise updates without reaching `tol`
/// (a diagonal jitter of 1e-10 is tried once before giving up).
KqrFit fit(const KqrProblem& problem, double tol,
           const KqrFit* warm_start = nullptr);

/// beta + f_W(x).
double eval(const KqrFit& fit, const Eigen::Ref<const Eigen::VectorXd>& x);

struct TestDual {
  KqrFit fit;
  double test_dual = 0.0;
};

/// Refits with the last anchor's score replaced by `imputed` and returns
/// that anchor's dual coefficient.
TestDual dual_at_test(const KqrProblem& problem, double imputed,
                      const KqrFit* warm_start, double tol);

double pinball_loss(double residual, double alpha);

/// Primal objective at (intercept, f_W) of `fit`.
double primal_objective(const KqrProblem& problem, const KqrFit& fit);

/// Dual objective scaled to match the primal: (u'S - tau/2 u'Ku) / m.
double dual_objective(const KqrProblem& problem, const Eigen::VectorXd& dual);

struct KktReport {
  double box_violation = 0.0;
  double sum_violation = 0.0;
  // Largest residual with the wrong sign for its coefficient: a coefficient
  // below its upper bound with residual > 0, or above its lower bound with
  // residual < 0.
  double complementarity = 0.0;
  double duality_gap = 0.0;

  double worst() const;
};

KktReport check_kkt(const KqrProblem& problem, const KqrFit& fit);

}  // namespace condfilter
