#include "condfilter/kqr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace condfilter {

void KqrProblem::validate() const {
  if (!anchors || !gram) throw std::invalid_argument("kqr: missing anchors or gram");
  const Eigen::Index m = size();
  if (m < 1) throw std::invalid_argument("kqr: empty problem");
  if (anchors->rows() != m) {
    throw std::invalid_argument("kqr: score count differs from anchor count");
  }
  if (gram->rows() != m || gram->cols() != m) {
    throw std::invalid_argument("kqr: gram dimension differs from anchor count");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("kqr: alpha outside (0,1)");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw std::invalid_argument("kqr: gamma must be positive");
  }
  if (!scores.allFinite()) throw std::invalid_argument("kqr: non-finite score");
}

KqrProblem KqrProblem::build(AnchorMatrix anchors, Eigen::VectorXd scores,
                             double alpha, double gamma, const KernelSpec& kernel) {
  KqrProblem p;
  p.gram = std::make_shared<const Eigen::MatrixXd>(condfilter::gram(anchors, kernel));
  p.anchors = std::make_shared<const AnchorMatrix>(std::move(anchors));
  p.scores = std::move(scores);
  p.alpha = alpha;
  p.gamma = gamma;
  p.kernel = kernel;
  p.validate();
  return p;
}

double KqrFit::rkhs_part(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return rkhs_scale() * kernel_row(*anchors, x, kernel).dot(dual_coeffs);
}

double eval(const KqrFit& fit, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return fit.intercept + fit.rkhs_part(x);
}

double pinball_loss(double residual, double alpha) {
  return residual >= 0.0 ? (1.0 - alpha) * residual : -alpha * residual;
}

namespace {

// Working state of the pairwise dual ascent.
struct SmoState {
  Eigen::VectorXd u;   // dual coefficients
  Eigen::VectorXd ku;  // K u
  Eigen::VectorXd g;   // S - tau K u, the dual gradient
};

struct Extremes {
  Eigen::Index up = -1;   // argmax g over u < U
  Eigen::Index low = -1;  // argmin g over u > L
  double g_up = -std::numeric_limits<double>::infinity();
  double g_low = std::numeric_limits<double>::infinity();
};

Extremes find_extremes(const SmoState& s, double lo, double hi) {
  Extremes e;
  for (Eigen::Index k = 0; k < s.u.size(); ++k) {
    if (s.u[k] < hi && s.g[k] > e.g_up) {
      e.g_up = s.g[k];
      e.up = k;
    }
    if (s.u[k] > lo && s.g[k] < e.g_low) {
      e.g_low = s.g[k];
      e.low = k;
    }
  }
  return e;
}

void refresh(const Eigen::MatrixXd& k, const Eigen::VectorXd& scores, double tau,
             SmoState& s) {
  s.ku.noalias() = k * s.u;
  s.g = scores - tau * s.ku;
}

// Runs pairwise updates until the maximal violation drops to `tol` or the
// budget is exhausted. Returns true on convergence.
bool smo(const Eigen::MatrixXd& k, const Eigen::VectorXd& scores, double tau,
         double lo, double hi, double tol, long long budget, SmoState& s,
         long long& iterations) {
  constexpr double kMinCurvature = 1e-12;
  constexpr double kBoundSnap = 1e-12;
  const Eigen::Index m = s.u.size();
  int refreshes = 0;
  while (true) {
    const Extremes e = find_extremes(s, lo, hi);
    if (e.up < 0 || e.low < 0 || e.g_up - e.g_low <= tol) {
      // Incremental updates drift; confirm against an exact gradient.
      if (refreshes >= 3) return true;
      ++refreshes;
      refresh(k, scores, tau, s);
      const Extremes exact = find_extremes(s, lo, hi);
      if (exact.up < 0 || exact.low < 0 || exact.g_up - exact.g_low <= tol) {
        return true;
      }
      continue;
    }
    if (iterations >= budget) return false;

    const Eigen::Index i = e.up;
    const double kii = k(i, i);
    // Second-order choice of the partner among coefficients that can decrease.
    Eigen::Index j = -1;
    double best_gain = -1.0;
    for (Eigen::Index c = 0; c < m; ++c) {
      if (!(s.u[c] > lo)) continue;
      const double diff = e.g_up - s.g[c];
      if (diff <= 0.0) continue;
      const double eta = std::max(tau * (kii + k(c, c) - 2.0 * k(i, c)), kMinCurvature);
      const double gain = diff * diff / eta;
      if (gain > best_gain) {
        best_gain = gain;
        j = c;
      }
    }
    if (j < 0) j = e.low;

    const double diff = s.g[i] - s.g[j];
    const double eta = std::max(tau * (kii + k(j, j) - 2.0 * k(i, j)), kMinCurvature);
    const double room_i = hi - s.u[i];
    const double room_j = s.u[j] - lo;
    double t = diff / eta;
    if (t >= room_i || t >= room_j) {
      if (room_i <= room_j) {
        t = room_i;
        s.u[i] = hi;
        s.u[j] = room_i == room_j ? lo : s.u[j] - t;
      } else {
        t = room_j;
        s.u[j] = lo;
        s.u[i] += t;
      }
    } else {
      s.u[i] += t;
      s.u[j] -= t;
    }
    // Rounding can leave a coefficient a few ulps inside a bound it reached
    // exactly; snap it so the bound is visible to strict comparisons.
    for (const Eigen::Index c : {i, j}) {
      if (hi - s.u[c] <= kBoundSnap) s.u[c] = hi;
      if (s.u[c] - lo <= kBoundSnap) s.u[c] = lo;
    }
    s.ku.noalias() += t * (k.col(i) - k.col(j));
    s.g.noalias() -= (tau * t) * (k.col(i) - k.col(j));
    ++iterations;
  }
}

std::string describe_gram(const Eigen::MatrixXd& k) {
  const Eigen::Index m = k.rows();
  double max_offdiag = 0.0;
  long long near_duplicates = 0;
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = j + 1; i < m; ++i) {
      max_offdiag = std::max(max_offdiag, k(i, j));
      if (k(i, j) > 1.0 - 1e-12) ++near_duplicates;
    }
  }
  std::ostringstream os;
  os << "gram " << m << "x" << m << ", max off-diagonal " << max_offdiag
     << ", near-duplicate anchor pairs " << near_duplicates;
  return os.str();
}

}  // namespace

KqrFit fit(const KqrProblem& problem, double tol, const KqrFit* warm_start) {
  problem.validate();
  if (!(tol > 0.0)) throw std::invalid_argument("kqr: tolerance must be positive");
  const Eigen::Index m = problem.size();
  const double tau = problem.rkhs_scale();
  const double lo = problem.lower();
  const double hi = problem.upper();
  const Eigen::MatrixXd& k = *problem.gram;

  SmoState s;
  if (warm_start && warm_start->dual_coeffs.size() == m &&
      warm_start->kernel_dual.size() == m) {
    s.u = warm_start->dual_coeffs;
    s.ku = warm_start->kernel_dual;
    s.g = problem.scores - tau * s.ku;
  } else {
    s.u = Eigen::VectorXd::Zero(m);
    s.ku = Eigen::VectorXd::Zero(m);
    s.g = problem.scores;
  }

  const long long budget = 100LL * m * m;
  long long iterations = 0;
  bool jitter = false;
  bool converged = smo(k, problem.scores, tau, lo, hi, tol, budget, s, iterations);
  if (!converged) {
    Eigen::MatrixXd jittered = k;
    jittered.diagonal().array() += 1e-10;
    jitter = true;
    refresh(jittered, problem.scores, tau, s);
    long long extra = 0;
    converged = smo(jittered, problem.scores, tau, lo, hi, tol, budget, s, extra);
    iterations += extra;
    if (!converged) {
      std::ostringstream os;
      os << "kqr solver did not converge after " << iterations
         << " pairwise updates (jitter applied); " << describe_gram(k);
      throw SolverError(os.str());
    }
    // Report against the original matrix.
    refresh(k, problem.scores, tau, s);
  }

  const Extremes e = find_extremes(s, lo, hi);
  KqrFit out;
  if (e.up >= 0 && e.low >= 0) {
    out.intercept = 0.5 * (e.g_up + e.g_low);
  } else if (e.up >= 0) {
    out.intercept = e.g_up;
  } else {
    out.intercept = e.g_low;
  }
  out.dual_coeffs = std::move(s.u);
  out.kernel_dual = std::move(s.ku);
  out.anchors = problem.anchors;
  out.kernel = problem.kernel;
  out.gamma = problem.gamma;
  out.diagnostics.iterations = iterations;
  out.diagnostics.max_violation =
      (e.up >= 0 && e.low >= 0) ? std::max(0.0, e.g_up - e.g_low) : 0.0;
  out.diagnostics.jitter_applied = jitter;
  const KktReport kkt = check_kkt(problem, out);
  out.diagnostics.kkt_residual =
      std::max({kkt.box_violation, kkt.sum_violation, kkt.complementarity});
  out.diagnostics.duality_gap = kkt.duality_gap;
  return out;
}

TestDual dual_at_test(const KqrProblem& problem, double imputed,
                      const KqrFit* warm_start, double tol) {
  if (!std::isfinite(imputed)) throw std::invalid_argument("imputed score must be finite");
  KqrProblem p = problem;
  p.scores[p.size() - 1] = imputed;
  TestDual out;
  out.fit = fit(p, tol, warm_start);
  out.test_dual = out.fit.dual_coeffs[p.size() - 1];
  return out;
}

double primal_objective(const KqrProblem& problem, const KqrFit& fit) {
  const double m = static_cast<double>(problem.size());
  const double tau = problem.rkhs_scale();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < problem.size(); ++i) {
    const double f = fit.intercept + tau * fit.kernel_dual[i];
    loss += pinball_loss(problem.scores[i] - f, problem.alpha);
  }
  // ||f_W||^2 = tau^2 u'Ku.
  const double norm2 = tau * tau * fit.dual_coeffs.dot(fit.kernel_dual);
  return loss / m + 0.5 * problem.gamma * norm2;
}

double dual_objective(const KqrProblem& problem, const Eigen::VectorXd& dual) {
  const double m = static_cast<double>(problem.size());
  const double tau = problem.rkhs_scale();
  const double quad = dual.dot(*problem.gram * dual);
  return (dual.dot(problem.scores) - 0.5 * tau * quad) / m;
}

double KktReport::worst() const {
  return std::max({box_violation, sum_violation, complementarity, duality_gap});
}

KktReport check_kkt(const KqrProblem& problem, const KqrFit& fit) {
  KktReport r;
  const double lo = problem.lower();
  const double hi = problem.upper();
  const double tau = problem.rkhs_scale();
  // Bound membership is judged with a slack well below any solver tolerance.
  constexpr double kBoundSlack = 1e-12;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < problem.size(); ++i) {
    const double u = fit.dual_coeffs[i];
    sum += u;
    r.box_violation = std::max({r.box_violation, lo - u, u - hi});
    const double residual = problem.scores[i] - fit.intercept - tau * fit.kernel_dual[i];
    if (u < hi - kBoundSlack) r.complementarity = std::max(r.complementarity, residual);
    if (u > lo + kBoundSlack) r.complementarity = std::max(r.complementarity, -residual);
  }
  r.sum_violation = std::abs(sum);
  const Eigen::VectorXd ku = *problem.gram * fit.dual_coeffs;
  KqrFit exact = fit;
  exact.kernel_dual = ku;
  r.duality_gap = primal_objective(problem, exact) - dual_objective(problem, fit.dual_coeffs);
  return r;
}

}  // namespace condfilter
