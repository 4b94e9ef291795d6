#include "condfilter/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace condfilter {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view id) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : id) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(seed ^ splitmix64(h));
}

RandomizationDraw make_draw(const FilterConfig& config, std::string_view sample_id) {
  RandomizationDraw draw;
  draw.mode = config.randomization;
  if (draw.mode == Randomization::kDeterministic) {
    draw.u = 1.0 - config.alpha;
    return draw;
  }
  std::mt19937_64 rng(derive_seed(config.rng_seed, sample_id));
  // 53-bit uniform on (0, 1), both ends excluded.
  double unit = 0.0;
  while (unit == 0.0) unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  draw.u = -config.alpha + unit;
  return draw;
}

double marginal_threshold(std::span<const double> cal_scores, double alpha) {
  if (cal_scores.empty()) throw std::invalid_argument("marginal_threshold: empty calibration");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("marginal_threshold: alpha outside (0,1)");
  }
  const std::size_t n = cal_scores.size();
  const double level = static_cast<double>(n + 1) * (1.0 - alpha);
  // Guard against (n+1)(1-alpha) landing a hair above an integer.
  const auto index = static_cast<std::size_t>(std::ceil(level - 1e-9));
  if (index > n) return std::numeric_limits<double>::infinity();
  std::vector<double> sorted(cal_scores.begin(), cal_scores.end());
  const std::size_t pos = index == 0 ? 0 : index - 1;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(pos),
                   sorted.end());
  return sorted[pos];
}

ConditionalCalibrator::ConditionalCalibrator(AnchorMatrix cal_embeddings,
                                             Eigen::VectorXd cal_scores,
                                             const KernelSpec& kernel,
                                             const FilterConfig& config)
    : cal_embeddings_(std::make_shared<const AnchorMatrix>(std::move(cal_embeddings))),
      cal_scores_(std::move(cal_scores)),
      kernel_(kernel),
      config_(config) {
  config_.validate();
  if (cal_embeddings_->rows() != cal_scores_.size()) {
    throw std::invalid_argument("calibration embeddings and scores differ in count");
  }
  if (cal_scores_.size() < 1) throw std::invalid_argument("empty calibration set");
  if (!cal_scores_.allFinite()) throw std::invalid_argument("non-finite calibration score");
  cal_gram_ = gram(*cal_embeddings_, kernel_);
}

KqrProblem ConditionalCalibrator::problem_for(
    const Eigen::Ref<const Eigen::VectorXd>& test_embedding) const {
  const Eigen::Index n = cal_scores_.size();
  if (test_embedding.size() != cal_embeddings_->cols()) {
    throw std::invalid_argument("test embedding dimension differs from calibration");
  }
  auto anchors = std::make_shared<AnchorMatrix>(n + 1, cal_embeddings_->cols());
  anchors->topRows(n) = *cal_embeddings_;
  anchors->row(n) = test_embedding.transpose();

  auto k = std::make_shared<Eigen::MatrixXd>(n + 1, n + 1);
  k->topLeftCorner(n, n) = cal_gram_;
  const Eigen::VectorXd row = kernel_row(*cal_embeddings_, test_embedding, kernel_);
  k->col(n).head(n) = row;
  k->row(n).head(n) = row.transpose();
  (*k)(n, n) = 1.0;

  KqrProblem p;
  p.anchors = std::move(anchors);
  p.gram = std::move(k);
  p.scores.resize(n + 1);
  p.scores.head(n) = cal_scores_;
  p.scores[n] = 0.0;
  p.alpha = config_.alpha;
  p.gamma = config_.gamma;
  p.kernel = kernel_;
  return p;
}

CutoffResult ConditionalCalibrator::cutoff(
    const Eigen::Ref<const Eigen::VectorXd>& test_embedding,
    std::span<const double> test_surrogates, const RandomizationDraw& draw) const {
  KqrProblem problem = problem_for(test_embedding);

  double grid_min = cal_scores_.minCoeff();
  double grid_max = cal_scores_.maxCoeff();
  for (double s : test_surrogates) {
    grid_min = std::min(grid_min, s);
    grid_max = std::max(grid_max, s);
  }
  double lo = grid_min - 1.0;
  double hi = grid_max + 1.0;

  CutoffResult out;
  std::optional<KqrFit> warm;
  auto probe = [&](double s) -> TestDual {
    try {
      TestDual td = dual_at_test(problem, s, warm ? &*warm : nullptr, config_.solver_tol);
      out.solver_iterations += td.fit.diagnostics.iterations;
      ++out.probes;
      warm = td.fit;
      return td;
    } catch (const SolverError& e) {
      std::ostringstream os;
      os.precision(17);
      os << e.what() << " (imputed score " << s << ")";
      throw SolverError(os.str());
    }
  };

  TestDual at_hi = probe(hi);
  if (draw.accepts(at_hi.test_dual, config_.alpha)) {
    out.cutoff = hi;
    out.test_dual = at_hi.test_dual;
    out.fit = std::move(at_hi.fit);
    out.keep_nothing = true;
    return out;
  }
  TestDual accepted = probe(lo);
  if (!draw.accepts(accepted.test_dual, config_.alpha)) {
    out.cutoff = lo;
    out.test_dual = accepted.test_dual;
    out.fit = std::move(accepted.fit);
    out.keep_everything = true;
    return out;
  }
  while (hi - lo > config_.bisection_tol) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    TestDual td = probe(mid);
    if (draw.accepts(td.test_dual, config_.alpha)) {
      lo = mid;
      accepted = std::move(td);
    } else {
      hi = mid;
    }
  }
  out.cutoff = lo;
  out.test_dual = accepted.test_dual;
  out.fit = std::move(accepted.fit);
  return out;
}

CutoffResult conditional_cutoff(const AnchorMatrix& cal_embeddings,
                                const Eigen::VectorXd& cal_scores,
                                const Eigen::Ref<const Eigen::VectorXd>& test_embedding,
                                std::span<const double> test_surrogates,
                                const KernelSpec& kernel, const FilterConfig& config,
                                const RandomizationDraw& draw) {
  const ConditionalCalibrator calibrator(cal_embeddings, cal_scores, kernel, config);
  return calibrator.cutoff(test_embedding, test_surrogates, draw);
}

double coverage_gap_estimate(const KqrFit& fit,
                             const Eigen::Ref<const Eigen::VectorXd>& x_prime,
                             const AnchorMatrix& cal_embeddings) {
  if (cal_embeddings.rows() == 0) throw std::invalid_argument("no calibration anchors");
  if (x_prime.size() != cal_embeddings.cols() || x_prime.size() != fit.anchors->cols()) {
    throw std::invalid_argument("coverage gap: dimension mismatch");
  }
  // Both sums are rescaled by exp(xi * d_min^2) so distant points keep a
  // finite ratio instead of 0/0.
  const double xi = fit.kernel.bandwidth;
  const AnchorMatrix& anchors = *fit.anchors;
  Eigen::VectorXd d_fit(anchors.rows());
  for (Eigen::Index i = 0; i < anchors.rows(); ++i) {
    d_fit[i] = (anchors.row(i).transpose() - x_prime).squaredNorm();
  }
  Eigen::VectorXd d_cal(cal_embeddings.rows());
  for (Eigen::Index i = 0; i < cal_embeddings.rows(); ++i) {
    d_cal[i] = (cal_embeddings.row(i).transpose() - x_prime).squaredNorm();
  }
  const double shift = std::min(d_fit.minCoeff(), d_cal.minCoeff());
  const double numerator =
      fit.rkhs_scale() * ((-xi * (d_fit.array() - shift)).exp().matrix().dot(fit.dual_coeffs));
  const double mass = (-xi * (d_cal.array() - shift)).exp().mean();
  if (!(mass > 0.0)) {
    throw std::domain_error("coverage gap undefined: zero kernel mass at x'");
  }
  return -fit.gamma * numerator / mass;
}

}  // namespace condfilter
