#include "condfilter/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace condfilter {

namespace {

void check_bandwidth(double xi) {
  if (!(xi > 0.0) || !std::isfinite(xi)) {
    throw std::invalid_argument("kernel bandwidth must be positive and finite");
  }
}

}  // namespace

KernelSpec::KernelSpec(double xi) : bandwidth(xi) { check_bandwidth(xi); }

double KernelSpec::operator()(const Eigen::Ref<const Eigen::VectorXd>& x,
                              const Eigen::Ref<const Eigen::VectorXd>& y) const {
  return rbf_eval(x, y, bandwidth);
}

double rbf_eval(const Eigen::Ref<const Eigen::VectorXd>& x,
                const Eigen::Ref<const Eigen::VectorXd>& y, double xi) {
  if (x.size() != y.size()) {
    throw std::invalid_argument("rbf_eval: dimension mismatch");
  }
  check_bandwidth(xi);
  return std::exp(-xi * (x - y).squaredNorm());
}

AnchorMatrix stack_anchors(std::span<const Eigen::VectorXd> anchors) {
  if (anchors.empty()) return AnchorMatrix(0, 0);
  const Eigen::Index d = anchors.front().size();
  AnchorMatrix out(static_cast<Eigen::Index>(anchors.size()), d);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (anchors[i].size() != d) {
      throw std::invalid_argument("anchors differ in dimension");
    }
    out.row(static_cast<Eigen::Index>(i)) = anchors[i].transpose();
  }
  return out;
}

Eigen::MatrixXd gram(const AnchorMatrix& anchors, const KernelSpec& spec) {
  if (anchors.rows() == 0) throw std::invalid_argument("gram: no anchors");
  check_bandwidth(spec.bandwidth);
  const Eigen::Index n = anchors.rows();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    k(j, j) = 1.0;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double v =
          std::exp(-spec.bandwidth * (anchors.row(i) - anchors.row(j)).squaredNorm());
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

Eigen::VectorXd kernel_row(const AnchorMatrix& anchors,
                           const Eigen::Ref<const Eigen::VectorXd>& x,
                           const KernelSpec& spec) {
  if (anchors.cols() != x.size()) {
    throw std::invalid_argument("kernel_row: dimension mismatch");
  }
  Eigen::VectorXd out(anchors.rows());
  for (Eigen::Index i = 0; i < anchors.rows(); ++i) {
    out[i] = std::exp(-spec.bandwidth *
                      (anchors.row(i).transpose() - x).squaredNorm());
  }
  return out;
}

double median_heuristic_bandwidth(const AnchorMatrix& anchors) {
  const Eigen::Index n = anchors.rows();
  if (n < 2) throw std::invalid_argument("median heuristic needs two anchors");
  std::vector<double> d2;
  d2.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      d2.push_back((anchors.row(i) - anchors.row(j)).squaredNorm());
    }
  }
  const std::size_t mid = d2.size() / 2;
  std::nth_element(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(mid), d2.end());
  double median = d2[mid];
  if (d2.size() % 2 == 0) {
    const double lower = *std::max_element(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  if (!(median > 0.0)) {
    throw std::invalid_argument(
        "median heuristic undefined: median pairwise distance is zero");
  }
  return 1.0 / median;
}

PcaResult pca_reduce(const Eigen::MatrixXd& samples, Eigen::Index target_dim) {
  const Eigen::Index n = samples.rows();
  const Eigen::Index p = samples.cols();
  if (n < 2) throw std::invalid_argument("pca_reduce: need at least two samples");
  if (target_dim < 1 || target_dim > std::min(n, p)) {
    throw std::invalid_argument("pca_reduce: target_dim out of range");
  }
  PcaResult out;
  out.mean = samples.colwise().mean();
  const Eigen::MatrixXd centered = samples.rowwise() - out.mean;
  const Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) {
    throw std::runtime_error("pca_reduce: eigendecomposition failed");
  }
  // Eigen returns ascending eigenvalues.
  out.basis.resize(p, target_dim);
  out.eigenvalues.resize(target_dim);
  for (Eigen::Index c = 0; c < target_dim; ++c) {
    const Eigen::Index src = p - 1 - c;
    Eigen::VectorXd v = eig.eigenvectors().col(src);
    for (Eigen::Index r = 0; r < p; ++r) {
      if (std::abs(v[r]) > 1e-12) {
        if (v[r] < 0.0) v = -v;
        break;
      }
    }
    out.basis.col(c) = v;
    out.eigenvalues[c] = eig.eigenvalues()[src];
  }
  out.projected = centered * out.basis;
  return out;
}

}  // namespace condfilter
