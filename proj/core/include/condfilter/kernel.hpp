#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

namespace condfilter {

enum class KernelFamily { kRbf };

/// W(x, y) = exp(-bandwidth * ||x - y||^2).
struct KernelSpec {
  KernelFamily family = KernelFamily::kRbf;
  double bandwidth = 1.0;

  explicit KernelSpec(double xi);
  KernelSpec() = default;

  double operator()(const Eigen::Ref<const Eigen::VectorXd>& x,
                    const Eigen::Ref<const Eigen::VectorXd>& y) const;

  bool operator==(const KernelSpec&) const = default;
};

double rbf_eval(const Eigen::Ref<const Eigen::VectorXd>& x,
                const Eigen::Ref<const Eigen::VectorXd>& y, double xi);

/// Anchors stored one per row.
using AnchorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

AnchorMatrix stack_anchors(std::span<const Eigen::VectorXd> anchors);

/// Symmetric matrix of pairwise kernel values over the anchor rows.
Eigen::MatrixXd gram(const AnchorMatrix& anchors, const KernelSpec& spec);

/// Kernel values between every anchor row and `x`.
Eigen::VectorXd kernel_row(const AnchorMatrix& anchors,
                           const Eigen::Ref<const Eigen::VectorXd>& x,
                           const KernelSpec& spec);

/// 1 / median of pairwise squared distances. Throws when the median is zero.
double median_heuristic_bandwidth(const AnchorMatrix& anchors);

struct PcaResult {
  Eigen::MatrixXd basis;       // features x target_dim, orthonormal columns
  Eigen::MatrixXd projected;   // samples x target_dim
  Eigen::VectorXd eigenvalues; // covariance eigenvalues, decreasing
  Eigen::RowVectorXd mean;
};

/// Principal components of the sample covariance (divisor n-1). Each basis
/// column is sign-normalized so its first nonzero entry is positive.
PcaResult pca_reduce(const Eigen::MatrixXd& samples, Eigen::Index target_dim);

}  // namespace condfilter
