#include "condfilter/risk.hpp"

#include <algorithm>
#include <stdexcept>

namespace condfilter {

namespace {

void check_lengths(std::span<const double> surrogates,
                   std::span<const double> golds) {
  if (surrogates.size() != golds.size()) {
    throw std::invalid_argument("surrogate and gold vectors differ in length");
  }
}

}  // namespace

double FalseInclusionLoss::operator()(std::span<const std::size_t> selected,
                                      std::span<const double> golds,
                                      double lambda) const {
  std::size_t count = 0;
  for (std::size_t k : selected) {
    if (golds[k] < lambda) ++count;
  }
  return static_cast<double>(count);
}

std::size_t false_inclusion_loss(std::span<const double> surrogates,
                                 std::span<const double> golds, double s,
                                 double lambda) {
  check_lengths(surrogates, golds);
  std::size_t count = 0;
  for (std::size_t k = 0; k < surrogates.size(); ++k) {
    if (surrogates[k] >= s && golds[k] < lambda) ++count;
  }
  return count;
}

double nonconformity_score(std::span<const double> surrogates,
                           std::span<const double> golds, double lambda,
                           int rho, const MonotoneLoss& loss) {
  check_lengths(surrogates, golds);
  if (surrogates.empty()) {
    throw std::invalid_argument("nonconformity score of an empty generation list");
  }
  if (rho < 0) throw std::invalid_argument("rho must be nonnegative");

  // Generations ordered by decreasing surrogate; selections at successive
  // thresholds are prefixes of this order, tied values entering together.
  std::vector<std::size_t> order(surrogates.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return surrogates[a] > surrogates[b];
  });

  const double limit = static_cast<double>(rho);
  std::size_t end = 0;
  while (end < order.size()) {
    const double level = surrogates[order[end]];
    std::size_t next = end;
    while (next < order.size() && surrogates[order[next]] == level) ++next;
    // Selection at threshold `level`: everything with surrogate >= level.
    const std::span<const std::size_t> selected(order.data(), next);
    if (loss(selected, golds, lambda) > limit) return level;
    end = next;
  }
  return surrogates[order.back()] - kScoreFloorOffset;
}

double nonconformity_score(std::span<const double> surrogates,
                           std::span<const double> golds, double lambda,
                           int rho) {
  return nonconformity_score(surrogates, golds, lambda, rho, FalseInclusionLoss{});
}

std::vector<CalibrationScore> score_calibration_set(const Dataset& records,
                                                    const FilterConfig& config) {
  std::vector<CalibrationScore> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const auto golds = r.golds();
    const auto surrogates = r.effective_surrogates();
    out.push_back({r.sample_id, nonconformity_score(surrogates, golds,
                                                    config.lambda, config.rho)});
  }
  return out;
}

}  // namespace condfilter
