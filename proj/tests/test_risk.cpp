#include "condfilter/risk.hpp"

#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "test_util.hpp"

namespace condfilter {
namespace {

using testing::make_record;

const std::vector<double> kSurrogates{0.9, 0.6, 0.3};
const std::vector<double> kGolds{0.7, 0.4, 0.8};

TEST(FalseInclusionLoss, CountsSelectedBadGenerations) {
  EXPECT_EQ(false_inclusion_loss(kSurrogates, kGolds, 0.5, 0.5), 1u);
  EXPECT_EQ(false_inclusion_loss(kSurrogates, kGolds, 0.95, 0.5), 0u);
  EXPECT_EQ(false_inclusion_loss(kSurrogates, kGolds, 0.6, 0.5), 1u);  // >= includes 0.6
  EXPECT_EQ(false_inclusion_loss(kSurrogates, kGolds, 0.61, 0.5), 0u);
}

TEST(FalseInclusionLoss, ZeroLambdaMeansNoLoss) {
  for (double s : {-1.0, 0.0, 0.3, 0.7, 2.0}) {
    EXPECT_EQ(false_inclusion_loss(kSurrogates, kGolds, s, 0.0), 0u);
  }
}

TEST(FalseInclusionLoss, LengthMismatchThrows) {
  const std::vector<double> golds{0.1, 0.2};
  EXPECT_THROW(false_inclusion_loss(kSurrogates, golds, 0.5, 0.5), std::invalid_argument);
}

TEST(FalseInclusionLoss, NonincreasingInThreshold) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(6), g(6);
    for (int k = 0; k < 6; ++k) {
      s[k] = u(rng);
      g[k] = u(rng);
    }
    std::size_t prev = false_inclusion_loss(s, g, -0.1, 0.5);
    for (double t = -0.1; t <= 1.1; t += 0.01) {
      const std::size_t cur = false_inclusion_loss(s, g, t, 0.5);
      ASSERT_LE(cur, prev);
      prev = cur;
    }
  }
}

TEST(FalseInclusionLossFunctor, MatchesFreeFunctionOnPrefixes) {
  const FalseInclusionLoss loss;
  EXPECT_EQ(loss(std::vector<std::size_t>{}, kGolds, 0.5), 0.0);
  EXPECT_EQ(loss(std::vector<std::size_t>{0, 1}, kGolds, 0.5), 1.0);
  EXPECT_EQ(loss(std::vector<std::size_t>{0, 1, 2}, kGolds, 0.5), 1.0);
}

// The score is the infimum of safe thresholds: the largest surrogate level
// whose selection still violates rho.
TEST(NonconformityScore, WorkedExampleRhoZero) {
  // Selection at 0.9 has loss 0; at 0.6 it picks up the bad generation.
  EXPECT_DOUBLE_EQ(nonconformity_score(kSurrogates, kGolds, 0.5, 0), 0.6);
}

TEST(NonconformityScore, WorkedExampleRhoOne) {
  // Every threshold is safe, so the infimum is unbounded below.
  EXPECT_DOUBLE_EQ(nonconformity_score(kSurrogates, kGolds, 0.5, 1), 0.3 - kScoreFloorOffset);
}

TEST(NonconformityScore, AllGoodGivesFloor) {
  const std::vector<double> s{0.4, 0.2, 0.8};
  const std::vector<double> g{0.9, 0.95, 0.6};
  EXPECT_DOUBLE_EQ(nonconformity_score(s, g, 0.5, 0), 0.2 - kScoreFloorOffset);
}

TEST(NonconformityScore, TiedSurrogatesEnterTogether) {
  const std::vector<double> s{0.5, 0.5, 0.2};
  const std::vector<double> g{0.9, 0.1, 0.9};
  EXPECT_DOUBLE_EQ(nonconformity_score(s, g, 0.5, 0), 0.5);
  const std::vector<double> g2{0.1, 0.1, 0.9};
  EXPECT_DOUBLE_EQ(nonconformity_score(s, g2, 0.5, 1), 0.5);
  EXPECT_DOUBLE_EQ(nonconformity_score(s, g2, 0.5, 2), 0.2 - kScoreFloorOffset);
}

TEST(NonconformityScore, TopGenerationBadGivesMax) {
  const std::vector<double> s{0.3, 0.95};
  const std::vector<double> g{0.9, 0.1};
  EXPECT_DOUBLE_EQ(nonconformity_score(s, g, 0.5, 0), 0.95);
}

TEST(NonconformityScore, InvalidInputsThrow) {
  const std::vector<double> empty;
  EXPECT_THROW(nonconformity_score(empty, empty, 0.5, 0), std::invalid_argument);
  const std::vector<double> short_golds{0.1};
  EXPECT_THROW(nonconformity_score(kSurrogates, short_golds, 0.5, 0), std::invalid_argument);
  EXPECT_THROW(nonconformity_score(kSurrogates, kGolds, 0.5, -1), std::invalid_argument);
}

// Draws instances with frequent ties by rounding half of them to a coarse grid.
void random_instance(std::mt19937_64& rng, std::vector<double>& s, std::vector<double>& g) {
  std::uniform_int_distribution<int> size(1, 8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int k = size(rng);
  const bool coarse = u(rng) < 0.5;
  s.resize(k);
  g.resize(k);
  for (int i = 0; i < k; ++i) {
    s[i] = coarse ? std::round(u(rng) * 5.0) / 5.0 : u(rng);
    g[i] = u(rng);
  }
}

TEST(NonconformityScore, MatchesBruteForceOracle) {
  std::mt19937_64 rng(11);
  std::vector<double> s, g;
  for (int trial = 0; trial < 2000; ++trial) {
    random_instance(rng, s, g);
    const int rho = static_cast<int>(rng() % 3);
    ASSERT_EQ(nonconformity_score(s, g, 0.5, rho), oracle::brute_force_score(s, g, 0.5, rho))
        << "trial " << trial;
  }
}

TEST(NonconformityScore, SafeExactlyAboveScore) {
  std::mt19937_64 rng(5);
  std::vector<double> s, g;
  for (int trial = 0; trial < 500; ++trial) {
    random_instance(rng, s, g);
    const int rho = static_cast<int>(rng() % 2);
    const double score = nonconformity_score(s, g, 0.5, rho);
    const double above = std::nextafter(score, 2.0);
    EXPECT_LE(false_inclusion_loss(s, g, above, 0.5), static_cast<std::size_t>(rho));
    if (score >= *std::min_element(s.begin(), s.end())) {
      EXPECT_GT(false_inclusion_loss(s, g, score, 0.5), static_cast<std::size_t>(rho));
    }
  }
}

TEST(NonconformityScore, NonincreasingInRho) {
  std::mt19937_64 rng(8);
  std::vector<double> s, g;
  for (int trial = 0; trial < 500; ++trial) {
    random_instance(rng, s, g);
    double prev = nonconformity_score(s, g, 0.5, 0);
    for (int rho = 1; rho <= 8; ++rho) {
      const double cur = nonconformity_score(s, g, 0.5, rho);
      ASSERT_LE(cur, prev);
      prev = cur;
    }
  }
}

// Weighted count: monotone and zero on the empty set, so it is a valid loss.
class WeightedLoss final : public MonotoneLoss {
 public:
  double operator()(std::span<const std::size_t> selected, std::span<const double> golds,
                    double lambda) const override {
    double total = 0.0;
    for (std::size_t k : selected) {
      if (golds[k] < lambda) total += 0.5 + (lambda - golds[k]);
    }
    return total;
  }
};

TEST(NonconformityScore, AcceptsCustomMonotoneLoss) {
  const WeightedLoss loss;
  // Bad generation at 0.6 weighs 0.5 + 0.1 = 0.6 <= 1, so rho = 1 admits it.
  EXPECT_DOUBLE_EQ(nonconformity_score(kSurrogates, kGolds, 0.5, 1, loss),
                   0.3 - kScoreFloorOffset);
  EXPECT_DOUBLE_EQ(nonconformity_score(kSurrogates, kGolds, 0.5, 0, loss), 0.6);
}

TEST(ScoreCalibrationSet, ScoresEveryRecord) {
  const FilterConfig config;
  const Dataset one{make_record("r", {0.0}, kSurrogates, {0.7, 0.4, 0.8})};
  const auto scores = score_calibration_set(one, config);
  ASSERT_EQ(scores.size(), 1u);
  EXPECT_EQ(scores[0].sample_id, "r");
  EXPECT_DOUBLE_EQ(scores[0].score, 0.6);

  EXPECT_TRUE(score_calibration_set({}, config).empty());

  Dataset two{one[0], one[0]};
  two[1].sample_id = "r2";
  const auto pair = score_calibration_set(two, config);
  EXPECT_EQ(pair[0].score, pair[1].score);
}

TEST(ScoreCalibrationSet, MissingGoldThrows) {
  const Dataset d{make_record("r", {0.0}, kSurrogates, {0.7, 0.4})};
  EXPECT_THROW(score_calibration_set(d, FilterConfig{}), ValidationError);
}

TEST(ScoreCalibrationSet, UsesSmoothedSurrogates) {
  Dataset d{make_record("r", {0.0}, kSurrogates, {0.7, 0.4, 0.8})};
  d[0].generations[1].smoothed_surrogate = 0.95;  // bad generation now ranks first
  EXPECT_DOUBLE_EQ(score_calibration_set(d, FilterConfig{})[0].score, 0.95);
}

}  // namespace
}  // namespace condfilter
