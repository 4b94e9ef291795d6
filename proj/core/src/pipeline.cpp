#include "condfilter/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "condfilter/conformal.hpp"
#include "condfilter/parallel.hpp"
#include "condfilter/risk.hpp"

namespace condfilter {

namespace {

double parse_threshold(std::string_view text) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  if (res.ec != std::errc{} || res.ptr != end || !(value >= 0.0 && value <= 1.0)) {
    throw std::invalid_argument("strategy threshold must be a number in [0,1]");
  }
  return value;
}

}  // namespace

Strategy Strategy::parse(std::string_view text) {
  const auto colon = text.find(':');
  const std::string_view head = text.substr(0, colon);
  Strategy s;
  if (head == "unaugmented") {
    s.kind = StrategyKind::kUnaugmented;
  } else if (head == "unfiltered") {
    s.kind = StrategyKind::kUnfiltered;
  } else if (head == "fixed_surrogate_threshold") {
    s.kind = StrategyKind::kFixedSurrogateThreshold;
  } else if (head == "hybrid") {
    s.kind = StrategyKind::kHybrid;
  } else if (head == "marginal_cp") {
    s.kind = StrategyKind::kMarginalCp;
  } else if (head == "conditional_cp") {
    s.kind = StrategyKind::kConditionalCp;
  } else {
    throw std::invalid_argument("unknown strategy: " + std::string(text));
  }
  if (colon != std::string_view::npos) {
    if (s.kind != StrategyKind::kFixedSurrogateThreshold && s.kind != StrategyKind::kHybrid) {
      throw std::invalid_argument("strategy takes no parameter: " + std::string(text));
    }
    s.threshold = parse_threshold(text.substr(colon + 1));
  }
  return s;
}

std::string Strategy::name() const {
  switch (kind) {
    case StrategyKind::kUnaugmented: return "unaugmented";
    case StrategyKind::kUnfiltered: return "unfiltered";
    case StrategyKind::kFixedSurrogateThreshold: return "fixed_surrogate_threshold";
    case StrategyKind::kHybrid: return "hybrid";
    case StrategyKind::kMarginalCp: return "marginal_cp";
    case StrategyKind::kConditionalCp: return "conditional_cp";
  }
  return "unknown";
}

Calibration calibrate(const Dataset& cal, const FilterConfig& config) {
  config.validate();
  validate_dataset(cal, /*require_gold=*/true);
  Calibration out;
  const auto scored = score_calibration_set(cal, config);
  out.sample_ids.reserve(cal.size());
  out.scores.resize(static_cast<Eigen::Index>(cal.size()));
  std::vector<Eigen::VectorXd> embeddings;
  embeddings.reserve(cal.size());
  for (std::size_t i = 0; i < cal.size(); ++i) {
    out.sample_ids.push_back(scored[i].sample_id);
    out.scores[static_cast<Eigen::Index>(i)] = scored[i].score;
    embeddings.push_back(cal[i].embedding);
  }
  out.embeddings = stack_anchors(embeddings);
  if (config.bandwidth) {
    out.kernel = KernelSpec(*config.bandwidth);
  } else if (out.embeddings.rows() >= 2) {
    out.kernel = KernelSpec(median_heuristic_bandwidth(out.embeddings));
  } else {
    throw ValidationError("bandwidth auto needs at least two calibration records");
  }
  return out;
}

namespace {

FilterDecision keep_all(const SampleRecord& r) {
  return decide_by_cutoff(r, -std::numeric_limits<double>::infinity());
}

FilterDecision drop_all(const SampleRecord& r) {
  FilterDecision d;
  d.sample_id = r.sample_id;
  d.cutoff = std::numeric_limits<double>::infinity();
  for (const auto& g : r.generations) d.dropped.push_back(g.gen_id);
  return d;
}

FilterDecision gold_threshold(const SampleRecord& r, double lambda) {
  FilterDecision d;
  d.sample_id = r.sample_id;
  d.cutoff = lambda;
  for (const auto& g : r.generations) {
    (*g.gold_score >= lambda ? d.kept : d.dropped).push_back(g.gen_id);
  }
  return d;
}

}  // namespace

std::vector<FilterDecision> apply_filter(const Calibration* calibration,
                                         const Dataset& aug, const Strategy& strategy,
                                         const FilterConfig& config, unsigned workers) {
  config.validate();
  validate_dataset(aug, /*require_gold=*/false);
  if (strategy.needs_calibration()) {
    if (!calibration || calibration->scores.size() == 0) {
      throw ValidationError(strategy.name() + " requires a nonempty calibration set");
    }
    if (calibration->embeddings.cols() != embedding_dimension(aug)) {
      throw ValidationError("calibration and augmentation embeddings differ in dimension");
    }
  }
  if (strategy.kind == StrategyKind::kConditionalCp && calibration->scores.size() < 2) {
    throw ValidationError("conditional_cp requires at least two calibration records");
  }

  std::vector<FilterDecision> out(aug.size());
  switch (strategy.kind) {
    case StrategyKind::kUnaugmented:
      for (std::size_t i = 0; i < aug.size(); ++i) out[i] = drop_all(aug[i]);
      break;
    case StrategyKind::kUnfiltered:
      for (std::size_t i = 0; i < aug.size(); ++i) out[i] = keep_all(aug[i]);
      break;
    case StrategyKind::kFixedSurrogateThreshold:
      for (std::size_t i = 0; i < aug.size(); ++i) {
        out[i] = decide_by_cutoff(aug[i], strategy.threshold);
      }
      break;
    case StrategyKind::kHybrid:
      for (std::size_t i = 0; i < aug.size(); ++i) {
        out[i] = aug[i].has_gold() ? gold_threshold(aug[i], config.lambda)
                                   : decide_by_cutoff(aug[i], strategy.threshold);
      }
      break;
    case StrategyKind::kMarginalCp: {
      const std::span<const double> scores(calibration->scores.data(),
                                           static_cast<std::size_t>(calibration->scores.size()));
      const double cutoff = marginal_threshold(scores, config.alpha);
      for (std::size_t i = 0; i < aug.size(); ++i) out[i] = decide_by_cutoff(aug[i], cutoff);
      break;
    }
    case StrategyKind::kConditionalCp: {
      const ConditionalCalibrator calibrator(calibration->embeddings, calibration->scores,
                                             calibration->kernel, config);
      parallel_for(aug.size(), workers, [&](std::size_t i) {
        const SampleRecord& r = aug[i];
        const auto surrogates = r.effective_surrogates();
        const CutoffResult res =
            calibrator.cutoff(r.embedding, surrogates, make_draw(config, r.sample_id));
        FilterDecision d = decide_by_cutoff(r, res.cutoff);
        d.coverage_gap_estimate =
            coverage_gap_estimate(res.fit, r.embedding, calibrator.embeddings());
        out[i] = std::move(d);
      });
      break;
    }
  }
  return out;
}

std::vector<FilterDecision> run_filter(const Dataset& cal, const Dataset& aug,
                                       const Strategy& strategy,
                                       const FilterConfig& config, unsigned workers) {
  std::vector<FilterDecision> out;
  if (strategy.needs_calibration()) {
    if (cal.empty()) throw ValidationError(strategy.name() + " requires calibration data");
    const Calibration calibration = calibrate(cal, config);
    return apply_filter(&calibration, aug, strategy, config, workers);
  }
  out = apply_filter(nullptr, aug, strategy, config, workers);
  if (strategy.kind == StrategyKind::kHybrid && !cal.empty()) {
    validate_dataset(cal, /*require_gold=*/true);
    for (const auto& r : cal) out.push_back(gold_threshold(r, config.lambda));
  }
  return out;
}

Eigen::VectorXd default_generation_features(const SampleRecord& record,
                                            const ScoredGeneration& generation) {
  Eigen::VectorXd f(record.embedding.size() + 1);
  f.head(record.embedding.size()) = record.embedding;
  f[record.embedding.size()] = generation.surrogate_score;
  return f;
}

double SurrogateLearner::predict(const Eigen::Ref<const Eigen::VectorXd>& feature) const {
  if (method_ == LearnerMethod::kNone) {
    throw std::logic_error("identity learner has no feature-space prediction");
  }
  if (feature.size() != features_.cols()) {
    throw std::invalid_argument("surrogate learner: feature dimension mismatch");
  }
  const Eigen::Index n = features_.rows();
  std::vector<std::pair<double, Eigen::Index>> dist(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    dist[static_cast<std::size_t>(i)] = {
        (features_.row(i).transpose() - feature).squaredNorm(), i};
  }
  const auto kth = dist.begin() + k_;
  std::partial_sort(dist.begin(), kth, dist.end());
  double sum = 0.0;
  for (auto it = dist.begin(); it != kth; ++it) sum += targets_[it->second];
  return sum / static_cast<double>(k_);
}

SurrogateLearner train_surrogate_learner(const Dataset& train, LearnerMethod method,
                                         int k, GenerationFeatureMap map) {
  SurrogateLearner learner;
  learner.map_ = std::move(map);
  learner.method_ = method;
  if (method == LearnerMethod::kNone) return learner;
  if (train.empty()) throw std::invalid_argument("surrogate learner: empty training split");
  if (k < 1) throw std::invalid_argument("surrogate learner: k must be at least 1");

  std::vector<Eigen::VectorXd> features;
  std::vector<double> targets;
  for (const auto& r : train) {
    for (const auto& g : r.generations) {
      features.push_back(learner.map_(r, g));
      targets.push_back(g.surrogate_score);
    }
  }
  if (static_cast<std::size_t>(k) > features.size()) {
    throw std::invalid_argument("surrogate learner: k exceeds the number of training generations");
  }
  learner.k_ = k;
  learner.features_ = stack_anchors(features);
  learner.targets_ = Eigen::Map<const Eigen::VectorXd>(targets.data(),
                                                        static_cast<Eigen::Index>(targets.size()));
  return learner;
}

Dataset apply_surrogate_learner(const SurrogateLearner& learner, const Dataset& dataset) {
  Dataset out = dataset;
  for (auto& r : out) {
    for (auto& g : r.generations) {
      if (learner.method() == LearnerMethod::kNone) {
        g.smoothed_surrogate = g.surrogate_score;
      } else {
        g.smoothed_surrogate = learner.predict(learner.feature_map()(r, g));
      }
    }
  }
  return out;
}

DatasetSplits split_dataset(const Dataset& records, const std::array<double, 3>& fractions,
                            std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw std::invalid_argument("split fractions must be positive");
    total += f;
  }
  if (total > 1.0 + 1e-12) throw std::invalid_argument("split fractions sum above 1");

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit draw so the permutation is library-independent.
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }

  const double n = static_cast<double>(records.size());
  std::array<std::size_t, 4> cut{0, 0, 0, 0};
  double cumulative = 0.0;
  for (std::size_t s = 0; s < 3; ++s) {
    cumulative += fractions[s];
    cut[s + 1] = std::min(records.size(),
                          static_cast<std::size_t>(std::floor(n * cumulative + 1e-9)));
  }
  DatasetSplits out;
  Dataset* parts[3] = {&out.train, &out.calib, &out.aug};
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t i = cut[s]; i < cut[s + 1]; ++i) parts[s]->push_back(records[order[i]]);
  }
  return out;
}

}  // namespace condfilter
