#include "condfilter/evalsim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <Eigen/SVD>

#include "condfilter/conformal.hpp"

namespace condfilter {

namespace {

double draw_beta(std::mt19937_64& rng, double mean, double concentration) {
  std::gamma_distribution<double> ga(mean * concentration, 1.0);
  std::gamma_distribution<double> gb((1.0 - mean) * concentration, 1.0);
  const double a = ga(rng);
  const double b = gb(rng);
  return a / (a + b);
}

double noisy_surrogate(std::mt19937_64& rng, double gold, double sd) {
  if (sd == 0.0) return gold;
  std::normal_distribution<double> noise(0.0, sd);
  return std::clamp(gold + noise(rng), 0.0, 1.0);
}

Eigen::VectorXd standard_normal(std::mt19937_64& rng, int d) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v[i] = n01(rng);
  return v;
}

const std::unordered_map<std::string, double>& gold_for(const HiddenGold& hidden,
                                                       const std::string& sample_id) {
  const auto it = hidden.find(sample_id);
  if (it == hidden.end()) {
    throw std::invalid_argument("no hidden gold for sample " + sample_id);
  }
  return it->second;
}

double gold_of(const std::unordered_map<std::string, double>& golds,
               const std::string& sample_id, const std::string& gen_id) {
  const auto it = golds.find(gen_id);
  if (it == golds.end()) {
    throw std::invalid_argument("no hidden gold for generation " + sample_id + "/" + gen_id);
  }
  return it->second;
}

double quantile_sorted(const std::vector<double>& v, double q) {
  if (v.empty()) return 0.0;
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

void ScenarioSpec::validate() const {
  if (n_cal < 1 || n_aug < 1 || K < 1 || d < 1) {
    throw std::invalid_argument("scenario counts must be positive");
  }
  if (!(surrogate_noise_sd >= 0.0)) throw std::invalid_argument("noise sd must be >= 0");
  if (!(beta_concentration > 0.0)) throw std::invalid_argument("beta concentration must be > 0");
  if (!(feature_noise_sd >= 0.0)) throw std::invalid_argument("feature noise sd must be >= 0");
  auto check_mean = [](double m) {
    if (!(m > 0.0 && m < 1.0)) throw std::invalid_argument("gold means must lie in (0,1)");
  };
  check_mean(gold_mean);
  if (gold_model == GoldModel::kHeterogeneousByRegion) check_mean(gold_mean - region_gap);
}

std::string generation_key(const std::string& sample_id, const std::string& gen_id) {
  return sample_id + "/" + gen_id;
}

Scenario generate_scenario(const ScenarioSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> feature_noise(0.0, 1.0);
  Scenario out;

  auto make_record = [&](const std::string& id, bool attach_gold) {
    SampleRecord r;
    r.sample_id = id;
    r.embedding = standard_normal(rng, spec.d);
    const int region = r.embedding[0] >= 0.0 ? 1 : 0;
    r.label = std::to_string(region);
    out.region[id] = region;
    const double mean = spec.gold_model == GoldModel::kHeterogeneousByRegion && region == 1
                            ? spec.gold_mean - spec.region_gap
                            : spec.gold_mean;
    for (int k = 0; k < spec.K; ++k) {
      ScoredGeneration g;
      g.gen_id = "g" + std::to_string(k);
      const double gold = draw_beta(rng, mean, spec.beta_concentration);
      g.surrogate_score = noisy_surrogate(rng, gold, spec.surrogate_noise_sd);
      if (attach_gold) {
        g.gold_score = gold;
      } else {
        out.hidden_gold[id][g.gen_id] = gold;
      }
      Eigen::VectorXd f = r.embedding;
      for (int i = 0; i < spec.d; ++i) f[i] += spec.feature_noise_sd * feature_noise(rng);
      out.generation_features[generation_key(id, g.gen_id)] = std::move(f);
      r.generations.push_back(std::move(g));
    }
    return r;
  };

  for (int i = 0; i < spec.n_cal; ++i) out.cal.push_back(make_record("cal-" + std::to_string(i), true));
  for (int i = 0; i < spec.n_aug; ++i) out.aug.push_back(make_record("aug-" + std::to_string(i), false));
  return out;
}

std::size_t realized_loss(const FilterDecision& decision, const HiddenGold& hidden_gold,
                          double lambda) {
  const auto& golds = gold_for(hidden_gold, decision.sample_id);
  std::size_t loss = 0;
  for (const auto& id : decision.kept) {
    if (gold_of(golds, decision.sample_id, id) < lambda) ++loss;
  }
  return loss;
}

double empirical_coverage(std::span<const FilterDecision> decisions,
                          const HiddenGold& hidden_gold, double lambda, int rho) {
  if (decisions.empty()) throw std::invalid_argument("no decisions to score");
  std::size_t covered = 0;
  for (const auto& d : decisions) {
    if (realized_loss(d, hidden_gold, lambda) <= static_cast<std::size_t>(std::max(rho, 0))) {
      ++covered;
    }
  }
  return static_cast<double>(covered) / static_cast<double>(decisions.size());
}

Prf selection_prf(std::span<const FilterDecision> decisions, const HiddenGold& hidden_gold,
                  double lambda) {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  for (const auto& d : decisions) {
    const auto& golds = gold_for(hidden_gold, d.sample_id);
    for (const auto& id : d.kept) {
      (gold_of(golds, d.sample_id, id) >= lambda ? tp : fp) += 1;
    }
    for (const auto& id : d.dropped) {
      if (gold_of(golds, d.sample_id, id) >= lambda) ++fn;
    }
  }
  Prf out;
  if (tp + fp == 0 || tp + fn == 0) out.degenerate = true;
  out.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  out.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (out.precision + out.recall > 0.0) {
    out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
  } else {
    out.degenerate = true;
  }
  return out;
}

double stable_rank(const Eigen::MatrixXd& matrix) {
  if (matrix.size() == 0) throw std::invalid_argument("stable_rank of an empty matrix");
  const double fro2 = matrix.squaredNorm();
  if (!(fro2 > 0.0)) throw std::invalid_argument("stable_rank of a zero matrix");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(matrix);
  const double spectral = svd.singularValues()[0];
  return fro2 / (spectral * spectral);
}

double shannon_entropy(std::span<const long long> counts) {
  long long total = 0;
  for (long long c : counts) {
    if (c < 0) throw std::invalid_argument("entropy counts must be nonnegative");
    total += c;
  }
  if (total == 0) throw std::invalid_argument("entropy of all-zero counts");
  double h = 0.0;
  for (long long c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  return h;
}

double LogisticModel::predict_probability(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return 1.0 / (1.0 + std::exp(-(weights.dot(x) + bias)));
}

namespace {

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

double logistic_objective(const Eigen::MatrixXd& x, const Eigen::VectorXi& y,
                          const Eigen::VectorXd& params, double l2) {
  const Eigen::Index d = x.cols();
  const Eigen::VectorXd w = params.head(d);
  const double b = params[d];
  const Eigen::VectorXd z = (x * w).array() + b;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    // -[y log s(z) + (1-y) log(1-s(z))] = softplus(z) - y z
    loss += softplus(z[i]) - static_cast<double>(y[i]) * z[i];
  }
  return loss / static_cast<double>(x.rows()) + 0.5 * l2 * w.squaredNorm();
}

Eigen::VectorXd logistic_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXi& y,
                                  const Eigen::VectorXd& params, double l2) {
  const Eigen::Index d = x.cols();
  const Eigen::VectorXd w = params.head(d);
  const double b = params[d];
  const Eigen::VectorXd z = (x * w).array() + b;
  Eigen::VectorXd residual(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    residual[i] = sigmoid(z[i]) - static_cast<double>(y[i]);
  }
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  Eigen::VectorXd grad(d + 1);
  grad.head(d) = inv_n * (x.transpose() * residual) + l2 * w;
  grad[d] = inv_n * residual.sum();
  return grad;
}

LogisticModel fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXi& y,
                           const LogisticConfig& config) {
  if (x.rows() != y.size() || x.rows() == 0) {
    throw std::invalid_argument("logistic: feature/label size mismatch");
  }
  const Eigen::Index positives = (y.array() == 1).count();
  if (positives == 0 || positives == y.size()) {
    throw std::invalid_argument("logistic: training labels contain a single class");
  }
  Eigen::VectorXd params = Eigen::VectorXd::Zero(x.cols() + 1);
  for (int it = 0; it < config.iterations; ++it) {
    params -= config.learning_rate * logistic_gradient(x, y, params, config.l2);
  }
  LogisticModel m;
  m.weights = params.head(x.cols());
  m.bias = params[x.cols()];
  return m;
}

double binary_f1(const Eigen::VectorXi& truth, const Eigen::VectorXi& predicted) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    if (predicted[i] == 1 && truth[i] == 1) ++tp;
    if (predicted[i] == 1 && truth[i] != 1) ++fp;
    if (predicted[i] != 1 && truth[i] == 1) ++fn;
  }
  if (tp == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

ToyTask generate_toy_task(const ToyTaskSpec& spec) {
  if (spec.n_base < 2 || spec.n_cal < 1 || spec.n_aug < 1 || spec.n_test < 1 || spec.K < 1 ||
      spec.d < 1) {
    throw std::invalid_argument("toy task counts must be positive");
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd center = Eigen::VectorXd::Zero(spec.d);
  center[0] = 0.5 * spec.class_separation;

  auto draw_point = [&](int label) {
    Eigen::VectorXd x(spec.d);
    for (int i = 0; i < spec.d; ++i) x[i] = n01(rng);
    return Eigen::VectorXd(label == 1 ? Eigen::VectorXd(x + center) : Eigen::VectorXd(x - center));
  };

  ToyTask task;
  auto fill = [&](int n, Eigen::MatrixXd& x, Eigen::VectorXi& y) {
    x.resize(n, spec.d);
    y.resize(n);
    for (int i = 0; i < n; ++i) {
      y[i] = i % 2;  // balanced classes
      x.row(i) = draw_point(y[i]).transpose();
    }
  };
  fill(spec.n_base, task.base_x, task.base_y);
  fill(spec.n_test, task.test_x, task.test_y);

  Scenario& sc = task.scenario;
  auto make_record = [&](const std::string& id, int label, bool attach_gold) {
    SampleRecord r;
    r.sample_id = id;
    r.embedding = draw_point(label);
    r.label = std::to_string(label);
    sc.region[id] = label;
    for (int k = 0; k < spec.K; ++k) {
      ScoredGeneration g;
      g.gen_id = "g" + std::to_string(k);
      const bool corrupted = unit(rng) < spec.corrupted_fraction;
      Eigen::VectorXd f;
      if (corrupted) {
        f = draw_point(1 - label);
      } else {
        f = r.embedding;
        for (int i = 0; i < spec.d; ++i) f[i] += spec.generation_noise_sd * n01(rng);
      }
      const double gold = draw_beta(rng, corrupted ? spec.bad_gold_mean : spec.good_gold_mean,
                                    spec.beta_concentration);
      g.surrogate_score = noisy_surrogate(rng, gold, spec.surrogate_noise_sd);
      if (attach_gold) {
        g.gold_score = gold;
      } else {
        sc.hidden_gold[id][g.gen_id] = gold;
      }
      sc.generation_features[generation_key(id, g.gen_id)] = std::move(f);
      r.generations.push_back(std::move(g));
    }
    return r;
  };
  for (int i = 0; i < spec.n_cal; ++i) sc.cal.push_back(make_record("cal-" + std::to_string(i), i % 2, true));
  for (int i = 0; i < spec.n_aug; ++i) sc.aug.push_back(make_record("aug-" + std::to_string(i), i % 2, false));
  return task;
}

double downstream_toy_eval(const ToyTask& task, std::span<const FilterDecision> decisions,
                           const LogisticConfig& config) {
  std::unordered_map<std::string, int> labels;
  for (const auto& r : task.scenario.aug) labels[r.sample_id] = std::stoi(r.label);

  std::vector<Eigen::VectorXd> extra_x;
  std::vector<int> extra_y;
  for (const auto& d : decisions) {
    const auto lab = labels.find(d.sample_id);
    if (lab == labels.end()) throw std::invalid_argument("decision for unknown sample " + d.sample_id);
    for (const auto& id : d.kept) {
      const auto f = task.scenario.generation_features.find(generation_key(d.sample_id, id));
      if (f == task.scenario.generation_features.end()) {
        throw std::invalid_argument("no features for generation " + d.sample_id + "/" + id);
      }
      extra_x.push_back(f->second);
      extra_y.push_back(lab->second);
    }
  }
  const Eigen::Index n_base = task.base_x.rows();
  const auto n_extra = static_cast<Eigen::Index>(extra_x.size());
  Eigen::MatrixXd x(n_base + n_extra, task.base_x.cols());
  Eigen::VectorXi y(n_base + n_extra);
  x.topRows(n_base) = task.base_x;
  y.head(n_base) = task.base_y;
  for (Eigen::Index i = 0; i < n_extra; ++i) {
    x.row(n_base + i) = extra_x[static_cast<std::size_t>(i)].transpose();
    y[n_base + i] = extra_y[static_cast<std::size_t>(i)];
  }
  const LogisticModel model = fit_logistic(x, y, config);
  Eigen::VectorXi predicted(task.test_x.rows());
  for (Eigen::Index i = 0; i < task.test_x.rows(); ++i) {
    predicted[i] = model.predict_probability(task.test_x.row(i).transpose()) >= 0.5 ? 1 : 0;
  }
  return binary_f1(task.test_y, predicted);
}

StrategyReport simulate_strategy(const ScenarioSpec& base, int replicates,
                                 const Strategy& strategy, const FilterConfig& config,
                                 unsigned workers) {
  if (replicates < 1) throw std::invalid_argument("replicates must be positive");
  StrategyReport report;
  report.strategy = strategy.name();
  report.alpha = config.alpha;
  report.rho = config.rho;

  std::vector<double> per_replicate;
  std::vector<double> ranks;
  std::map<std::string, long long> label_counts;
  std::size_t tp = 0, fp = 0, fn = 0;
  CoverageTally total;

  for (int rep = 0; rep < replicates; ++rep) {
    ScenarioSpec spec = base;
    spec.seed = derive_seed(base.seed, "scenario-" + std::to_string(rep));
    FilterConfig cfg = config;
    cfg.rng_seed = derive_seed(config.rng_seed, "draws-" + std::to_string(rep));
    const Scenario sc = generate_scenario(spec);
    const auto decisions = run_filter(sc.cal, sc.aug, strategy, cfg, workers);

    CoverageTally rep_tally;
    std::vector<Eigen::VectorXd> kept_features;
    std::unordered_map<std::string, const SampleRecord*> by_id;
    for (const auto& r : sc.aug) by_id[r.sample_id] = &r;
    for (const auto& d : decisions) {
      const auto rec = by_id.find(d.sample_id);
      if (rec == by_id.end()) continue;  // hybrid calibration decisions
      const bool covered = realized_loss(d, sc.hidden_gold, cfg.lambda) <=
                           static_cast<std::size_t>(cfg.rho);
      auto& region = report.per_region[sc.region.at(d.sample_id)];
      region.total += 1;
      rep_tally.total += 1;
      if (covered) {
        region.covered += 1;
        rep_tally.covered += 1;
      }
      const auto& golds = sc.hidden_gold.at(d.sample_id);
      for (const auto& id : d.kept) {
        (golds.at(id) >= cfg.lambda ? tp : fp) += 1;
        kept_features.push_back(sc.generation_features.at(generation_key(d.sample_id, id)));
        label_counts[rec->second->label] += 1;
      }
      for (const auto& id : d.dropped) {
        if (golds.at(id) >= cfg.lambda) ++fn;
      }
    }
    total.covered += rep_tally.covered;
    total.total += rep_tally.total;
    per_replicate.push_back(rep_tally.rate());
    if (!kept_features.empty()) {
      ranks.push_back(stable_rank(stack_anchors(kept_features)));
    }
  }

  report.n_trials = total.total;
  report.coverage = total.rate();
  std::sort(per_replicate.begin(), per_replicate.end());
  double mean = 0.0;
  for (double c : per_replicate) mean += c;
  mean /= static_cast<double>(per_replicate.size());
  double var = 0.0;
  for (double c : per_replicate) var += (c - mean) * (c - mean);
  report.coverage_sd = per_replicate.size() > 1
                           ? std::sqrt(var / static_cast<double>(per_replicate.size() - 1))
                           : 0.0;
  report.coverage_q1 = quantile_sorted(per_replicate, 0.25);
  report.coverage_median = quantile_sorted(per_replicate, 0.5);
  report.coverage_q3 = quantile_sorted(per_replicate, 0.75);

  report.prf.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  report.prf.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  report.prf.degenerate = tp + fp == 0 || tp + fn == 0;
  if (report.prf.precision + report.prf.recall > 0.0) {
    report.prf.f1 = 2.0 * report.prf.precision * report.prf.recall /
                    (report.prf.precision + report.prf.recall);
  } else {
    report.prf.degenerate = true;
  }
  if (!ranks.empty()) {
    double s = 0.0;
    for (double r : ranks) s += r;
    report.stable_rank = s / static_cast<double>(ranks.size());
  }
  if (!label_counts.empty()) {
    std::vector<long long> counts;
    for (const auto& [label, c] : label_counts) counts.push_back(c);
    report.entropy = shannon_entropy(counts);
  }
  return report;
}

}  // namespace condfilter
