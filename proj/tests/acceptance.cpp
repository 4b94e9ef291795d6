// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "condfilter/conformal.hpp"
#include "condfilter/evalsim.hpp"
#include "condfilter/kqr.hpp"
#include "condfilter/pipeline.hpp"
#include "condfilter/risk.hpp"
#include "io.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace condfilter;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

ScenarioSpec homogeneous_spec() {
  ScenarioSpec s;
  s.n_cal = 200;
  s.n_aug = 100;
  s.K = 5;
  s.seed = 1;
  return s;
}

FilterConfig base_config() {
  FilterConfig c;
  c.alpha = 0.1;
  c.rho = 0;
  c.lambda = 0.5;
  c.rng_seed = 7;
  return c;
}

Outcome criterion_1() {
  const StrategyReport r = simulate_strategy(homogeneous_spec(), 50,
                                             Strategy::parse("conditional_cp"), base_config());
  return {r.coverage >= 0.88 && r.coverage <= 0.92 && r.n_trials == 5000,
          "coverage " + fmt("%.4f", r.coverage) + " over " + std::to_string(r.n_trials) +
              " trials, want [0.88, 0.92]"};
}

Outcome criterion_2() {
  const StrategyReport r =
      simulate_strategy(homogeneous_spec(), 50, Strategy::parse("marginal_cp"), base_config());
  return {r.coverage >= 0.89 && r.coverage <= 0.93,
          "coverage " + fmt("%.4f", r.coverage) + ", want [0.89, 0.93]"};
}

// Region 1 (first coordinate >= 0) has much lower gold quality, so a single
// global cutoff under-covers it and over-covers region 0.
Outcome criterion_3() {
  ScenarioSpec s;
  s.n_cal = 200;
  s.n_aug = 100;
  s.K = 5;
  s.d = 1;
  s.gold_model = GoldModel::kHeterogeneousByRegion;
  s.gold_mean = 0.8;
  s.region_gap = 0.5;
  s.beta_concentration = 6.0;
  s.seed = 4;
  FilterConfig c = base_config();
  c.gamma = 0.003;
  c.bandwidth = 16.0;
  const StrategyReport m = simulate_strategy(s, 50, Strategy::parse("marginal_cp"), c);
  const StrategyReport k = simulate_strategy(s, 50, Strategy::parse("conditional_cp"), c);
  double marginal_dev = 0.0;
  double conditional_dev = 0.0;
  std::ostringstream os;
  os.precision(4);
  os << std::fixed;
  for (const auto& [region, t] : m.per_region) {
    marginal_dev = std::max(marginal_dev, std::abs(t.rate() - 0.9));
    os << "marginal r" << region << "=" << t.rate() << " ";
  }
  for (const auto& [region, t] : k.per_region) {
    conditional_dev = std::max(conditional_dev, std::abs(t.rate() - 0.9));
    os << "conditional r" << region << "=" << t.rate() << " ";
  }
  os << "(want marginal max dev > 0.05, conditional max dev <= 0.03)";
  const bool regions = m.per_region.size() == 2 && k.per_region.size() == 2;
  return {regions && marginal_dev > 0.05 && conditional_dev <= 0.03, os.str()};
}

Outcome criterion_4() {
  std::mt19937_64 rng(404);
  double worst_kkt = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int n = 1 + static_cast<int>(rng() % 200);
    const double alpha = 0.05 + 0.4 * static_cast<double>(rng() % 1000) / 1000.0;
    const double gamma = std::pow(10.0, -2.0 + 4.0 * static_cast<double>(rng() % 1000) / 1000.0);
    const KqrProblem p = oracle::random_problem(rng, n, 1 + static_cast<int>(rng() % 4), alpha,
                                                gamma, 0.5);
    const auto k = oracle::recheck_kkt(p, fit(p, 1e-8));
    worst_kkt = std::max({worst_kkt, k.box, k.sum, k.complementarity, std::abs(k.gap)});
  }
  double worst_obj = 0.0;
  for (int i = 0; i < 300; ++i) {
    const int n = 1 + i % 6;
    const double alpha = 0.05 + 0.4 * static_cast<double>(rng() % 1000) / 1000.0;
    const double gamma = std::pow(10.0, -2.0 + 4.0 * static_cast<double>(rng() % 1000) / 1000.0);
    const KqrProblem p = oracle::random_problem(rng, n, 2, alpha, gamma, 1.0);
    const auto best = oracle::exhaustive_kqr_dual(*p.gram, p.scores, alpha, gamma);
    const auto k = oracle::recheck_kkt(p, fit(p, 1e-8));
    worst_obj = std::max(worst_obj, std::abs(k.primal - best.objective));
  }
  std::ostringstream os;
  os << "max KKT/gap " << worst_kkt << ", max |objective - oracle| " << worst_obj
     << " (want <= 1e-6)";
  return {worst_kkt <= 1e-6 && worst_obj <= 1e-6, os.str()};
}

Outcome criterion_5() {
  std::mt19937_64 rng(505);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const int n = 20 + static_cast<int>(rng() % 80);
    AnchorMatrix a(n, 2);
    Eigen::VectorXd s(n);
    for (int r = 0; r < n; ++r) {
      a(r, 0) = n01(rng);
      a(r, 1) = n01(rng);
      s[r] = u(rng);
    }
    FilterConfig c;
    c.gamma = 1e8;
    c.randomization = Randomization::kDeterministic;
    const std::vector<double> surrogates{u(rng), u(rng)};
    const CutoffResult res = conditional_cutoff(a, s, Eigen::Vector2d(n01(rng), n01(rng)),
                                                surrogates, KernelSpec(1.0), c,
                                                make_draw(c, "x"));
    const std::vector<double> scores(s.begin(), s.end());
    worst = std::max(worst, std::abs(res.cutoff - marginal_threshold(scores, c.alpha)));
  }
  return {worst <= 1e-4, "max |cutoff - marginal| " + fmt("%.3g", worst) + " (want <= 1e-4)"};
}

Outcome criterion_6() {
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const int k = 1 + static_cast<int>(rng() % 8);
    const bool coarse = i % 2 == 0;
    std::vector<double> s(k), g(k);
    for (int j = 0; j < k; ++j) {
      s[j] = coarse ? std::round(u(rng) * 4.0) / 4.0 : u(rng);
      g[j] = u(rng);
    }
    const int rho = static_cast<int>(rng() % 3);
    if (nonconformity_score(s, g, 0.5, rho) != oracle::brute_force_score(s, g, 0.5, rho)) {
      ++mismatches;
    }
  }
  return {mismatches == 0, std::to_string(mismatches) + " mismatches in 1000 instances"};
}

Outcome criterion_7() {
  std::mt19937_64 rng(707);
  double worst_drop = 0.0;
  for (int i = 0; i < 20; ++i) {
    const KqrProblem p = oracle::random_problem(rng, 20 + static_cast<int>(rng() % 60), 2, 0.1,
                                                std::pow(10.0, -1.0 + (i % 4)), 1.0);
    double prev = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < 50; ++j) {
      const double s = -0.5 + 2.0 * j / 49.0;
      const double v = dual_at_test(p, s, nullptr, 1e-8).test_dual;
      worst_drop = std::max(worst_drop, prev - v);
      prev = v;
    }
  }
  return {worst_drop <= 1e-6, "largest decrease " + fmt("%.3g", worst_drop) + " (want <= 1e-6)"};
}

Outcome criterion_8() {
  const double a = stable_rank(Eigen::Matrix3d::Identity());
  const double b = stable_rank(Eigen::Vector2d(2.0, 1.0).asDiagonal().toDenseMatrix());
  const std::vector<long long> uniform{1, 1, 1, 1};
  const std::vector<long long> skew{3, 1};
  const double c = shannon_entropy(uniform);
  const double d = shannon_entropy(skew);
  const double expected_d = -(0.75 * std::log2(0.75) + 0.25 * std::log2(0.25));
  const bool ok = std::abs(a - 3.0) <= 1e-9 && std::abs(b - 1.25) <= 1e-9 &&
                  std::abs(c - 2.0) <= 1e-9 && std::abs(d - expected_d) <= 1e-9 &&
                  std::abs(d - 0.811278) <= 1e-6;
  std::ostringstream os;
  os.precision(12);
  os << "stable_rank " << a << ", " << b << "; entropy " << c << ", " << d;
  return {ok, os.str()};
}

Outcome criterion_9() {
  double conditional = 0.0;
  double unfiltered = 0.0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    ToyTaskSpec spec;
    spec.seed = 100 + static_cast<std::uint64_t>(s);
    const ToyTask task = generate_toy_task(spec);
    FilterConfig c;
    c.rng_seed = static_cast<std::uint64_t>(s);
    const LogisticConfig lc;
    const auto dc = run_filter(task.scenario.cal, task.scenario.aug,
                               Strategy::parse("conditional_cp"), c);
    const auto du = run_filter(task.scenario.cal, task.scenario.aug,
                               Strategy::parse("unfiltered"), c);
    conditional += downstream_toy_eval(task, dc, lc);
    unfiltered += downstream_toy_eval(task, du, lc);
  }
  conditional /= seeds;
  unfiltered /= seeds;
  std::ostringstream os;
  os.precision(4);
  os << std::fixed << "mean F1 conditional " << conditional << " vs unfiltered " << unfiltered
     << " (want margin >= 0.02)";
  return {conditional >= unfiltered + 0.02, os.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

// Runs each command twice into the same output path and compares the bytes
// of the output and of its manifest.
Outcome criterion_10() {
  const fs::path dir = fs::temp_directory_path() / "condfilter-acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);

  ScenarioSpec spec;
  spec.n_cal = 40;
  spec.n_aug = 10;
  spec.seed = 3;
  const Scenario sc = generate_scenario(spec);
  Dataset gold = sc.aug;
  for (auto& r : gold) {
    for (auto& g : r.generations) g.gold_score = sc.hidden_gold.at(r.sample_id).at(g.gen_id);
  }
  write(dir / "cal.jsonl", cli::dataset_to_jsonl(sc.cal));
  write(dir / "aug.jsonl", cli::dataset_to_jsonl(sc.aug));
  write(dir / "gold.jsonl", cli::dataset_to_jsonl(gold));
  write(dir / "scenario.txt", "n_cal = 30\nn_aug = 10\nK = 3\nseed = 5\nreplicates = 2\n");
  write(dir / "run.cfg", "alpha = 0.1\ngamma = 1\nrng_seed = 11\n");

  const std::string bin = CONDFILTER_BINARY;
  const std::string common = bin + " --config " + (dir / "run.cfg").string() + " --workers 2 ";
  const std::vector<std::pair<std::string, fs::path>> commands{
      {common + "calibrate --cal " + (dir / "cal.jsonl").string(), dir / "art.json"},
      {common + "filter --strategy conditional_cp --artifact " + (dir / "art.json").string() +
           " --aug " + (dir / "aug.jsonl").string(),
       dir / "decisions.jsonl"},
      {common + "simulate --strategy marginal_cp,conditional_cp --scenario " +
           (dir / "scenario.txt").string(),
       dir / "report.json"},
      {common + "metrics --decisions " + (dir / "decisions.jsonl").string() + " --gold " +
           (dir / "gold.jsonl").string(),
       dir / "metrics.json"},
  };
  int identical = 0;
  std::string failures;
  for (const auto& [cmd, out] : commands) {
    const fs::path manifest = out.string() + ".manifest.json";
    std::string first_out, first_manifest;
    bool ok = true;
    for (int run = 0; run < 2; ++run) {
      const std::string line = cmd + " --out " + out.string() + " >/dev/null 2>&1";
      if (std::system(line.c_str()) != 0) {
        ok = false;
        break;
      }
      if (run == 0) {
        first_out = slurp(out);
        first_manifest = slurp(manifest);
      } else {
        ok = !first_out.empty() && first_out == slurp(out) && first_manifest == slurp(manifest);
      }
    }
    if (ok) {
      ++identical;
    } else {
      failures += " " + out.filename().string();
    }
  }
  fs::remove_all(dir);
  return {identical == static_cast<int>(commands.size()),
          std::to_string(identical) + "/4 commands byte-identical on rerun" +
              (failures.empty() ? "" : "; differing:" + failures)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"conditional CP marginal coverage", criterion_1},
      {"split conformal coverage", criterion_2},
      {"conditional adaptivity across regions", criterion_3},
      {"KQR KKT and exhaustive oracle", criterion_4},
      {"large-gamma reduction to marginal", criterion_5},
      {"nonconformity score oracle equivalence", criterion_6},
      {"monotone test dual path", criterion_7},
      {"metric closed forms", criterion_8},
      {"downstream F1 benefit", criterion_9},
      {"CLI reproducibility", criterion_10},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s criterion %zu (%s): %s\n", o.pass ? "PASS" : "FAIL", i + 1,
                criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
