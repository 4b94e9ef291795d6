#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "condfilter/conformal.hpp"
#include "condfilter/kqr.hpp"
#include "condfilter/risk.hpp"

namespace condfilter {
namespace {

struct Instance {
  AnchorMatrix anchors;
  Eigen::VectorXd scores;
};

Instance make_instance(int n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Instance inst{AnchorMatrix(n, d), Eigen::VectorXd(n)};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) inst.anchors(i, j) = n01(rng);
    inst.scores[i] = u(rng);
  }
  return inst;
}

void BM_KqrFit(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Instance inst = make_instance(n + 1, 2, 1);
  const KqrProblem p = KqrProblem::build(inst.anchors, inst.scores, 0.1, 1.0, KernelSpec(1.0));
  for (auto _ : state) benchmark::DoNotOptimize(fit(p, 1e-8).intercept);
  state.SetComplexityN(n);
}
BENCHMARK(BM_KqrFit)->RangeMultiplier(2)->Range(25, 400)->Complexity();

void BM_ConditionalCutoff(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Instance inst = make_instance(n, 2, 2);
  FilterConfig config;
  config.rng_seed = 3;
  const ConditionalCalibrator cal(inst.anchors, inst.scores, KernelSpec(1.0), config);
  const std::vector<double> surrogates{0.2, 0.5, 0.8};
  const Eigen::Vector2d x(0.1, -0.3);
  const RandomizationDraw draw = make_draw(config, "bench");
  for (auto _ : state) benchmark::DoNotOptimize(cal.cutoff(x, surrogates, draw).cutoff);
}
BENCHMARK(BM_ConditionalCutoff)->Arg(50)->Arg(200);

void BM_NonconformityScore(benchmark::State& state) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> s(8), g(8);
  for (int k = 0; k < 8; ++k) {
    s[k] = u(rng);
    g[k] = u(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(nonconformity_score(s, g, 0.5, 0));
}
BENCHMARK(BM_NonconformityScore);

}  // namespace
}  // namespace condfilter

BENCHMARK_MAIN();
