#include "uace/activation.hpp"
#include "uace/baselines.hpp"
#include "uace/estimator.hpp"
#include "uace/metrics.hpp"
#include "uace/random.hpp"

#include <benchmark/benchmark.h>

#include <string>
#include <vector>

using namespace uace;

namespace {

MatrixF noise(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  MatrixF m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = static_cast<float>(rng.normal());
  return m;
}

// Random bundle with 64-dim embeddings.
ProbeBundle bundle(int n, int k, int l, std::uint64_t seed = 1) {
  Rng rng(seed);
  ProbeBundle b;
  b.repr = noise(n, 64, rng);
  b.logits = noise(n, l, rng);
  b.mm_image = noise(n, 64, rng);
  b.concept_text = noise(k, 64, rng);
  for (int i = 0; i < k; ++i) b.concept_names.push_back("c" + std::to_string(i));
  for (int i = 0; i < l; ++i) b.label_names.push_back("y" + std::to_string(i));
  return b;
}

void BM_compute_stats(benchmark::State& state) {
  const ProbeBundle b = bundle(500, static_cast<int>(state.range(0)), 50);
  for (auto _ : state) benchmark::DoNotOptimize(compute_stats(b));
}
BENCHMARK(BM_compute_stats)->Arg(100)->Arg(730)->Unit(benchmark::kMillisecond);

void BM_posterior(benchmark::State& state) {
  const ProbeBundle b = bundle(500, static_cast<int>(state.range(0)), 50);
  const ActivationStats st = compute_stats(b);
  const MatrixXd y = to_double(b.logits);
  for (auto _ : state) benchmark::DoNotOptimize(posterior(st, y, 1.0, 1.0));
}
BENCHMARK(BM_posterior)->Arg(100)->Arg(730)->Unit(benchmark::kMillisecond);

void BM_explain(benchmark::State& state) {
  const ProbeBundle b = bundle(500, static_cast<int>(state.range(0)), 50);
  BayesConfig bc;
  bc.tune = state.range(1) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(explain(b, bc, SparsifyConfig{}));
}
BENCHMARK(BM_explain)->Args({100, 0})->Args({100, 1})->Args({730, 0})->Unit(benchmark::kMillisecond);

void BM_ols(benchmark::State& state) {
  const ProbeBundle b = bundle(500, static_cast<int>(state.range(0)), 50);
  const ActivationStats st = compute_stats(b);
  const MatrixXd y = to_double(b.logits);
  for (auto _ : state) benchmark::DoNotOptimize(ols_explain(st, y));
}
BENCHMARK(BM_ols)->Arg(730)->Unit(benchmark::kMillisecond);

void BM_rank_metrics(benchmark::State& state) {
  const auto k = static_cast<int>(state.range(0));
  Rng rng(2);
  std::vector<std::string> names;
  VectorXd a(k), b(k);
  for (int i = 0; i < k; ++i) {
    names.push_back("c" + std::to_string(i));
    a(i) = rng.normal();
    b(i) = rng.normal();
  }
  const RankedExplanation ra = to_ranked(names, a), rb = to_ranked(names, b);
  for (auto _ : state) {
    benchmark::DoNotOptimize(kendall_tau_distance(ra, rb));
    benchmark::DoNotOptimize(topk_abs_diff(ra, rb, 10));
    benchmark::DoNotOptimize(drift(ra, rb));
    benchmark::DoNotOptimize(jaccard_topk(a, b, 40));
  }
}
BENCHMARK(BM_rank_metrics)->Arg(730)->Arg(10000);

}  // namespace
BENCHMARK_MAIN();
