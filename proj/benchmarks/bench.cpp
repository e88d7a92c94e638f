#include <benchmark/benchmark.h>

#include <vector>

#include "cnsc/data.hpp"
#include "cnsc/eval.hpp"
#include "cnsc/model.hpp"
#include "cnsc/objective.hpp"
#include "cnsc/rng.hpp"

namespace {

cnsc::Cohort bench_cohort(std::size_t n) {
  cnsc::GeneratorConfig cfg;
  cfg.n = n;
  cfg.k = 3;
  cfg.scenario = cnsc::Scenario::Observational;
  cfg.seed = 42;
  return cnsc::generate(cfg).first;
}

cnsc::CnscModel bench_model() {
  cnsc::SeededRng rng(7);
  cnsc::CnscModel m = cnsc::make_model(10, 3, 25, 2, 50, rng);
  m.norm.mean.assign(10, 0.0);
  m.norm.stddev.assign(10, 1.0);
  m.norm.time_scale = 5.0;
  return m;
}

void BM_GenerateCohort(benchmark::State& state) {
  cnsc::GeneratorConfig cfg;
  cfg.n = static_cast<std::size_t>(state.range(0));
  cfg.k = 3;
  cfg.seed = 1;
  for (auto _ : state) {
    auto out = cnsc::generate(cfg);
    benchmark::DoNotOptimize(out.first.records.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GenerateCohort)->Arg(1000)->Arg(10000);

void BM_AssignForward(benchmark::State& state) {
  const cnsc::CnscModel m = bench_model();
  const auto cohort = bench_cohort(256);
  std::size_t i = 0;
  for (auto _ : state) {
    const auto post = cnsc::assign(m, cohort.records[i % 256].x);
    benchmark::DoNotOptimize(post.probabilities.data());
    ++i;
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_AssignForward);

void BM_SurvivalCurve(benchmark::State& state) {
  const cnsc::CnscModel m = bench_model();
  const auto cohort = bench_cohort(64);
  std::vector<double> grid(state.range(0));
  for (std::size_t g = 0; g < grid.size(); ++g)
    grid[g] = 5.0 * static_cast<double>(g) / static_cast<double>(grid.size());
  std::size_t i = 0;
  for (auto _ : state) {
    double acc = 0;
    for (double t : grid) acc += cnsc::ite(m, cohort.records[i % 64].x, t);
    benchmark::DoNotOptimize(acc);
    ++i;
  }
  state.SetItemsProcessed(state.iterations() * grid.size());
}
BENCHMARK(BM_SurvivalCurve)->Arg(50)->Arg(200);

void BM_WeightedNllBatch(benchmark::State& state) {
  const cnsc::CnscModel m = bench_model();
  const auto cohort = bench_cohort(static_cast<std::size_t>(state.range(0)));
  const std::vector<double> w(cohort.records.size(), 1.0);
  for (auto _ : state) {
    const double loss = cnsc::weighted_nll(m, cohort.records, w, {});
    benchmark::DoNotOptimize(loss);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_WeightedNllBatch)->Arg(250)->Arg(1000);

void BM_WeightedNllGrad(benchmark::State& state) {
  cnsc::CnscModel m = bench_model();
  const auto cohort = bench_cohort(static_cast<std::size_t>(state.range(0)));
  const std::vector<double> w(cohort.records.size(), 1.0);
  cnsc::ModelGrad grad = cnsc::make_model_grad(m);
  for (auto _ : state) {
    const double loss =
        cnsc::weighted_nll_grad(m, cohort.records, w, {}, grad);
    benchmark::DoNotOptimize(loss);
    benchmark::DoNotOptimize(grad.latents.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_WeightedNllGrad)->Arg(250)->Arg(1000);

void BM_AdjustedRandIndex(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  cnsc::SeededRng rng(11);
  std::vector<int> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = static_cast<int>(rng.below(3));
    b[i] = static_cast<int>(rng.below(3));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(cnsc::adjusted_rand_index(a, b));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_AdjustedRandIndex)->Arg(10000);

void BM_IseCurves(benchmark::State& state) {
  const std::size_t pts = 200;
  cnsc::EffectCurve f, g;
  f.grid.resize(pts);
  f.values.resize(pts);
  g.grid.resize(pts);
  g.values.resize(pts);
  for (std::size_t i = 0; i < pts; ++i) {
    const double t = 5.0 * static_cast<double>(i) / (pts - 1);
    f.grid[i] = g.grid[i] = t;
    f.values[i] = t / 5.0;
    g.values[i] = t / 10.0;
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(cnsc::ise_curves(f, g, 5.0));
  }
}
BENCHMARK(BM_IseCurves);

}  // namespace

BENCHMARK_MAIN();
