#include <benchmark/benchmark.h>

#include <vector>

#include "ttus/allocator.hpp"
#include "ttus/calibrate.hpp"
#include "ttus/geom.hpp"
#include "ttus/model.hpp"
#include "ttus/synthgen.hpp"

using namespace ttus;

namespace {

std::vector<std::int64_t> random_costs(std::size_t n, std::int64_t max_cost,
                                       std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<std::int64_t> costs(n);
  for (auto& c : costs) c = 1 + static_cast<std::int64_t>(rng.next() % max_cost);
  return costs;
}

void BM_sample_geometric(benchmark::State& state) {
  SplitMix64 rng(1);
  const UnsafeProbability p(3e-4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sample_geometric(p, rng));
  }
}
BENCHMARK(BM_sample_geometric);

void BM_geom_quantile(benchmark::State& state) {
  SplitMix64 rng(2);
  const UnsafeProbability p(3e-4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(geom_quantile(p, 0.5 * rng.next_double()));
  }
}
BENCHMARK(BM_geom_quantile);

void BM_allocator_solve(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto costs = random_costs(n, 500, 42);
  double total = 0;
  for (auto c : costs) total += static_cast<double>(c);
  const double budget = 0.3 * total;
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve(costs, budget));
  }
}
BENCHMARK(BM_allocator_solve)->Arg(100)->Arg(1000)->Arg(10000);

void BM_calibrate_optimized(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  SynthConfig sc;
  sc.n = n;
  sc.d = 10;
  sc.seed = 9;
  const auto ds = generate_dataset(sc);
  std::vector<double> p_hat;
  for (const auto& rec : ds.records) p_hat.push_back(rec.true_p->value());
  CalibrationConfig config;
  config.mode = Mode::optimized;
  config.trim_M = 500;
  config.budget = 50.0 * static_cast<double>(n);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        calibrate_synthetic(ds.records, p_hat, config, seed++));
  }
}
BENCHMARK(BM_calibrate_optimized)->Arg(1000)->Arg(9000);

void BM_model_predict(benchmark::State& state) {
  ModelConfig mc;
  mc.epochs = 1;
  mc.seed = 3;
  std::vector<TrainingExample> examples;
  SplitMix64 rng(4);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> x(10);
    for (auto& v : x) v = rng.next_gaussian_pair().first;
    examples.push_back({std::move(x), 10, static_cast<double>(rng.next() % 11) / 10.0});
  }
  const auto model = ProbabilityModel::fit(examples, mc);
  const std::vector<double> probe(10, 0.5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.predict_p(probe));
  }
}
BENCHMARK(BM_model_predict);

}  // namespace

BENCHMARK_MAIN();
