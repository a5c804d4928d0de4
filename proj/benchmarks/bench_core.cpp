#include <benchmark/benchmark.h>

#include <random>

#include "strokesig/curves.hpp"
#include "strokesig/forest.hpp"
#include "strokesig/ica.hpp"
#include "strokesig/shap.hpp"
#include "strokesig/synth.hpp"

using namespace strokesig;

namespace {

DataMatrix mixture_matrix(int m, int k, int n, std::uint64_t seed) {
  auto mix = make_linear_mixture(m, k, n, 0.05, seed);
  DataMatrix x;
  x.values = mix.data;
  for (int j = 0; j < n; ++j) x.columns.push_back({"P", j});
  return x;
}

LabeledDataset planted_dataset(int n, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u;
  LabeledDataset d;
  d.features.resize(n, k);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) d.features(i, j) = g(rng);
    const double s = d.features(i, 0) - d.features(i, 1);
    d.labels.push_back(u(rng) < 1.0 / (1.0 + std::exp(-s)) ? 1 : 0);
    d.groups.push_back("G" + std::to_string(i));
  }
  return d;
}

void BM_FastIca(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  auto x = mixture_matrix(60, k, 10000, 1);
  for (auto _ : state) {
    auto [model, s] = fit_ica(x, k, IcaOptions{});
    benchmark::DoNotOptimize(model.mixing);
  }
}
BENCHMARK(BM_FastIca)->Arg(4)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_TreeShap(benchmark::State& state) {
  auto d = planted_dataset(1500, static_cast<int>(state.range(0)), 2);
  HyperParams hp;
  hp.n_trees = 100;
  hp.seed = 3;
  auto forest = fit_forest(d, hp);
  Eigen::VectorXd x = d.features.row(0).transpose();
  for (auto _ : state) {
    auto sv = tree_shap(forest, x);
    benchmark::DoNotOptimize(sv.contributions);
  }
}
BENCHMARK(BM_TreeShap)->Arg(10)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_RashCurve(benchmark::State& state) {
  std::mt19937_64 rng(4);
  const Day end = 3650;
  std::uniform_int_distribution<int> day_d(0, static_cast<int>(end));
  std::vector<Day> events;
  for (int i = 0; i < state.range(0); ++i) events.push_back(day_d(rng));
  for (auto _ : state) {
    auto c = rash_intensity_curve(events, 0, end, 365, 16, 5);
    benchmark::DoNotOptimize(c.values);
  }
}
BENCHMARK(BM_RashCurve)->Arg(10)->Arg(100)->Unit(benchmark::kMicrosecond);

void BM_ForestFit(benchmark::State& state) {
  auto d = planted_dataset(static_cast<int>(state.range(0)), 20, 6);
  HyperParams hp;
  hp.n_trees = 50;
  hp.seed = 7;
  for (auto _ : state) {
    auto f = fit_forest(d, hp);
    benchmark::DoNotOptimize(f.trees);
  }
}
BENCHMARK(BM_ForestFit)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
