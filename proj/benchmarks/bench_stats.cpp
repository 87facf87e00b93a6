#include <benchmark/benchmark.h>

#include "rediff/stats.hpp"

namespace {

using namespace rediff;

void BM_EnergyDistanceTest(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng = make_stream(5, StreamTag::synthetic, 1);
  std::vector<Vec> a, b;
  for (std::size_t i = 0; i < n; ++i) {
    a.push_back(Vec{rng.gaussian(), rng.gaussian()});
    b.push_back(Vec{rng.gaussian() + 0.1, rng.gaussian()});
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(energy_distance_test(
        a, b, 19, make_stream(5, StreamTag::permutation, 0), state.range(0)));
  }
}
BENCHMARK(BM_EnergyDistanceTest)->Arg(250)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_KsTwoSample(benchmark::State& state) {
  Rng rng = make_stream(5, StreamTag::synthetic, 2);
  std::vector<double> a, b;
  for (int i = 0; i < 4000; ++i) {
    a.push_back(rng.gaussian());
    b.push_back(rng.gaussian());
  }
  for (auto _ : state) benchmark::DoNotOptimize(ks_two_sample(a, b));
}
BENCHMARK(BM_KsTwoSample)->Unit(benchmark::kMicrosecond);

}  // namespace
