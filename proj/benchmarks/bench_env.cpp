#include <benchmark/benchmark.h>

#include "rediff/environment.hpp"

namespace {

using namespace rediff;

EnvironmentSpec bench_spec(double intensity) {
  EnvironmentSpec s;
  s.dimension = 2;
  s.range = 1.0;
  s.drift_bound = 1.0;
  s.lipschitz_k = 16.0;
  s.base_drift = Vec{0.3, 0.0};
  s.bump_intensity = intensity;
  s.amplitude_lo = Vec{-0.25, -0.25};
  s.amplitude_hi = Vec{0.25, 0.25};
  s.master_seed = 4242;
  return s;
}

void BM_DriftQueryPure(benchmark::State& state) {
  const EnvironmentSpec spec = bench_spec(static_cast<double>(state.range(0)));
  const Environment env(spec, 0);
  Rng rng = make_stream(1, StreamTag::synthetic, 0);
  Vec x{0.0, 0.0};
  for (auto _ : state) {
    x[0] += 0.05 * (rng.uniform() - 0.5);
    x[1] += 0.05 * (rng.uniform() - 0.5);
    benchmark::DoNotOptimize(env.drift(x));
  }
}
BENCHMARK(BM_DriftQueryPure)->Arg(1)->Arg(4);

void BM_DriftQueryCached(benchmark::State& state) {
  const EnvironmentSpec spec = bench_spec(static_cast<double>(state.range(0)));
  const Environment env(spec, 0);
  EnvView view(env);
  Rng rng = make_stream(1, StreamTag::synthetic, 0);
  Vec x{0.0, 0.0};
  for (auto _ : state) {
    x[0] += 0.05 * (rng.uniform() - 0.5);
    x[1] += 0.05 * (rng.uniform() - 0.5);
    benchmark::DoNotOptimize(view.drift(x));
  }
}
BENCHMARK(BM_DriftQueryCached)->Arg(1)->Arg(4);

void BM_CellGeneration(benchmark::State& state) {
  const EnvironmentSpec spec = bench_spec(2.0);
  const Environment env(spec, 0);
  std::int32_t i = 0;
  for (auto _ : state) {
    Environment::CellKey key;
    key.c[0] = i++;
    key.c[1] = -i;
    benchmark::DoNotOptimize(env.generate_cell(key));
  }
}
BENCHMARK(BM_CellGeneration);

}  // namespace
