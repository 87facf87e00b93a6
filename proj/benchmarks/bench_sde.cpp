#include <benchmark/benchmark.h>

#include "rediff/sde.hpp"

namespace {

using namespace rediff;

EnvironmentSpec bench_spec() {
  EnvironmentSpec s;
  s.dimension = 2;
  s.range = 1.0;
  s.drift_bound = 1.0;
  s.lipschitz_k = 6.0;
  s.base_drift = Vec{0.5, 0.0};
  s.bump_intensity = 1.0;
  s.amplitude_lo = Vec{0.0, -0.2};
  s.amplitude_hi = Vec{0.2, 0.2};
  s.master_seed = 777;
  return s;
}

void BM_EulerStep(benchmark::State& state) {
  const EnvironmentSpec spec = bench_spec();
  const Environment env(spec, 0);
  EnvView view(env);
  IntegratorConfig cfg;
  cfg.step = 0.01;
  cfg.correction = BoundaryCorrection::none;
  Walker w(view, cfg, make_stream(1, StreamTag::trajectory, 0), Vec::zero(2));
  for (auto _ : state) {
    w.step();
    benchmark::DoNotOptimize(w.position());
  }
}
BENCHMARK(BM_EulerStep);

void BM_SlabExit(benchmark::State& state) {
  const EnvironmentSpec spec = bench_spec();
  IntegratorConfig cfg;
  cfg.step = 0.01;
  cfg.correction = BoundaryCorrection::bridge_test;
  cfg.max_time = 200;
  const Slab slab{Vec{1.0, 0.0}, 1.0, static_cast<double>(state.range(0))};
  std::int64_t i = 0;
  for (auto _ : state) {
    const Environment env(spec, i);
    EnvView view(env);
    benchmark::DoNotOptimize(first_exit_slab(
        view, cfg, make_stream(spec.master_seed, StreamTag::trajectory, i), Vec::zero(2),
        slab));
    ++i;
  }
}
BENCHMARK(BM_SlabExit)->Arg(2)->Arg(8)->Unit(benchmark::kMicrosecond);

}  // namespace
