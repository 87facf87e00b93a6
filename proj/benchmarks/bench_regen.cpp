#include <benchmark/benchmark.h>

#include "rediff/regeneration.hpp"

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
  s.master_seed = 888;
  return s;
}

CouplingConfig bench_coupling(double p) {
  CouplingConfig c;
  c.l = Vec{1.0, 0.0};
  c.success_p = p;
  return c;
}

void BM_UnitSegment(benchmark::State& state) {
  const EnvironmentSpec spec = bench_spec();
  const Environment env(spec, 0);
  EnvView view(env);
  IntegratorConfig cfg;
  cfg.step = 0.01;
  // success probability picks the branch: ~0 quenched, ~1 guided bridge
  const CouplingConfig ccfg = bench_coupling(state.range(0) == 0 ? 1e-9 : 1 - 1e-9);
  std::vector<Vec> seg;
  std::int64_t i = 0;
  for (auto _ : state) {
    seg.clear();
    Rng rng = make_stream(spec.master_seed, StreamTag::segment, 0, 0, i++);
    benchmark::DoNotOptimize(
        coupled_unit_segment(view, cfg, ccfg, rng, Vec::zero(2), seg));
  }
}
BENCHMARK(BM_UnitSegment)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_RegenerationScan(benchmark::State& state) {
  const EnvironmentSpec spec = bench_spec();
  const Environment env(spec, 3);
  EnvView view(env);
  IntegratorConfig cfg;
  cfg.step = 0.01;
  const CouplingConfig ccfg = bench_coupling(0.05);
  const CoupledPath cp = simulate_coupled_chain(view, cfg, ccfg, spec.master_seed,
                                                3, 3, Vec::zero(2), 400);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        regeneration_scan(cp.path, cp.lambdas, ccfg.l, spec.range, 25.0, 0));
  }
}
BENCHMARK(BM_RegenerationScan)->Unit(benchmark::kMicrosecond);

}  // namespace
