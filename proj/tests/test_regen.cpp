#include <doctest.h>

#include <stdexcept>

#include <algorithm>
#include <cmath>
#include <vector>

#include "rediff/regeneration.hpp"
#include "rediff/stats.hpp"

using namespace rediff;

TEST_SUITE_BEGIN("regen");

namespace {

EnvironmentSpec nonnestling_spec(std::uint64_t seed = 551) {
  EnvironmentSpec s;
  s.dimension = 2;
  s.range = 1.0;
  s.drift_bound = 1.0;
  s.lipschitz_k = 6.0;
  s.base_drift = Vec{0.5, 0.0};
  s.bump_intensity = 1.0;
  s.amplitude_law = AmplitudeLaw::uniform_box;
  s.amplitude_lo = Vec{0.0, -0.2};
  s.amplitude_hi = Vec{0.2, 0.2};
  s.master_seed = seed;
  return s;
}

IntegratorConfig fast_integrator() {
  IntegratorConfig c;
  c.step = 0.02;
  c.correction = BoundaryCorrection::none;
  c.max_time = 1e9;
  return c;
}

CouplingConfig coupling(double p) {
  CouplingConfig c;
  c.l = Vec{1.0, 0.0};
  c.success_p = p;
  c.bridge_max_rejects = 64;
  return c;
}

// equal-probability radial-angular bins over a disk (4 radial x 8 angular)
int disk_bin(const Vec& y, const Vec& center, double R) {
  const Vec d = y - center;
  const double r2 = d.norm2() / (R * R);
  const int radial = std::min(3, static_cast<int>(r2 * 4));
  const double ang = std::atan2(d[1], d[0]) + 3.14159265358979323846;
  const int sector = std::min(7, static_cast<int>(ang / (2 * 3.14159265358979323846 / 8)));
  return radial * 8 + sector;
}

Path line_path(const std::vector<double>& proj, double h) {
  Path p;
  p.h = h;
  for (double v : proj) p.pos.push_back(Vec{v, 0.0});
  return p;
}

}  // namespace

TEST_CASE("coupling config validation") {
  CouplingConfig c = coupling(0.5);
  CHECK(c.validation_errors().empty());
  c.success_p = 1.5;
  CHECK(!c.validation_errors().empty());
  c = coupling(0.5);
  c.l = Vec{0.8, 0.0};
  CHECK(!c.validation_errors().empty());
}

TEST_CASE("coin frequency matches the success probability") {
  const EnvironmentSpec s = nonnestling_spec();
  const Environment env(s, 0);
  EnvView view(env);
  const IntegratorConfig icfg = fast_integrator();
  const CouplingConfig ccfg = coupling(0.3);
  int ones = 0;
  const int n = 5000;
  std::vector<Vec> scratch;
  for (int i = 0; i < n; ++i) {
    scratch.clear();
    Rng rng = make_stream(s.master_seed, StreamTag::segment, 0, 0, i);
    const SegmentOutcome so =
        coupled_unit_segment(view, icfg, ccfg, rng, Vec::zero(2), scratch);
    REQUIRE(!so.failed);
    ones += so.lambda;
    CHECK(static_cast<int>(scratch.size()) == icfg.steps_per_unit());
  }
  const double p = static_cast<double>(ones) / n;
  const double se = std::sqrt(0.3 * 0.7 / n);
  CHECK(std::abs(p - 0.3) <= 4 * se);
}

TEST_CASE("success segments stay contained and land uniformly") {
  const EnvironmentSpec s = nonnestling_spec();
  const double R = s.range;
  const Environment env(s, 1);
  EnvView view(env);
  const IntegratorConfig icfg = fast_integrator();
  const CouplingConfig ccfg = coupling(0.9);
  const Vec from{0.7, -0.4};
  const Vec stay_center = from + 5.0 * R * ccfg.l;
  const Vec land_center = from + 9.0 * R * ccfg.l;
  std::vector<std::int64_t> bins(32, 0);
  int bridges = 0;
  std::vector<Vec> seg;
  for (int i = 0; bridges < 3000; ++i) {
    REQUIRE(i < 20000);
    seg.clear();
    Rng rng = make_stream(s.master_seed, StreamTag::segment, 1, 1, i);
    const SegmentOutcome so = coupled_unit_segment(view, icfg, ccfg, rng, from, seg);
    REQUIRE(!so.failed);
    if (so.lambda == 0) continue;
    ++bridges;
    for (const auto& x : seg) CHECK(distance(x, stay_center) < 6.0 * R);
    const Vec& end = seg.back();
    CHECK(distance(end, land_center) < R);
    ++bins[static_cast<std::size_t>(disk_bin(end, land_center, R))];
  }
  const ChiSquareResult chi = chi_square_uniform(bins);
  CHECK(chi.dof == 31);
  CHECK(chi.p_value > 0.01);
}

TEST_CASE("weighted mode records finite importance log-weights") {
  const EnvironmentSpec s = nonnestling_spec();
  const Environment env(s, 2);
  EnvView view(env);
  const IntegratorConfig icfg = fast_integrator();
  CouplingConfig ccfg = coupling(0.9);
  ccfg.mode = CouplingConfig::Mode::weighted_bridge;
  std::vector<Vec> seg;
  int nonzero = 0;
  for (int i = 0; i < 50; ++i) {
    seg.clear();
    Rng rng = make_stream(s.master_seed, StreamTag::segment, 2, 2, i);
    const SegmentOutcome so = coupled_unit_segment(view, icfg, ccfg, rng, Vec::zero(2), seg);
    REQUIRE(!so.failed);
    if (so.lambda == 1) {
      CHECK(std::isfinite(so.log_weight));
      if (so.log_weight != 0) ++nonzero;
    }
  }
  CHECK(nonzero > 0);
}

TEST_CASE("bridge rejection exhaustion is reported, not retried silently") {
  EnvironmentSpec s = nonnestling_spec();
  s.range = 0.05;  // containment ball far smaller than the unit-time noise
  s.bump_intensity = 0;
  const Environment env(s, 0);
  EnvView view(env);
  const IntegratorConfig icfg = fast_integrator();
  CouplingConfig ccfg = coupling(0.999);
  ccfg.bridge_max_rejects = 8;
  std::vector<Vec> seg;
  Rng rng = make_stream(s.master_seed, StreamTag::segment, 3, 3, 0);
  const SegmentOutcome so = coupled_unit_segment(view, icfg, ccfg, rng, Vec::zero(2), seg);
  CHECK(so.failed);
  CHECK(so.rejects == 8);
  CHECK(seg.empty());
}

TEST_CASE("scan of a unit-speed path with every coin successful") {
  // climbs one unit of projection per unit time; h = 0.5
  std::vector<double> proj;
  for (int i = 0; i <= 24; ++i) proj.push_back(0.5 * i);
  const Path path = line_path(proj, 0.5);
  const std::vector<std::uint8_t> lambdas(12, 1);
  const ScanResult res = regeneration_scan(path, lambdas, Vec{1.0, 0.0}, 1.0, 2.0, 0);
  CHECK(res.d_infinite);
  CHECK(res.first_tau == 4.0);
  REQUIRE(res.n_taus == 3);  // regenerations at 4, 8, 12
  REQUIRE(res.records.size() == 3);
  CHECK(res.records[0].k == 0);
  CHECK(res.records[0].tau == 0);
  CHECK(res.records[0].block_duration == 4);
  CHECK(res.records[0].increment_l == doctest::Approx(4.0));
  CHECK(!res.records[0].censored);
  CHECK(res.records[1].tau == 4);
  CHECK(res.records[1].block_duration == 4);
  CHECK(res.records[2].tau == 8);
  CHECK(res.records[2].censored);  // right endpoint at the horizon edge
}

TEST_CASE("scan resumes after an early backtrack") {
  // climb at unit speed to 4, dip to 2.8, then climb at 0.4/unit
  std::vector<double> proj;
  const double h = 0.1;
  for (int i = 0; i <= 200; ++i) {
    const double t = h * i;
    double v;
    if (t <= 4)
      v = t;
    else if (t <= 5)
      v = 4 - 1.2 * (t - 4);
    else
      v = 2.8 + 0.4 * (t - 5);
    proj.push_back(v);
  }
  const Path path = line_path(proj, h);
  const std::vector<std::uint8_t> lambdas(20, 1);
  const ScanResult res = regeneration_scan(path, lambdas, Vec{1.0, 0.0}, 1.0, 4.0, 0);
  CHECK(res.d_infinite);  // never drops a full unit below the start
  CHECK(res.n_taus == 1);
  CHECK(res.first_tau == 12.0);  // the time-4 candidate is invalidated by the dip
  REQUIRE(res.records.size() == 2);
  CHECK(res.records[0].block_duration == 12);
  CHECK(!res.records[0].censored);
  CHECK(res.records[1].partial);
  CHECK(res.records[1].censored);
}

TEST_CASE("scan with no candidate reports empty with censoring") {
  const Path path = line_path(std::vector<double>(9, 0.0), 0.5);
  const std::vector<std::uint8_t> lambdas(4, 1);
  const ScanResult res = regeneration_scan(path, lambdas, Vec{1.0, 0.0}, 1.0, 2.0, 0);
  CHECK(res.n_taus == 0);
  CHECK(res.records.empty());
  CHECK(res.first_tau == kInf);
}

TEST_CASE("coupled chains: block geometry, coin conditioning, reproducible medians") {
  const EnvironmentSpec s = nonnestling_spec(661);
  const IntegratorConfig icfg = fast_integrator();
  const CouplingConfig ccfg = coupling(0.1);
  const double R = s.range;
  const std::int64_t horizon = 120;

  auto run_seed = [&](std::uint64_t seed) {
    EnvironmentSpec spec = s;
    spec.master_seed = seed;
    std::vector<double> taus;
    std::vector<RegenerationRecord> records;
    for (int i = 0; i < 1500; ++i) {
      const Environment env(spec, i);
      EnvView view(env);
      const CoupledPath cp = simulate_coupled_chain(view, icfg, ccfg, spec.master_seed,
                                                    i, i, Vec::zero(2), horizon);
      REQUIRE(!cp.failed);
      // coin conditioning holds pathwise: every success segment is contained
      // and lands on the displaced ball
      const int spu = icfg.steps_per_unit();
      for (std::size_t m = 0; m < cp.lambdas.size(); ++m) {
        if (!cp.lambdas[m]) continue;
        const Vec& from = cp.path.pos[m * spu];
        for (int j = 1; j <= spu; ++j)
          CHECK(distance(cp.path.pos[m * spu + j], from + 5.0 * R * ccfg.l) < 6.0 * R);
        CHECK(distance(cp.path.pos[(m + 1) * spu], from + 9.0 * R * ccfg.l) < R);
      }
      const ScanResult sr =
          regeneration_scan(cp.path, cp.lambdas, ccfg.l, R, 20.0, i);
      if (sr.n_taus > 0 && sr.first_tau_confirmed) taus.push_back(sr.first_tau);
      records.insert(records.end(), sr.records.begin(), sr.records.end());
    }
    return std::pair{taus, records};
  };

  const auto [taus, records] = run_seed(661);
  CHECK(taus.size() > 100);

  // minimum regeneration gap with the discretization tolerance
  const double min_gap = 21.0 * R / 2 - 2 * icfg.step * s.drift_bound;
  std::int64_t complete = 0;
  std::int64_t prev_traj = -1;
  std::int64_t prev_tau = -1;
  for (const auto& r : records) {
    if (r.partial) continue;
    ++complete;
    CHECK(r.increment_l >= min_gap);
    if (r.trajectory == prev_traj) CHECK(r.tau > prev_tau);  // taus strictly increase
    prev_traj = r.trajectory;
    prev_tau = r.tau;
  }
  CHECK(complete > 200);

  // medians agree across independent master seeds within 10%
  const auto med = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  const double m1 = med(taus);
  const double m2 = med(run_seed(662).first);
  const double m3 = med(run_seed(663).first);
  const double lo = std::min({m1, m2, m3}), hi = std::max({m1, m2, m3});
  CHECK(hi / lo <= 1.10);
}

TEST_CASE("censored fraction of the first regeneration is monotone in the horizon") {
  const EnvironmentSpec s = nonnestling_spec(717);
  const IntegratorConfig icfg = fast_integrator();
  const CouplingConfig ccfg = coupling(0.1);
  auto censored_fraction = [&](std::int64_t horizon) {
    int censored = 0;
    const int n = 60;
    for (int i = 0; i < n; ++i) {
      const Environment env(s, i);
      EnvView view(env);
      const CoupledPath cp = simulate_coupled_chain(view, icfg, ccfg, s.master_seed,
                                                    i, i, Vec::zero(2), horizon);
      const ScanResult sr = regeneration_scan(cp.path, cp.lambdas, ccfg.l, s.range, 20.0, i);
      if (!(sr.n_taus > 0 && sr.first_tau_confirmed)) ++censored;
    }
    return static_cast<double>(censored) / n;
  };
  const double f60 = censored_fraction(60);
  const double f120 = censored_fraction(120);
  const double f240 = censored_fraction(240);
  CHECK(f60 >= f120);
  CHECK(f120 >= f240);
}

namespace {

std::vector<RegenerationRecord> synthetic_records(int n_traj, int blocks_per,
                                                  double rho, std::uint64_t seed) {
  std::vector<RegenerationRecord> out;
  Rng rng = make_stream(seed, StreamTag::synthetic, 40);
  for (int t = 0; t < n_traj; ++t) {
    double prev = 0;
    std::int64_t tau = 0;
    for (int k = 0; k < blocks_per; ++k) {
      RegenerationRecord r;
      r.trajectory = t;
      r.k = k;
      r.tau = tau;
      const double noise = rng.gaussian();
      prev = rho * prev + std::sqrt(1 - rho * rho) * noise;
      const double dur = std::max(2.0, 20.0 + 4.0 * prev);
      r.block_duration = static_cast<std::int64_t>(std::lround(dur));
      tau += r.block_duration;
      r.block_increment = Vec{11.0 + rng.gaussian(), rng.gaussian()};
      r.increment_l = r.block_increment[0];
      r.x_tau = Vec::zero(2);
      r.sup_displacement = std::abs(r.increment_l) + 1;
      r.censored = false;
      r.trajectory_d_infinite = true;
      out.push_back(r);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("renewal tests: independent blocks pass, correlated blocks fail") {
  RenewalTestOptions opts;
  opts.min_blocks = 200;
  opts.n_permutations = 500;
  opts.seed = 5;

  const auto iid = synthetic_records(60, 8, 0.0, 12);
  const RenewalReport rep = renewal_tests(iid, opts);
  REQUIRE(!rep.refused);
  CHECK(rep.ks_duration.p_value > 0.01);
  CHECK(rep.ks_increment.p_value > 0.01);
  CHECK(rep.lag1.p_value > 0.01);
  CHECK(rep.z0_compared);
  CHECK(rep.ks_z0_duration.p_value > 0.01);

  const auto ar = synthetic_records(60, 8, 0.8, 13);
  const RenewalReport rep2 = renewal_tests(ar, opts);
  REQUIRE(!rep2.refused);
  CHECK(rep2.lag1.p_value <= 0.01);
}

TEST_CASE("renewal tests refuse on insufficient blocks") {
  const auto few = synthetic_records(5, 4, 0.0, 14);
  RenewalTestOptions opts;
  opts.min_blocks = 200;
  const RenewalReport rep = renewal_tests(few, opts);
  CHECK(rep.refused);
  CHECK(!rep.refusal_reason.empty());
}

TEST_SUITE_END();
