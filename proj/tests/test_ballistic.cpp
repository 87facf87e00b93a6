#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <vector>

#include "rediff/ballistic.hpp"
#include "rediff/regeneration.hpp"
#include "support/oracles.hpp"

using namespace rediff;

TEST_SUITE_BEGIN("ballistic");

namespace {

SlabExitEstimate fake_estimate(double L, double p, std::int64_t n) {
  SlabExitEstimate est;
  est.slab = Slab{Vec{1.0, 0.0}, 1.0, L};
  est.n = n;
  est.exit_left = static_cast<std::int64_t>(std::llround(p * static_cast<double>(n)));
  est.exit_right = n - est.exit_left;
  est.p_hat = static_cast<double>(est.exit_left) / static_cast<double>(n);
  est.ci = wilson_interval(est.exit_left, n);
  return est;
}

EnvironmentSpec drifted_spec(double delta, std::uint64_t seed = 909) {
  EnvironmentSpec s;
  s.dimension = 2;
  s.range = 1.0;
  s.drift_bound = 1.0;
  s.lipschitz_k = 6.0;
  s.base_drift = Vec{delta, 0.0};
  s.bump_intensity = 1.0;
  s.amplitude_lo = Vec{0.0, -0.2};
  s.amplitude_hi = Vec{0.2, 0.2};
  s.master_seed = seed;
  return s;
}

}  // namespace

TEST_CASE("decay fit: exact exponential ladder") {
  std::vector<SlabExitEstimate> ladder;
  for (double L : {10.0, 20.0, 40.0})
    ladder.push_back(fake_estimate(L, std::exp(-0.1 * L), 10000000));
  const DecayFit f = fit_condition_T(ladder, 1.0);
  CHECK(f.verdict == DecayVerdict::consistent);
  CHECK(f.slope == doctest::Approx(-0.1).epsilon(0.02));
  CHECK(f.slope_upper95 < 0);
}

TEST_CASE("decay fit: constant probabilities are not consistent") {
  std::vector<SlabExitEstimate> ladder;
  for (double L : {10.0, 20.0, 40.0}) ladder.push_back(fake_estimate(L, 0.3, 100000));
  const DecayFit f = fit_condition_T(ladder, 1.0);
  CHECK(f.verdict == DecayVerdict::not_consistent);
  CHECK(std::abs(f.slope) < 0.01);
}

TEST_CASE("decay fit: degenerate ladders") {
  std::vector<SlabExitEstimate> zeros;
  for (double L : {10.0, 20.0, 40.0}) zeros.push_back(fake_estimate(L, 0.0, 1000));
  CHECK(fit_condition_T(zeros, 1.0).verdict == DecayVerdict::below_resolution);

  std::vector<SlabExitEstimate> two;
  two.push_back(fake_estimate(10, 0.2, 1000));
  two.push_back(fake_estimate(20, 0.1, 1000));
  CHECK(fit_condition_T(two, 1.0).verdict == DecayVerdict::insufficient);

  // zero cells enter through their upper bounds without spoiling the fit
  std::vector<SlabExitEstimate> mixed;
  mixed.push_back(fake_estimate(5, 0.2, 20000));
  mixed.push_back(fake_estimate(10, 0.04, 20000));
  mixed.push_back(fake_estimate(15, 0.008, 20000));
  mixed.push_back(fake_estimate(40, 0.0, 20000));
  const DecayFit f = fit_condition_T(mixed, 1.0);
  CHECK(f.n_bound_points == 1);
  CHECK(f.verdict == DecayVerdict::consistent);
}

TEST_CASE("cone directions: dimension cases") {
  const auto d1 = cone_directions(Vec{1.0}, 0.3, 5);
  REQUIRE(d1.size() == 1);  // degenerate neighborhood in one dimension
  CHECK(d1[0] == Vec{1.0});

  const Vec l2{0.6, 0.8};
  const auto d2 = cone_directions(l2, 0.25, 4);
  REQUIRE(d2.size() == 5);
  for (const auto& v : d2) CHECK(is_unit(v, 1e-9));
  for (std::size_t i = 1; i < d2.size(); ++i)
    CHECK(d2[i].dot(l2) == doctest::Approx(std::cos(0.25)).epsilon(1e-9));

  const Vec l3{0.0, 0.0, 1.0};
  const auto d3 = cone_directions(l3, 0.4, 6);
  REQUIRE(d3.size() == 7);
  for (std::size_t i = 1; i < d3.size(); ++i)
    CHECK(d3[i].dot(l3) == doctest::Approx(std::cos(0.4)).epsilon(1e-9));
}

TEST_CASE("tau tail fit: synthetic exponential displacements") {
  std::vector<RegenerationRecord> records;
  Rng rng = make_stream(21, StreamTag::synthetic, 50);
  for (int i = 0; i < 2000; ++i) {
    RegenerationRecord r;
    r.trajectory = i;
    r.k = 0;
    r.block_duration = 10;
    r.sup_displacement = -std::log(rng.uniform_open()) / 2.0;  // Exp(2)
    records.push_back(r);
  }
  const TailFit f = tau1_integrability(records, 1.0);
  CHECK(f.verdict == TailVerdict::integrable);
  CHECK(f.mu_hat == doctest::Approx(2.0).epsilon(0.15));
  CHECK(!f.survival.empty());

  const TailFit small = tau1_integrability({records.begin(), records.begin() + 50}, 1.0);
  CHECK(small.verdict == TailVerdict::insufficient);
}

TEST_CASE("block statistics: constant blocks give exact velocity and zero covariance") {
  std::vector<RegenerationRecord> records;
  const double delta = 0.37;
  for (int i = 0; i < 50; ++i) {
    RegenerationRecord r;
    r.trajectory = 0;
    r.k = i;  // k >= 1 blocks feed the estimator
    r.tau = i;
    r.block_duration = 1;
    r.block_increment = Vec{delta, 0.0};
    r.increment_l = delta;
    records.push_back(r);
  }
  records.front().k = 0;
  const BlockStatistics bs = block_statistics(records, Vec{1.0, 0.0});
  REQUIRE(bs.ok);
  CHECK(bs.velocity[0] == doctest::Approx(delta).epsilon(1e-12));
  CHECK(bs.velocity[1] == doctest::Approx(0.0));
  CHECK(bs.v_hat[0] == doctest::Approx(1.0));
  CHECK(bs.covariance[0] == doctest::Approx(0.0));
  CHECK(bs.covariance[3] == doctest::Approx(0.0));
  CHECK(bs.velocity_l == doctest::Approx(delta));
}

TEST_CASE("direct velocity from endpoints") {
  Rng rng = make_stream(22, StreamTag::synthetic, 51);
  const double T = 50;
  const Vec v0{0.4, -0.1};
  std::vector<Vec> ends;
  for (int i = 0; i < 4000; ++i)
    ends.push_back(v0 * T + Vec{std::sqrt(T) * rng.gaussian(), std::sqrt(T) * rng.gaussian()});
  const DirectVelocity dv = direct_velocity(ends, T);
  REQUIRE(dv.ok);
  for (int i = 0; i < 2; ++i)
    CHECK(std::abs(dv.velocity[i] - v0[i]) <= 3 * dv.velocity_se[i]);
  CHECK(std::abs(dv.covariance[0] - 1.0) <= 3 * dv.covariance_se[0]);
  CHECK(std::abs(dv.covariance[3] - 1.0) <= 3 * dv.covariance_se[3]);
  CHECK(std::abs(dv.covariance[1]) <= 3 * dv.covariance_se[1]);
}

TEST_CASE("slab ladder end to end with a strong drift") {
  const EnvironmentSpec s = drifted_spec(0.5);
  IntegratorConfig cfg;
  cfg.step = 0.02;
  cfg.correction = BoundaryCorrection::bridge_test;
  cfg.max_time = 200;

  std::vector<SlabExitEstimate> ladder;
  for (double L : {2.0, 4.0}) {
    const Slab slab{Vec{1.0, 0.0}, 1.0, L};
    ladder.push_back(slab_exit_probability(s, cfg, slab, 2000, 0, 1));
  }
  // uniformly positive drift projection: the exit-left mass decays with L
  CHECK(ladder[0].p_hat < 0.2);
  CHECK(ladder[1].p_hat < ladder[0].p_hat + 0.02);
  for (const auto& est : ladder) {
    CHECK(est.exit_left + est.exit_right + est.censored == est.n);
    CHECK(!est.censor_warning);
  }
  CHECK_THROWS_AS(
      slab_exit_probability(s, cfg, Slab{Vec{1.0, 0.0}, 1.0, 2.0}, 50, 0, 1),
      std::invalid_argument);
}

TEST_CASE("neighborhood scan: degenerate in 1d, conjunction under constant drift") {
  // one dimension: the neighborhood is the direction itself
  EnvironmentSpec s1;
  s1.dimension = 1;
  s1.range = 1.0;
  s1.drift_bound = 1.0;
  s1.lipschitz_k = 5.0;
  s1.base_drift = Vec{0.45};
  s1.bump_intensity = 0;
  s1.amplitude_lo = Vec{0.0};
  s1.amplitude_hi = Vec{0.0};
  s1.master_seed = 913;
  IntegratorConfig cfg;
  cfg.step = 0.02;
  cfg.correction = BoundaryCorrection::bridge_test;
  cfg.max_time = 200;
  const NeighborhoodReport r1 =
      neighborhood_T(s1, cfg, Vec{1.0}, 1.0, 0.3, 5, 1.0, {2.0, 4.0, 6.0}, 2000, 1);
  CHECK(r1.directions.size() == 1);

  // constant drift delta * l: every direction in a narrow cone decays
  EnvironmentSpec s2 = drifted_spec(0.45, 914);
  s2.bump_intensity = 0;
  const NeighborhoodReport r2 = neighborhood_T(s2, cfg, Vec{1.0, 0.0}, 1.0, 0.3, 3,
                                               1.0, {2.0, 4.0, 6.0}, 2000, 1);
  CHECK(r2.directions.size() == 4);
  CHECK(r2.all_consistent);
}

TEST_CASE("quenched mode reuses one environment") {
  const EnvironmentSpec s = drifted_spec(0.5, 917);
  IntegratorConfig cfg;
  cfg.step = 0.02;
  cfg.correction = BoundaryCorrection::none;
  cfg.max_time = 100;
  const Slab slab{Vec{1.0, 0.0}, 1.0, 2.0};
  const SlabExitEstimate q1 =
      slab_exit_probability(s, cfg, slab, 400, 7, 1, nullptr, true);
  const SlabExitEstimate q2 =
      slab_exit_probability(s, cfg, slab, 400, 7, 1, nullptr, true);
  CHECK(q1.exit_left == q2.exit_left);  // fully deterministic
  CHECK(q1.exit_left + q1.exit_right + q1.censored == q1.n);
}

TEST_CASE("renewal identity and split-half direction stability") {
  EnvironmentSpec s = drifted_spec(0.5, 919);
  IntegratorConfig icfg;
  icfg.step = 0.02;
  icfg.correction = BoundaryCorrection::none;
  icfg.max_time = 1e9;
  CouplingConfig ccfg;
  ccfg.l = Vec{1.0, 0.0};
  ccfg.success_p = 0.1;
  std::vector<RegenerationRecord> records;
  for (int i = 0; i < 250; ++i) {
    const Environment env(s, i);
    EnvView view(env);
    const CoupledPath cp = simulate_coupled_chain(view, icfg, ccfg, s.master_seed,
                                                  i, i, Vec::zero(2), 400);
    if (cp.failed) continue;
    const ScanResult sr = regeneration_scan(cp.path, cp.lambdas, ccfg.l, s.range, 20.0, i);
    records.insert(records.end(), sr.records.begin(), sr.records.end());
  }
  const BlockStatistics bs = block_statistics(records, ccfg.l);
  REQUIRE(bs.ok);
  REQUIRE(bs.n_blocks >= 100);

  // ratio of conditioned first-block means agrees with the block velocity
  const ConditionedVelocity cv = conditioned_first_block_velocity(records, ccfg.l);
  REQUIRE(cv.ok);
  const double se = std::sqrt(bs.velocity_l_se * bs.velocity_l_se +
                              cv.velocity_l_se * cv.velocity_l_se);
  CHECK(std::abs(bs.velocity_l - cv.velocity_l) <= 3 * se);

  // asymptotic direction from the two halves of the block sequence
  std::vector<RegenerationRecord> lo_half, hi_half;
  int max_k = 0;
  for (const auto& r : records) max_k = std::max(max_k, r.k);
  for (const auto& r : records)
    (r.k <= max_k / 2 ? lo_half : hi_half).push_back(r);
  const BlockStatistics b_lo = block_statistics(lo_half, ccfg.l);
  const BlockStatistics b_hi = block_statistics(hi_half, ccfg.l);
  REQUIRE((b_lo.ok && b_hi.ok));
  for (int i = 0; i < 2; ++i) {
    const double vse = std::sqrt(b_lo.velocity_se[i] * b_lo.velocity_se[i] +
                                 b_hi.velocity_se[i] * b_hi.velocity_se[i]);
    CHECK(std::abs(b_lo.velocity[i] - b_hi.velocity[i]) <= 3 * vse + 1e-12);
  }
}

TEST_CASE("doubling the drift does not weaken the decay verdict") {
  IntegratorConfig cfg;
  cfg.step = 0.02;
  cfg.correction = BoundaryCorrection::bridge_test;
  cfg.max_time = 400;
  auto fit_for = [&](double delta) {
    const EnvironmentSpec s = drifted_spec(delta, 911);
    std::vector<SlabExitEstimate> ladder;
    std::int64_t off = 0;
    for (double L : {2.0, 4.0, 6.0}) {
      ladder.push_back(
          slab_exit_probability(s, cfg, Slab{Vec{1.0, 0.0}, 1.0, L}, 3000, off, 1));
      off += 3000;
    }
    return fit_condition_T(ladder, 1.0);
  };
  const DecayFit weak = fit_for(0.35);
  const DecayFit strong = fit_for(0.7);
  if (weak.verdict == DecayVerdict::consistent)
    CHECK((strong.verdict == DecayVerdict::consistent ||
           strong.verdict == DecayVerdict::below_resolution));
}

TEST_SUITE_END();
