#include <doctest.h>

#include <cmath>
#include <vector>

#include "rediff/rng.hpp"
#include "rediff/stats.hpp"

using namespace rediff;

TEST_SUITE_BEGIN("stats");

TEST_CASE("wilson interval matches reference values") {
  // 50/100 at 95%: classic textbook value (0.40383, 0.59617)
  const Interval iv = wilson_interval(50, 100);
  CHECK(iv.lo == doctest::Approx(0.40383).epsilon(1e-3));
  CHECK(iv.hi == doctest::Approx(0.59617).epsilon(1e-3));
  const Interval z = wilson_interval(0, 100);
  CHECK(z.lo == 0.0);
  CHECK(z.hi > 0.0);
}

TEST_CASE("clopper-pearson upper bound") {
  // zero successes: 1 - alpha^{1/n}
  CHECK(clopper_pearson_upper(0, 100, 0.05) ==
        doctest::Approx(1 - std::pow(0.05, 0.01)).epsilon(1e-12));
  // 5/100 one-sided 95% upper ~ 0.0980 (standard table value)
  CHECK(clopper_pearson_upper(5, 100, 0.05) == doctest::Approx(0.0980).epsilon(0.02));
}

TEST_CASE("incomplete gamma against known chi-square points") {
  // chi2 sf at the 1% critical values
  CHECK(chi_square_sf(6.634896601, 1) == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(chi_square_sf(52.19139483, 31) == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(chi_square_sf(0.0, 5) == doctest::Approx(1.0));
}

TEST_CASE("normal cdf sanity") {
  CHECK(normal_cdf(0) == doctest::Approx(0.5));
  CHECK(normal_sf(1.6448536269514722) == doctest::Approx(0.05).epsilon(1e-9));
}

TEST_CASE("ks two-sample: same distribution accepted, shifted rejected") {
  Rng rng = make_stream(3, StreamTag::synthetic, 10);
  std::vector<double> a, b, c;
  for (int i = 0; i < 2000; ++i) {
    a.push_back(rng.gaussian());
    b.push_back(rng.gaussian());
    c.push_back(rng.gaussian() + 0.4);
  }
  CHECK(ks_two_sample(a, b).p_value > 0.01);
  CHECK(ks_two_sample(a, c).p_value < 1e-6);
}

TEST_CASE("lag1 permutation test calibration and power") {
  Rng rng = make_stream(3, StreamTag::synthetic, 11);
  std::vector<double> iid, ar;
  double prev = 0;
  for (int i = 0; i < 400; ++i) {
    iid.push_back(rng.gaussian());
    prev = 0.8 * prev + rng.gaussian();
    ar.push_back(prev);
  }
  CHECK(lag1_permutation_test(iid, 500, make_stream(3, StreamTag::permutation, 0)).p_value >
        0.01);
  CHECK(lag1_permutation_test(ar, 500, make_stream(3, StreamTag::permutation, 1)).p_value <=
        0.01);
}

TEST_CASE("weighted line fit recovers a known line") {
  std::vector<double> x{1, 2, 3, 4}, y, var(4, 1e-4);
  for (double xi : x) y.push_back(2.5 - 0.7 * xi);
  const LineFit f = weighted_line_fit(x, y, var);
  CHECK(f.ok);
  CHECK(f.slope == doctest::Approx(-0.7).epsilon(1e-9));
  CHECK(f.intercept == doctest::Approx(2.5).epsilon(1e-9));
}

TEST_CASE("energy distance test: calibration and power") {
  Rng rng = make_stream(3, StreamTag::synthetic, 12);
  std::vector<Vec> a, b, c;
  for (int i = 0; i < 400; ++i) {
    a.push_back(Vec{rng.gaussian(), rng.gaussian()});
    b.push_back(Vec{rng.gaussian(), rng.gaussian()});
    c.push_back(Vec{rng.gaussian() + 0.6, rng.gaussian()});
  }
  const auto same =
      energy_distance_test(a, b, 199, make_stream(3, StreamTag::permutation, 2));
  CHECK(same.p_value > 0.01);
  const auto diff =
      energy_distance_test(a, c, 199, make_stream(3, StreamTag::permutation, 3));
  CHECK(diff.p_value <= 0.01);
}

TEST_CASE("sample quantile") {
  std::vector<double> xs{4, 1, 3, 2};
  CHECK(sample_quantile(xs, 0.0) == doctest::Approx(1));
  CHECK(sample_quantile(xs, 1.0) == doctest::Approx(4));
  CHECK(sample_quantile(xs, 0.5) == doctest::Approx(2.5));
}

TEST_SUITE_END();
