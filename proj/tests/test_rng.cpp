#include <doctest.h>

#include <vector>

#include "rediff/rng.hpp"
#include "rediff/stats.hpp"

using namespace rediff;

TEST_SUITE_BEGIN("rng");

TEST_CASE("streams are reproducible and distinct") {
  Rng a = make_stream(42, StreamTag::trajectory, 7, 1);
  Rng b = make_stream(42, StreamTag::trajectory, 7, 1);
  Rng c = make_stream(42, StreamTag::trajectory, 8, 1);
  bool distinct = false;
  for (int i = 0; i < 64; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    if (x != c.next_u64()) distinct = true;
  }
  CHECK(distinct);
}

TEST_CASE("tags separate streams with equal indices") {
  Rng a = make_stream(1, StreamTag::trajectory, 5);
  Rng b = make_stream(1, StreamTag::segment, 5);
  int differ = 0;
  for (int i = 0; i < 16; ++i) differ += a.next_u64() != b.next_u64();
  CHECK(differ > 0);
}

TEST_CASE("uniform moments") {
  Rng rng = make_stream(7, StreamTag::synthetic, 0);
  RunningStat s;
  for (int i = 0; i < 200000; ++i) s.add(rng.uniform());
  CHECK(std::abs(s.mean() - 0.5) < 4 * s.standard_error());
  CHECK(s.variance() == doctest::Approx(1.0 / 12).epsilon(0.02));
}

TEST_CASE("gaussian moments") {
  Rng rng = make_stream(7, StreamTag::synthetic, 1);
  RunningStat s, s2;
  for (int i = 0; i < 200000; ++i) {
    const double g = rng.gaussian();
    s.add(g);
    s2.add(g * g);
  }
  CHECK(std::abs(s.mean()) < 4 * s.standard_error());
  CHECK(std::abs(s2.mean() - 1.0) < 4 * s2.standard_error());
}

TEST_CASE("poisson mean/variance and cap") {
  Rng rng = make_stream(7, StreamTag::synthetic, 2);
  RunningStat s;
  for (int i = 0; i < 100000; ++i) s.add(rng.poisson(3.0, 1000));
  CHECK(std::abs(s.mean() - 3.0) < 4 * s.standard_error());
  CHECK(s.variance() == doctest::Approx(3.0).epsilon(0.05));
  Rng rng2 = make_stream(7, StreamTag::synthetic, 3);
  for (int i = 0; i < 1000; ++i) CHECK(rng2.poisson(50.0, 5) <= 5);
}

TEST_CASE("uniform_in_ball stays inside and fills the ball") {
  Rng rng = make_stream(9, StreamTag::synthetic, 4);
  const Vec c{1.0, -2.0};
  RunningStat radial;
  for (int i = 0; i < 20000; ++i) {
    const Vec x = rng.uniform_in_ball(c, 2.0);
    const double r = distance(x, c);
    CHECK(r < 2.0);
    radial.add(r * r / 4.0);  // r^2/R^2 is uniform on [0,1] in 2d
  }
  CHECK(std::abs(radial.mean() - 0.5) < 4 * radial.standard_error());
}

TEST_SUITE_END();
