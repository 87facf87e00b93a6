#include "rediff/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace rediff {

void RunningStat::merge(const RunningStat& o) {
  if (o.n_ == 0) return;
  if (n_ == 0) {
    *this = o;
    return;
  }
  const double na = static_cast<double>(n_), nb = static_cast<double>(o.n_);
  const double delta = o.mean_ - mean_;
  const double n = na + nb;
  mean_ += delta * nb / n;
  m2_ += o.m2_ + delta * delta * na * nb / n;
  n_ += o.n_;
}

double RunningStat::variance() const {
  return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0;
}
double RunningStat::stddev() const { return std::sqrt(variance()); }
double RunningStat::standard_error() const {
  return n_ > 0 ? stddev() / std::sqrt(static_cast<double>(n_)) : 0.0;
}

Interval wilson_interval(std::int64_t successes, std::int64_t n, double z) {
  if (n <= 0) return {0, 1};
  const double p = static_cast<double>(successes) / static_cast<double>(n);
  const double z2 = z * z;
  const double nn = static_cast<double>(n);
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2 * nn)) / denom;
  const double half =
      z * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

namespace {

// Regularized incomplete beta via Lentz continued fraction.
double betacf(double a, double b, double x) {
  const double eps = 1e-14, fpmin = 1e-300;
  const double qab = a + b, qap = a + 1, qam = a - 1;
  double c = 1, d = 1 - qab * x / qap;
  if (std::abs(d) < fpmin) d = fpmin;
  d = 1 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1 + aa * d;
    if (std::abs(d) < fpmin) d = fpmin;
    c = 1 + aa / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1 + aa * d;
    if (std::abs(d) < fpmin) d = fpmin;
    c = 1 + aa / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h;
}

double inc_beta(double a, double b, double x) {
  if (x <= 0) return 0;
  if (x >= 1) return 1;
  const double ln =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
      b * std::log1p(-x);
  const double front = std::exp(ln);
  if (x < (a + 1) / (a + b + 2)) return front * betacf(a, b, x) / a;
  return 1 - front * betacf(b, a, 1 - x) / b;
}

}  // namespace

double clopper_pearson_upper(std::int64_t successes, std::int64_t n,
                             double alpha) {
  if (n <= 0) return 1;
  if (successes >= n) return 1;
  if (successes == 0) return 1 - std::pow(alpha, 1.0 / static_cast<double>(n));
  // invert the beta quantile by bisection on the regularized incomplete beta
  const double a = static_cast<double>(successes + 1);
  const double b = static_cast<double>(n - successes);
  double lo = static_cast<double>(successes) / static_cast<double>(n), hi = 1;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (inc_beta(a, b, mid) < 1 - alpha)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
double normal_sf(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

namespace {

double gamma_p_series(double a, double x) {
  double sum = 1.0 / a, term = sum;
  for (int n = 1; n < 500; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-15) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_q_cf(double a, double x) {
  const double fpmin = 1e-300;
  double b = x + 1 - a, c = 1 / fpmin, d = 1 / b, h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -i * (i - a);
    b += 2;
    d = an * d + b;
    if (std::abs(d) < fpmin) d = fpmin;
    c = b + an / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double gamma_p(double a, double x) {
  if (x <= 0) return 0;
  if (x < a + 1) return gamma_p_series(a, x);
  return 1 - gamma_q_cf(a, x);
}

double gamma_q(double a, double x) {
  if (x <= 0) return 1;
  if (x < a + 1) return 1 - gamma_p_series(a, x);
  return gamma_q_cf(a, x);
}

double chi_square_sf(double x, int k) { return gamma_q(0.5 * k, 0.5 * x); }

ChiSquareResult chi_square_uniform(const std::vector<std::int64_t>& counts) {
  ChiSquareResult r;
  std::int64_t total = 0;
  for (auto c : counts) total += c;
  if (counts.size() < 2 || total == 0) return r;
  const double expected =
      static_cast<double>(total) / static_cast<double>(counts.size());
  for (auto c : counts) {
    const double d = static_cast<double>(c) - expected;
    r.statistic += d * d / expected;
  }
  r.dof = static_cast<int>(counts.size()) - 1;
  r.p_value = chi_square_sf(r.statistic, r.dof);
  return r;
}

namespace {

double ks_sf(double lambda) {
  if (lambda <= 0) return 1;
  double sum = 0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += (j % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

}  // namespace

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  KsResult r;
  r.n1 = static_cast<std::int64_t>(a.size());
  r.n2 = static_cast<std::int64_t>(b.size());
  if (a.empty() || b.empty()) return r;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0;
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  r.statistic = d;
  const double ne = na * nb / (na + nb);
  const double se = std::sqrt(ne);
  r.p_value = ks_sf((se + 0.12 + 0.11 / se) * d);
  return r;
}

double pearson_correlation(std::span<const double> x,
                           std::span<const double> y) {
  const std::size_t n = std::min(x.size(), y.size());
  if (n < 2) return 0;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0 || syy <= 0) return 0;
  return sxy / std::sqrt(sxx * syy);
}

PermTestResult lag1_permutation_test(const std::vector<double>& s,
                                     int n_permutations, Rng rng) {
  PermTestResult r;
  r.n_permutations = n_permutations;
  if (s.size() < 3) return r;
  auto lag1 = [](const std::vector<double>& v) {
    std::span<const double> x(v.data(), v.size() - 1);
    std::span<const double> y(v.data() + 1, v.size() - 1);
    return std::abs(pearson_correlation(x, y));
  };
  r.statistic = lag1(s);
  std::vector<double> perm = s;
  int ge = 0;
  for (int p = 0; p < n_permutations; ++p) {
    shuffle(perm, rng);
    if (lag1(perm) >= r.statistic) ++ge;
  }
  r.p_value = (1.0 + ge) / (1.0 + n_permutations);
  return r;
}

LineFit weighted_line_fit(std::span<const double> x, std::span<const double> y,
                          std::span<const double> var) {
  LineFit f;
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n || var.size() != n) return f;
  double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 1.0 / std::max(var[i], 1e-300);
    sw += w;
    swx += w * x[i];
    swy += w * y[i];
    swxx += w * x[i] * x[i];
    swxy += w * x[i] * y[i];
  }
  const double det = sw * swxx - swx * swx;
  if (det <= 0) return f;
  f.slope = (sw * swxy - swx * swy) / det;
  f.intercept = (swxx * swy - swx * swxy) / det;
  f.slope_se = std::sqrt(sw / det);
  f.n = static_cast<int>(n);
  f.ok = true;
  return f;
}

namespace {

// E-statistic pieces from a pooled distance matrix under a label assignment.
// dist is row-major (n+m)^2 floats; idx lists pooled indices, first na in
// group A; pair_total is the label-invariant sum over all pooled pairs.
double energy_statistic(const std::vector<float>& dist, std::size_t total,
                        const std::vector<std::uint32_t>& idx, std::size_t na,
                        double pair_total) {
  const std::size_t nb = total - na;
  double saa = 0, sbb = 0;
  for (std::size_t i = 0; i < na; ++i) {
    const float* row = dist.data() + static_cast<std::size_t>(idx[i]) * total;
    for (std::size_t j = i + 1; j < na; ++j) saa += row[idx[j]];
  }
  for (std::size_t i = na; i < total; ++i) {
    const float* row = dist.data() + static_cast<std::size_t>(idx[i]) * total;
    for (std::size_t j = i + 1; j < total; ++j) sbb += row[idx[j]];
  }
  const double sab = pair_total - saa - sbb;
  const double a = static_cast<double>(na), b = static_cast<double>(nb);
  return 2.0 * sab / (a * b) - 2.0 * saa / (a * a) - 2.0 * sbb / (b * b);
}

}  // namespace

EnergyTestResult energy_distance_test(const std::vector<Vec>& a_in,
                                      const std::vector<Vec>& b_in,
                                      int n_permutations, Rng rng,
                                      std::int64_t max_per_sample,
                                      int workers) {
  EnergyTestResult r;
  r.n_permutations = n_permutations;
  std::vector<Vec> a = a_in, b = b_in;
  // deterministic thinning keeps the pooled matrix within memory bounds
  auto thin = [&](std::vector<Vec>& v) {
    if (max_per_sample > 0 &&
        static_cast<std::int64_t>(v.size()) > max_per_sample) {
      shuffle(v, rng);
      v.resize(static_cast<std::size_t>(max_per_sample));
      r.subsampled = true;
    }
  };
  thin(a);
  thin(b);
  r.n1 = static_cast<std::int64_t>(a.size());
  r.n2 = static_cast<std::int64_t>(b.size());
  if (a.size() < 2 || b.size() < 2) return r;

  const std::size_t na = a.size(), total = a.size() + b.size();
  std::vector<Vec> pool;
  pool.reserve(total);
  pool.insert(pool.end(), a.begin(), a.end());
  pool.insert(pool.end(), b.begin(), b.end());

  std::vector<float> dist(total * total, 0.f);
  for (std::size_t i = 0; i < total; ++i)
    for (std::size_t j = i + 1; j < total; ++j) {
      const float d = static_cast<float>(distance(pool[i], pool[j]));
      dist[i * total + j] = d;
      dist[j * total + i] = d;
    }

  double pair_total = 0;
  for (std::size_t i = 0; i < total; ++i) {
    const float* row = dist.data() + i * total;
    for (std::size_t j = i + 1; j < total; ++j) pair_total += row[j];
  }

  std::vector<std::uint32_t> idx(total);
  for (std::size_t i = 0; i < total; ++i) idx[i] = static_cast<std::uint32_t>(i);
  r.statistic = energy_statistic(dist, total, idx, na, pair_total);

  // permutations are stream-isolated so the p-value is reproducible for any
  // worker count
  std::vector<std::uint64_t> stream_base(static_cast<std::size_t>(n_permutations));
  for (int p = 0; p < n_permutations; ++p) stream_base[p] = rng.next_u64();
  std::vector<std::uint8_t> ge(static_cast<std::size_t>(n_permutations), 0);

  auto run_range = [&](int lo, int hi) {
    std::vector<std::uint32_t> perm(total);
    for (int p = lo; p < hi; ++p) {
      for (std::size_t i = 0; i < total; ++i)
        perm[i] = static_cast<std::uint32_t>(i);
      Rng prng(stream_base[p], {static_cast<std::uint64_t>(StreamTag::permutation)});
      shuffle(perm, prng);
      const double e = energy_statistic(dist, total, perm, na, pair_total);
      ge[p] = e >= r.statistic ? 1 : 0;
    }
  };
  if (workers <= 1 || n_permutations < 4) {
    run_range(0, n_permutations);
  } else {
    const int w = std::min(workers, n_permutations);
    std::vector<std::thread> ts;
    for (int t = 0; t < w; ++t) {
      const int lo = n_permutations * t / w;
      const int hi = n_permutations * (t + 1) / w;
      ts.emplace_back(run_range, lo, hi);
    }
    for (auto& t : ts) t.join();
  }
  int count_ge = 0;
  for (auto g : ge) count_ge += g;
  r.p_value = (1.0 + count_ge) / (1.0 + n_permutations);
  return r;
}

double sample_quantile(std::vector<double> xs, double q) {
  if (xs.empty()) return 0;
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return xs[lo] * (1 - frac) + xs[hi] * frac;
}

}  // namespace rediff
