#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "rediff/rng.hpp"
#include "rediff/vec.hpp"

namespace rediff {

/// Streaming mean/variance (Welford).
class RunningStat {
 public:
  void add(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }
  void merge(const RunningStat& o);
  std::int64_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const;       // sample variance (n-1)
  double stddev() const;
  double standard_error() const;  // stddev / sqrt(n)

 private:
  std::int64_t n_ = 0;
  double mean_ = 0;
  double m2_ = 0;
};

struct Interval {
  double lo = 0;
  double hi = 0;
  double half_width() const { return 0.5 * (hi - lo); }
};

/// Wilson score interval for a binomial proportion.
Interval wilson_interval(std::int64_t successes, std::int64_t n, double z = 1.96);

/// One-sided Clopper-Pearson upper bound P[p <= bound] >= 1-alpha.
double clopper_pearson_upper(std::int64_t successes, std::int64_t n,
                             double alpha = 0.05);

double normal_cdf(double x);
double normal_sf(double x);

/// Regularized incomplete gamma functions P(a,x), Q(a,x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

/// Survival function of the chi-square distribution with k dof.
double chi_square_sf(double x, int k);

/// Pearson chi-square goodness-of-fit against equal-probability bins.
struct ChiSquareResult {
  double statistic = 0;
  int dof = 0;
  double p_value = 1;
};
ChiSquareResult chi_square_uniform(const std::vector<std::int64_t>& counts);

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
struct KsResult {
  double statistic = 0;
  double p_value = 1;
  std::int64_t n1 = 0, n2 = 0;
};
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

double pearson_correlation(std::span<const double> x, std::span<const double> y);

/// Permutation test for lag-1 dependence of a sequence: statistic is
/// |corr(s_i, s_{i+1})| over overlapping pairs, null via random permutations.
struct PermTestResult {
  double statistic = 0;
  double p_value = 1;
  int n_permutations = 0;
};
PermTestResult lag1_permutation_test(const std::vector<double>& s,
                                     int n_permutations, Rng rng);

/// Weighted least squares y ~ intercept + slope * x with known variances.
struct LineFit {
  double slope = 0;
  double intercept = 0;
  double slope_se = 0;
  int n = 0;
  bool ok = false;
};
LineFit weighted_line_fit(std::span<const double> x, std::span<const double> y,
                          std::span<const double> var);

/// Two-sample energy-distance permutation test for d-dimensional samples.
struct EnergyTestResult {
  double statistic = 0;
  double p_value = 1;
  int n_permutations = 0;
  std::int64_t n1 = 0, n2 = 0;
  bool subsampled = false;
};
EnergyTestResult energy_distance_test(const std::vector<Vec>& a,
                                      const std::vector<Vec>& b,
                                      int n_permutations, Rng rng,
                                      std::int64_t max_per_sample = 4000,
                                      int workers = 1);

/// In-place Fisher-Yates shuffle driven by the supplied stream.
template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform() * i);
    std::swap(v[i - 1], v[j < i ? j : i - 1]);
  }
}

/// Quantile of a sample (linear interpolation on the sorted copy).
double sample_quantile(std::vector<double> xs, double q);

}  // namespace rediff
