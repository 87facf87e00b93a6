#include "rediff/environment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "rediff/stats.hpp"

namespace rediff {

double bump_profile(double r) {
  if (r >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - r * r));
}

double bump_gradient_bound() {
  static const double bound = [] {
    double m = 0;
    for (int i = 1; i < 20000; ++i) {
      const double r = i / 20000.0;
      const double one = 1.0 - r * r;
      const double g = bump_profile(r) * 2.0 * r / (one * one);
      m = std::max(m, g);
    }
    return m * 1.001;  // scan headroom
  }();
  return bound;
}

namespace {

double unit_ball_volume(int d) {
  // V_d = pi^{d/2} / Gamma(d/2 + 1)
  return std::pow(3.14159265358979323846, 0.5 * d) /
         std::tgamma(0.5 * d + 1.0);
}

}  // namespace

double EnvironmentSpec::mean_cell_count() const {
  return bump_intensity * std::pow(range, dimension);
}

int EnvironmentSpec::cell_count_cap() const {
  const double mu = mean_cell_count();
  return static_cast<int>(std::ceil(mu + 8.0 * std::sqrt(mu) + 8.0));
}

double EnvironmentSpec::amplitude_max_norm() const {
  switch (amplitude_law) {
    case AmplitudeLaw::constant:
      return amplitude_value.norm();
    case AmplitudeLaw::uniform_ball:
      return amplitude_radius;
    case AmplitudeLaw::uniform_box: {
      double s = 0;
      for (int i = 0; i < dimension; ++i) {
        const double m = std::max(std::abs(amplitude_lo[i]), std::abs(amplitude_hi[i]));
        s += m * m;
      }
      return std::sqrt(s);
    }
  }
  return 0;
}

double EnvironmentSpec::analytic_drift_lipschitz() const {
  if (bump_intensity <= 0) return 0;
  const double support = 0.5 * range;
  const double local = bump_intensity * unit_ball_volume(dimension) *
                       std::pow(support, dimension);
  const double per_bump = amplitude_max_norm() * bump_gradient_bound() / support;
  return per_bump * std::max(1.0, 3.0 * local);
}

double EnvironmentSpec::analytic_sigma_lipschitz() const {
  if (sigma_mode != SigmaMode::scalar_field || bump_intensity <= 0) return 0;
  const double support = 0.5 * range;
  const double local = bump_intensity * unit_ball_volume(dimension) *
                       std::pow(support, dimension);
  const double per_bump = sigma_amplitude * bump_gradient_bound() / support;
  return std::sqrt(static_cast<double>(dimension)) * per_bump *
         std::max(1.0, 3.0 * local);
}

double EnvironmentSpec::expected_field_magnitude() const {
  const double support = 0.5 * range;
  const double local = bump_intensity * unit_ball_volume(dimension) *
                       std::pow(support, dimension);
  return base_drift.norm() + amplitude_max_norm() * local;
}

std::vector<std::string> EnvironmentSpec::validation_errors() const {
  std::vector<std::string> errs;
  auto fail = [&](const std::string& m) { errs.push_back(m); };
  if (dimension < 1 || dimension > kMaxDim)
    fail("environment.dimension must be in [1," + std::to_string(kMaxDim) + "]");
  if (range <= 0) fail("environment.range must be > 0");
  if (drift_bound <= 0) fail("environment.drift_bound must be > 0");
  if (lipschitz_k <= 0) fail("environment.lipschitz_K must be > 0");
  if (ellipticity_nu < 1) fail("environment.ellipticity_nu must be >= 1");
  if (bump_intensity < 0) fail("environment.bump_intensity must be >= 0");
  if (base_drift.dim() != dimension)
    fail("environment.base_drift must have `dimension` components");
  if (base_drift.norm() > drift_bound + 1e-12)
    fail("environment.base_drift exceeds drift_bound");
  if (amplitude_law == AmplitudeLaw::uniform_box &&
      (amplitude_lo.dim() != dimension || amplitude_hi.dim() != dimension))
    fail("environment.amplitude_lo/hi must have `dimension` components");
  if (amplitude_law == AmplitudeLaw::uniform_box) {
    for (int i = 0; i < dimension; ++i)
      if (amplitude_lo[i] > amplitude_hi[i])
        fail("environment.amplitude_lo exceeds amplitude_hi in component " +
             std::to_string(i));
  }
  if (amplitude_law == AmplitudeLaw::uniform_ball && amplitude_radius < 0)
    fail("environment.amplitude_radius must be >= 0");
  if (amplitude_law == AmplitudeLaw::constant &&
      amplitude_value.dim() != dimension)
    fail("environment.amplitude_value must have `dimension` components");
  if (sigma_amplitude < 0) fail("environment.sigma_amplitude must be >= 0");
  if (dimension >= 1 && dimension <= kMaxDim && range > 0 && bump_intensity > 0 &&
      analytic_drift_lipschitz() + analytic_sigma_lipschitz() > lipschitz_k)
    fail("environment: bump amplitude/intensity violate the analytic Lipschitz "
         "bound: " +
         std::to_string(analytic_drift_lipschitz() + analytic_sigma_lipschitz()) +
         " > lipschitz_K = " + std::to_string(lipschitz_k));
  return errs;
}

void EnvironmentSpec::check_valid() const {
  const auto errs = validation_errors();
  if (!errs.empty()) throw std::invalid_argument(errs.front());
}

Environment::Environment(EnvironmentSpec spec, std::int64_t env_index)
    : spec_(std::move(spec)), env_index_(env_index) {
  spec_.check_valid();
}

Environment::CellKey Environment::cell_of(const Vec& x) const {
  CellKey k;
  for (int i = 0; i < spec_.dimension; ++i)
    k.c[i] = static_cast<std::int32_t>(std::floor(x[i] / spec_.range));
  return k;
}

Environment::CellData Environment::generate_cell(const CellKey& key) const {
  CellData cell;
  if (spec_.bump_intensity <= 0 &&
      !(spec_.sigma_mode == SigmaMode::scalar_field && spec_.sigma_amplitude > 0))
    return cell;
  if (spec_.bump_intensity <= 0) return cell;

  Rng rng(spec_.master_seed,
          {static_cast<std::uint64_t>(StreamTag::drift_field),
           static_cast<std::uint64_t>(env_index_),
           (static_cast<std::uint64_t>(static_cast<std::uint32_t>(key.c[0])) << 32) |
               static_cast<std::uint32_t>(key.c[1]),
           (static_cast<std::uint64_t>(static_cast<std::uint32_t>(key.c[2])) << 32) |
               static_cast<std::uint32_t>(key.c[3])});
  // dims above 4 are folded into an extra word when needed
  if (spec_.dimension > 4) {
    std::uint64_t extra = 0;
    for (int i = 4; i < spec_.dimension; ++i)
      extra = mix64(extra ^ static_cast<std::uint32_t>(key.c[i]));
    rng = Rng(spec_.master_seed,
              {static_cast<std::uint64_t>(StreamTag::drift_field),
               static_cast<std::uint64_t>(env_index_),
               (static_cast<std::uint64_t>(static_cast<std::uint32_t>(key.c[0])) << 32) |
                   static_cast<std::uint32_t>(key.c[1]),
               (static_cast<std::uint64_t>(static_cast<std::uint32_t>(key.c[2])) << 32) |
                   static_cast<std::uint32_t>(key.c[3]),
               extra});
  }

  const int n = rng.poisson(spec_.mean_cell_count(), spec_.cell_count_cap());
  cell.points.reserve(static_cast<std::size_t>(n));
  const int d = spec_.dimension;
  for (int p = 0; p < n; ++p) {
    BumpPoint bp;
    bp.position = Vec(d);
    for (int i = 0; i < d; ++i)
      bp.position[i] = (key.c[i] + rng.uniform()) * spec_.range;
    switch (spec_.amplitude_law) {
      case AmplitudeLaw::constant:
        bp.mark = spec_.amplitude_value;
        break;
      case AmplitudeLaw::uniform_ball:
        bp.mark = rng.uniform_in_ball(Vec::zero(d), spec_.amplitude_radius);
        break;
      case AmplitudeLaw::uniform_box: {
        bp.mark = Vec(d);
        for (int i = 0; i < d; ++i)
          bp.mark[i] = spec_.amplitude_lo[i] +
                       rng.uniform() * (spec_.amplitude_hi[i] - spec_.amplitude_lo[i]);
        break;
      }
    }
    bp.smark = (2.0 * rng.uniform() - 1.0) * spec_.sigma_amplitude;
    cell.points.push_back(bp);
  }
  return cell;
}

namespace {

/// Visits the 3^d neighborhood of x's cell, which covers every bump point
/// within range/2 of x; the visit order fixes the summation order, so cached
/// and uncached queries agree bitwise.
template <class CellLookup>
void gather_neighborhood(const EnvironmentSpec& spec, const Environment::CellKey& base,
                         CellLookup&& lookup,
                         std::vector<Environment::BumpPoint>& out) {
  out.clear();
  const int d = spec.dimension;
  int n_neigh = 1;
  for (int i = 0; i < d; ++i) n_neigh *= 3;
  for (int t = 0; t < n_neigh; ++t) {
    Environment::CellKey key = base;
    int rem = t;
    for (int i = 0; i < d; ++i) {
      key.c[i] += rem % 3 - 1;
      rem /= 3;
    }
    const Environment::CellData& cell = lookup(key);
    out.insert(out.end(), cell.points.begin(), cell.points.end());
  }
}

Vec drift_from_points(const EnvironmentSpec& spec, const Vec& x,
                      const std::vector<Environment::BumpPoint>& points) {
  Vec b = spec.base_drift;
  const double support = 0.5 * spec.range;
  const int d = spec.dimension;
  for (const auto& p : points) {
    const double r = distance(x, p.position) / support;
    if (r >= 1.0) continue;
    const double w = bump_profile(r);
    for (int i = 0; i < d; ++i) b[i] += w * p.mark[i];
  }
  const double n = b.norm();
  if (n > spec.drift_bound) b *= spec.drift_bound / n;  // radial clip
  return b;
}

double sigma_from_points(const EnvironmentSpec& spec, const Vec& x,
                         const std::vector<Environment::BumpPoint>& points) {
  double s = 1.0;
  const double support = 0.5 * spec.range;
  for (const auto& p : points) {
    const double r = distance(x, p.position) / support;
    if (r < 1.0) s += p.smark * bump_profile(r);
  }
  const double lo = 1.0 / std::sqrt(spec.ellipticity_nu);
  const double hi = std::sqrt(spec.ellipticity_nu);
  return std::clamp(s, lo, hi);
}

}  // namespace

Vec Environment::drift(const Vec& x) const {
  if (spec_.bump_intensity <= 0) {
    Vec b = spec_.base_drift;
    const double n = b.norm();
    if (n > spec_.drift_bound) b *= spec_.drift_bound / n;
    return b;
  }
  CellData scratch;
  std::vector<BumpPoint> points;
  gather_neighborhood(spec_, cell_of(x),
                      [&](const CellKey& k) -> const CellData& {
                        scratch = generate_cell(k);
                        return scratch;
                      },
                      points);
  return drift_from_points(spec_, x, points);
}

double Environment::sigma_scalar(const Vec& x) const {
  if (spec_.sigma_mode == SigmaMode::identity) return 1.0;
  if (spec_.bump_intensity <= 0 || spec_.sigma_amplitude <= 0) {
    const double lo = 1.0 / std::sqrt(spec_.ellipticity_nu);
    const double hi = std::sqrt(spec_.ellipticity_nu);
    return std::clamp(1.0, lo, hi);
  }
  CellData scratch;
  std::vector<BumpPoint> points;
  gather_neighborhood(spec_, cell_of(x),
                      [&](const CellKey& k) -> const CellData& {
                        scratch = generate_cell(k);
                        return scratch;
                      },
                      points);
  return sigma_from_points(spec_, x, points);
}

std::vector<double> Environment::sigma_matrix(const Vec& x) const {
  const int d = spec_.dimension;
  std::vector<double> m(static_cast<std::size_t>(d) * d, 0.0);
  const double s = sigma_scalar(x);
  for (int i = 0; i < d; ++i) m[static_cast<std::size_t>(i) * d + i] = s;
  return m;
}

const Environment::CellData& EnvView::cell(const Environment::CellKey& key) {
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  if (cache_.size() > 16384) cache_.clear();
  return cache_.emplace(key, env_->generate_cell(key)).first->second;
}

const std::vector<Environment::BumpPoint>& EnvView::neighborhood(const Vec& x) {
  const Environment::CellKey base = env_->cell_of(x);
  if (!memo_valid_ || !(base == memo_key_)) {
    gather_neighborhood(env_->spec(), base,
                        [this](const Environment::CellKey& k) -> const Environment::CellData& {
                          return cell(k);
                        },
                        memo_points_);
    memo_key_ = base;
    memo_valid_ = true;
  }
  return memo_points_;
}

Vec EnvView::drift(const Vec& x) {
  const EnvironmentSpec& spec = env_->spec();
  if (spec.bump_intensity <= 0) {
    Vec b = spec.base_drift;
    const double n = b.norm();
    if (n > spec.drift_bound) b *= spec.drift_bound / n;
    return b;
  }
  return drift_from_points(spec, x, neighborhood(x));
}

double EnvView::sigma_scalar(const Vec& x) {
  const EnvironmentSpec& spec = env_->spec();
  if (spec.sigma_mode == SigmaMode::identity) return 1.0;
  if (spec.bump_intensity <= 0 || spec.sigma_amplitude <= 0) return 1.0;
  return sigma_from_points(spec, x, neighborhood(x));
}

double SignSplitMoments::ratio() const {
  if (mean_minus <= 0) return std::numeric_limits<double>::infinity();
  return mean_plus / mean_minus;
}

SignSplitMoments sign_split_moments(const EnvironmentSpec& spec, const Vec& l,
                                    std::int64_t n_env, std::int64_t env_offset) {
  if (!is_unit(l)) throw std::invalid_argument("sign_split_moments: l must be a unit vector");
  if (n_env < 2) throw std::invalid_argument("sign_split_moments: n_env must be >= 2");
  RunningStat plus, minus;
  const Vec origin = Vec::zero(spec.dimension);
  for (std::int64_t e = 0; e < n_env; ++e) {
    const Environment env(spec, env_offset + e);
    const double v = env.drift(origin).dot(l);
    plus.add(std::max(v, 0.0));
    minus.add(std::max(-v, 0.0));
  }
  SignSplitMoments m;
  m.mean_plus = plus.mean();
  m.se_plus = plus.standard_error();
  m.mean_minus = minus.mean();
  m.se_minus = minus.standard_error();
  m.n_env = n_env;
  return m;
}

}  // namespace rediff
