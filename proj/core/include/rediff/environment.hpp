#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "rediff/rng.hpp"
#include "rediff/vec.hpp"

namespace rediff {

enum class SigmaMode { identity, scalar_field };
enum class AmplitudeLaw { constant, uniform_ball, uniform_box };

/// Parameters of the random drift/diffusivity fields. A realization is a
/// marked Poisson bump field: homogeneous Poisson points carry i.i.d. vector
/// marks, each contributing a smooth bump of support radius range/2, so that
/// field values on sets farther apart than `range` are independent.
struct EnvironmentSpec {
  int dimension = 2;
  double range = 1.0;          // dependence range R; bump support radius R/2
  double drift_bound = 1.0;    // hard cap on |b|
  double lipschitz_k = 5.0;
  double ellipticity_nu = 1.0;  // >= 1; scalar sigma clamped to [nu^-1/2, nu^1/2]
  Vec base_drift = Vec::zero(2);
  double bump_intensity = 1.0;  // Poisson points per unit volume
  AmplitudeLaw amplitude_law = AmplitudeLaw::uniform_box;
  Vec amplitude_value = Vec::zero(2);  // constant law
  Vec amplitude_lo = Vec::zero(2);     // uniform_box bounds
  Vec amplitude_hi = Vec::zero(2);
  double amplitude_radius = 0;  // uniform_ball law
  SigmaMode sigma_mode = SigmaMode::identity;
  double sigma_amplitude = 0;   // scalar-field bump size (uniform symmetric)
  std::uint64_t master_seed = 1;

  double mean_cell_count() const;  // bump_intensity * range^d
  /// Hard truncation of per-cell Poisson counts; makes the field bounded
  /// pathwise while perturbing the law by a negligible (<1e-10) amount.
  int cell_count_cap() const;
  double amplitude_max_norm() const;
  /// Heuristic bound on the drift-field Lipschitz constant: amplitude cap
  /// times bump gradient bound times expected local bump count. Specs whose
  /// bound exceeds lipschitz_k are rejected by validation.
  double analytic_drift_lipschitz() const;
  double analytic_sigma_lipschitz() const;
  /// |base_drift| plus expected magnitude of the bump sum at a point; kept
  /// under 0.8 * drift_bound so the radial clip almost never engages.
  double expected_field_magnitude() const;
  /// Throws std::invalid_argument on a malformed spec.
  void check_valid() const;
  /// Collects human-readable problems instead of throwing.
  std::vector<std::string> validation_errors() const;
};

/// Sup of |phi'| for the mollifier bump phi(r) = exp(1 - 1/(1-r^2)).
double bump_gradient_bound();
double bump_profile(double r);  // phi(r), supported on [0,1)

/// One realization of the random environment. Queries are pure functions of
/// (spec, env_index, x): repeated evaluation is bit-identical, and fields
/// restricted to sets farther apart than `range` are built from disjoint
/// Poisson cells, hence independent.
class Environment {
 public:
  Environment(EnvironmentSpec spec, std::int64_t env_index);

  Vec drift(const Vec& x) const;
  double sigma_scalar(const Vec& x) const;
  /// Dense row-major d*d matrix view (always a scalar multiple of Id).
  std::vector<double> sigma_matrix(const Vec& x) const;

  const EnvironmentSpec& spec() const { return spec_; }
  std::int64_t index() const { return env_index_; }

  struct CellKey {
    std::array<std::int32_t, kMaxDim> c{};
    bool operator==(const CellKey&) const = default;
  };
  struct CellKeyHash {
    std::size_t operator()(const CellKey& k) const {
      std::uint64_t h = 0x243f6a8885a308d3ULL;
      for (auto v : k.c) h = mix64(h ^ static_cast<std::uint32_t>(v));
      return static_cast<std::size_t>(h);
    }
  };
  struct BumpPoint {
    Vec position;
    Vec mark;        // drift mark
    double smark;    // scalar-field mark
  };
  struct CellData {
    std::vector<BumpPoint> points;
  };

  /// Regenerates a cell's points from its counter-based stream.
  CellData generate_cell(const CellKey& key) const;
  CellKey cell_of(const Vec& x) const;

 private:
  EnvironmentSpec spec_;
  std::int64_t env_index_;
};

/// Memoizing wrapper for hot simulation loops. Not thread-safe; give each
/// worker its own view. Values agree bit-for-bit with Environment queries.
/// Besides the per-cell cache it memoizes the gathered 3^d neighborhood of
/// the last query cell, which serves almost every step of a slowly moving
/// trajectory.
class EnvView {
 public:
  explicit EnvView(const Environment& env) : env_(&env) {}
  Vec drift(const Vec& x);
  double sigma_scalar(const Vec& x);
  const Environment& environment() const { return *env_; }

 private:
  const std::vector<Environment::BumpPoint>& neighborhood(const Vec& x);
  const Environment::CellData& cell(const Environment::CellKey& key);
  const Environment* env_;
  std::unordered_map<Environment::CellKey, Environment::CellData,
                     Environment::CellKeyHash>
      cache_;
  Environment::CellKey memo_key_{};
  bool memo_valid_ = false;
  std::vector<Environment::BumpPoint> memo_points_;
};

struct SignSplitMoments {
  double mean_plus = 0, se_plus = 0;
  double mean_minus = 0, se_minus = 0;
  std::int64_t n_env = 0;
  double ratio() const;  // mean_plus / mean_minus; +inf when mean_minus == 0
};

/// Monte Carlo estimate of E[(b(0,.) . l)_+] and E[(b(0,.) . l)_-] over
/// independent environment realizations. Throws if l is not unit length.
SignSplitMoments sign_split_moments(const EnvironmentSpec& spec, const Vec& l,
                                    std::int64_t n_env,
                                    std::int64_t env_offset = 0);

}  // namespace rediff
