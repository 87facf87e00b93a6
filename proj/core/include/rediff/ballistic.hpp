#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rediff/regeneration.hpp"
#include "rediff/sde.hpp"

namespace rediff {

struct SlabExitEstimate {
  Slab slab;
  std::int64_t n = 0;
  std::int64_t exit_left = 0;
  std::int64_t exit_right = 0;
  std::int64_t censored = 0;
  double p_hat = 0;  // exit-left frequency over all n (censoring reported apart)
  Interval ci;       // Wilson 95%
  bool censor_warning = false;  // censored > 5% of n
};

/// Exit-left probability of the slab, started at 0. Annealed mode draws a
/// fresh environment per trajectory (env_index = env_offset + index); the
/// quenched mode keeps env_index = env_offset for every trajectory.
/// `capture`, when non-null, receives the per-trajectory exit records.
SlabExitEstimate slab_exit_probability(const EnvironmentSpec& spec,
                                       const IntegratorConfig& cfg,
                                       const Slab& slab, std::int64_t n,
                                       std::int64_t env_offset = 0,
                                       int workers = 1,
                                       std::vector<ExitRecord>* capture = nullptr,
                                       bool quenched = false);

enum class DecayVerdict { consistent, not_consistent, below_resolution, insufficient };

std::string to_string(DecayVerdict v);

/// Weighted least-squares fit of log p_L against L^gamma. Zero-count cells
/// enter through their one-sided binomial upper bounds (weak weights); the
/// verdict is "consistent" when the one-sided 95% upper bound of the slope is
/// negative.
struct DecayFit {
  double gamma = 1;
  double slope = 0;
  double slope_se = 0;
  double slope_upper95 = 0;
  int n_points = 0;
  int n_bound_points = 0;  // ladder cells that contributed only an upper bound
  DecayVerdict verdict = DecayVerdict::insufficient;
};

DecayFit fit_condition_T(const std::vector<SlabExitEstimate>& ladder, double gamma);

struct DirectionFit {
  Vec direction;
  DecayFit fit;
  std::vector<SlabExitEstimate> ladder;
};

struct NeighborhoodReport {
  std::vector<DirectionFit> directions;
  bool all_consistent = false;
};

/// Repeats the ladder fit for directions on the boundary of a cone around l;
/// in d=1 the neighborhood degenerates to {l} itself.
NeighborhoodReport neighborhood_T(const EnvironmentSpec& spec,
                                  const IntegratorConfig& cfg, const Vec& l,
                                  double gamma, double cone_half_angle,
                                  int n_dirs, double depth_ratio,
                                  const std::vector<double>& Ls,
                                  std::int64_t n_per_point, int workers = 1,
                                  std::int64_t env_offset_base = 0);

/// Unit vectors at angle `cone_half_angle` from l (plus l itself first).
std::vector<Vec> cone_directions(const Vec& l, double cone_half_angle, int n_dirs);

enum class TailVerdict { integrable, not_integrable, insufficient };

std::string to_string(TailVerdict v);

/// Stretched-exponential fit of the survival of sup-displacement over the
/// first renewal block: log S(v) against v^gamma; mu_hat = -slope.
struct TailFit {
  TailVerdict verdict = TailVerdict::insufficient;
  double gamma = 1;
  double mu_hat = 0;
  double mu_se = 0;
  std::int64_t n = 0;
  std::string note;
  std::vector<std::pair<double, double>> survival;  // (v, S(v)) table
};

TailFit tau1_integrability(const std::vector<RegenerationRecord>& records,
                           double gamma, std::int64_t min_records = 200);

/// Renewal-block estimators: velocity as a ratio estimator, asymptotic
/// direction, and the block CLT covariance Cov(dX - v dtau)/E[dtau].
struct BlockStatistics {
  std::int64_t n_blocks = 0;
  Vec mean_increment;
  double mean_duration = 0;
  Vec velocity;
  Vec velocity_se;
  Vec v_hat;
  double velocity_l = 0, velocity_l_se = 0;
  std::vector<double> covariance;     // d*d row-major
  std::vector<double> covariance_se;  // entrywise
  bool ok = false;
};

BlockStatistics block_statistics(const std::vector<RegenerationRecord>& records,
                                 const Vec& l);

/// First-block conditional estimator E[X_tau1 . l | no backtrack]/E[tau1 | no
/// backtrack]; agrees with the block velocity under the renewal structure.
struct ConditionedVelocity {
  std::int64_t n = 0;
  double velocity_l = 0;
  double velocity_l_se = 0;
  bool ok = false;
};

ConditionedVelocity conditioned_first_block_velocity(
    const std::vector<RegenerationRecord>& records, const Vec& l);

struct DirectVelocity {
  std::int64_t n = 0;
  double T = 0;
  Vec velocity;
  Vec velocity_se;
  std::vector<double> covariance;     // Cov(X_T - vT)/T
  std::vector<double> covariance_se;
  bool ok = false;
};

DirectVelocity direct_velocity(const std::vector<Vec>& endpoints, double T);

struct TauSurvivalRow {
  double u = 0;
  double survival = 0;
  std::int64_t at_risk = 0;
};

/// Survival table of the first regeneration time on a log-spaced grid.
std::vector<TauSurvivalRow> tau_survival_table(
    const std::vector<RegenerationRecord>& records, int n_points = 24);

}  // namespace rediff
