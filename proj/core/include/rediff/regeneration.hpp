#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rediff/sde.hpp"

namespace rediff {

/// Coupling of the diffusion with an auxiliary Bernoulli coin per unit time.
/// On success the unit segment stays inside the ball U^x = B_{6R}(x + 5R l)
/// and lands uniformly on B^x = B_R(x + 9R l); on failure the segment follows
/// the plain quenched dynamics. The failure branch approximates the exact
/// complementary kernel, which has no tractable closed form; the induced bias
/// is O(success_p) and is measured by the renewal test suite.
struct CouplingConfig {
  Vec l;
  double success_p = 0.05;
  enum class Mode { geometric_bridge, weighted_bridge } mode = Mode::geometric_bridge;
  int bridge_max_rejects = 64;

  std::vector<std::string> validation_errors() const;
  void check_valid() const;
};

struct SegmentOutcome {
  int lambda = 0;
  bool failed = false;  // bridge rejections exhausted; discard the trajectory
  int rejects = 0;
  double log_weight = 0;  // importance log-weight diagnostic (weighted_bridge)
};

/// Simulates one unit of time from `from`, drawing the coin from `rng` and
/// appending steps_per_unit() new grid positions to `out`.
SegmentOutcome coupled_unit_segment(EnvView& view, const IntegratorConfig& icfg,
                                    const CouplingConfig& cfg, Rng& rng,
                                    const Vec& from, std::vector<Vec>& out);

struct CoupledPath {
  Path path;
  std::vector<std::uint8_t> lambdas;  // coin at each integer time 0..horizon-1
  bool failed = false;
  std::int64_t failed_segment = -1;
  double total_log_weight = 0;
  std::int64_t bridge_rejects = 0;
};

/// Simulates the coupled chain for `horizon_units` units of time. Each unit
/// segment draws from its own counter-based stream, so the chain is
/// reproducible for any scheduling and extending the horizon preserves the
/// prefix.
CoupledPath simulate_coupled_chain(EnvView& view, const IntegratorConfig& icfg,
                                   const CouplingConfig& cfg,
                                   std::uint64_t master_seed,
                                   std::int64_t env_index,
                                   std::int64_t traj_index, const Vec& x0,
                                   std::int64_t horizon_units);

/// One renewal block: from regeneration time tau_k to tau_{k+1}.
struct RegenerationRecord {
  std::int64_t trajectory = 0;
  int k = 0;
  std::int64_t tau = 0;  // block start, an integer time
  Vec x_tau;
  Vec block_increment;    // X_{tau_{k+1}} - X_{tau_k}
  double increment_l = 0; // projection of the increment on l
  std::int64_t block_duration = 0;
  double sup_displacement = 0;  // sup over the block of |X_t - X_{tau_k}|
  bool censored = false;
  bool partial = false;  // trailing stub cut by the horizon, not a real block
  bool trajectory_d_infinite = false;  // no drop of R below X_0 seen at all
};

struct ScanResult {
  std::vector<RegenerationRecord> records;
  std::int64_t n_candidates = 0;  // fresh-maximum integer times examined
  std::int64_t n_coin_hits = 0;
  std::int64_t n_taus = 0;
  double first_tau = kInf;
  bool first_tau_confirmed = false;  // confirm window fits before the horizon
  double initial_backtrack_time = kInf;  // J measured from time 0
  bool d_infinite = false;
};

/// Extracts the regeneration hierarchy from a realized (path, coins) pair:
/// climb-by-a fresh-maximum candidates, oscillation check on the rounding
/// interval, coin gating, then the no-backtrack requirement. A regeneration is
/// declared when no backtrack of depth R occurs before the horizon; blocks
/// whose right endpoint is closer than confirm_window to the horizon are
/// flagged censored since their no-backtrack verification is weak.
ScanResult regeneration_scan(const Path& path,
                             const std::vector<std::uint8_t>& lambdas,
                             const Vec& l, double R, double confirm_window,
                             std::int64_t trajectory_id = 0);

struct RenewalTestOptions {
  int min_blocks = 200;
  int n_permutations = 1000;
  std::uint64_t seed = 1;
};

struct RenewalReport {
  bool refused = false;
  std::string refusal_reason;
  std::int64_t n_uncensored = 0, n_k1 = 0, n_k2 = 0, n_z0 = 0;
  KsResult ks_duration;      // block duration, k=1 vs k=2
  KsResult ks_increment;     // increment projection, k=1 vs k=2
  PermTestResult lag1;       // successive-block duration dependence
  KsResult ks_z0_duration;   // pooled k>=1 vs first block given no backtrack
  bool z0_compared = false;
};

/// Distributional checks of the renewal structure on emitted blocks.
RenewalReport renewal_tests(const std::vector<RegenerationRecord>& records,
                            const RenewalTestOptions& opts);

}  // namespace rediff
