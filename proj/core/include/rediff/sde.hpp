#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "rediff/environment.hpp"
#include "rediff/rng.hpp"
#include "rediff/stats.hpp"
#include "rediff/vec.hpp"

namespace rediff {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class BoundaryCorrection { none, bridge_test };

struct IntegratorConfig {
  double step = 0.01;  // 1/step must be an integer so unit times sit on the grid
  BoundaryCorrection correction = BoundaryCorrection::bridge_test;
  double max_time = 1000;

  int steps_per_unit() const;
  std::vector<std::string> validation_errors() const;
  void check_valid() const;
};

/// Slab {x : -depth_ratio*length < x.l < length}; "left" exit means x.l <= -depth_ratio*length.
struct Slab {
  Vec l;
  double depth_ratio = 1.0;
  double length = 1.0;
  double lower() const { return -depth_ratio * length; }
  double upper() const { return length; }
  bool inside(const Vec& x) const {
    const double p = x.dot(l);
    return p > lower() && p < upper();
  }
};

struct BallRegion {
  Vec center;
  double radius = 1.0;
  bool inside(const Vec& x) const { return distance(x, center) < radius; }
};

struct BoxRegion {
  Vec center;
  Vec half;
  bool inside(const Vec& x) const {
    for (int i = 0; i < x.dim(); ++i)
      if (std::abs(x[i] - center[i]) >= half[i]) return false;
    return true;
  }
};

enum class ExitStatus { exited, censored };

struct ExitRecord {
  ExitStatus status = ExitStatus::censored;
  double time = 0;
  Vec position;
  int side = 0;  // slabs/half-spaces: -1 = lower/left, +1 = upper/right
  bool bridge_detected = false;
  std::int64_t steps = 0;
};

/// Euler-Maruyama walker for the quenched diffusion of one environment.
class Walker {
 public:
  Walker(EnvView& view, const IntegratorConfig& cfg, Rng rng, Vec x0)
      : view_(&view), cfg_(cfg), rng_(std::move(rng)), x_(std::move(x0)) {}

  void step();
  /// Euler update with the Gaussian vector supplied by the caller.
  void step_with_noise(const Vec& xi);
  const Vec& position() const { return x_; }
  double time() const { return static_cast<double>(steps_) * cfg_.step; }
  std::int64_t steps_taken() const { return steps_; }
  Rng& rng() { return rng_; }
  /// Start-of-step scalar sigma at current position (set by step()).
  double last_sigma() const { return last_sigma_; }
  double last_projection(const Vec& l) const { return prev_x_.dot(l); }
  const Vec& previous_position() const { return prev_x_; }

 private:
  EnvView* view_;
  IntegratorConfig cfg_;
  Rng rng_;
  Vec x_;
  Vec prev_x_;
  double last_sigma_ = 1.0;
  std::int64_t steps_ = 0;
};

/// Brownian-bridge crossing test for a hyperplane x.l = level between two
/// same-side positions; returns true when the continuous bridge would have
/// crossed even though the grid endpoints did not.
bool bridge_crossed(double prev_proj, double cur_proj, double level,
                    double sigma, double h, Rng& rng);

ExitRecord first_exit_slab(EnvView& view, const IntegratorConfig& cfg, Rng rng,
                           const Vec& x0, const Slab& slab);

/// Grid-detected exit from an arbitrary region predicate (balls, boxes).
ExitRecord first_exit_region(EnvView& view, const IntegratorConfig& cfg, Rng rng,
                             const Vec& x0,
                             const std::function<bool(const Vec&)>& inside);

/// Entrance time of the half-space {x.l >= level} (side=+1) or {x.l <= level}
/// (side=-1), bridge-corrected when enabled.
ExitRecord half_space_entrance(EnvView& view, const IntegratorConfig& cfg,
                               Rng rng, const Vec& x0, const Vec& l,
                               double level, int side);

/// A discretely sampled trajectory on the h-grid.
struct Path {
  double h = 0.01;
  std::vector<Vec> pos;  // pos[0] = start
  int steps() const { return static_cast<int>(pos.size()) - 1; }
  double time_of(int i) const { return i * h; }
  const Vec& front() const { return pos.front(); }
  const Vec& back() const { return pos.back(); }
};

Path simulate_path(EnvView& view, const IntegratorConfig& cfg, Rng rng,
                   const Vec& x0, double total_time);

struct PathFunctionals {
  std::vector<double> running_max;  // M(t_i) of the l-projection
  double backtrack_time = kInf;     // J: first grid time with drop <= -R
  double backtrack_rounded = kInf;  // D = ceil(J)
};

PathFunctionals path_functionals(const Path& path, const Vec& l, double R,
                                 bool bridge_correct = false, Rng* rng = nullptr,
                                 const std::vector<double>* sigmas = nullptr);

struct DisplacementTailRow {
  double L = 0;
  double horizon = 0;     // alpha * L
  double threshold = 0;   // L^2
  std::int64_t n = 0;
  std::int64_t hits = 0;
  double p_hat = 0;
  double se = 0;
  double sub_gaussian_bound = 0;  // 2d exp(-(L^2-alpha*b_bar*L)^2/(2 d nu alpha L))
};

/// Tail of the running displacement sup_{s<=alpha L}|X_s - X_0| >= L^2,
/// estimated annealed (fresh environment per trajectory).
std::vector<DisplacementTailRow> displacement_tail(
    const EnvironmentSpec& spec, const IntegratorConfig& cfg, double alpha,
    const std::vector<double>& Ls, std::int64_t n_traj, int workers = 1);

}  // namespace rediff
