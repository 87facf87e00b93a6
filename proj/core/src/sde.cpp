#include "rediff/sde.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rediff/parallel.hpp"

namespace rediff {

int IntegratorConfig::steps_per_unit() const {
  return static_cast<int>(std::llround(1.0 / step));
}

std::vector<std::string> IntegratorConfig::validation_errors() const {
  std::vector<std::string> errs;
  if (!(step > 0)) {
    errs.push_back("integrator.step must be > 0");
    return errs;
  }
  const double inv = 1.0 / step;
  if (std::abs(inv - std::llround(inv)) > 1e-9 * inv)
    errs.push_back("integrator.step: 1/step must be an integer");
  if (step > 0.1) errs.push_back("integrator.step must be <= 0.1");
  if (!(max_time > 0)) errs.push_back("integrator.max_time must be > 0");
  return errs;
}

void IntegratorConfig::check_valid() const {
  const auto errs = validation_errors();
  if (!errs.empty()) throw std::invalid_argument(errs.front());
}

void Walker::step() {
  Vec xi(x_.dim());
  rng_.fill_gaussian(xi);
  step_with_noise(xi);
}

void Walker::step_with_noise(const Vec& xi) {
  prev_x_ = x_;
  const Vec b = view_->drift(x_);
  const double s = view_->sigma_scalar(x_);
  last_sigma_ = s;
  const double sq = s * std::sqrt(cfg_.step);
  for (int i = 0; i < x_.dim(); ++i) x_[i] += b[i] * cfg_.step + sq * xi[i];
  ++steps_;
}

bool bridge_crossed(double prev_proj, double cur_proj, double level,
                    double sigma, double h, Rng& rng) {
  const double d1 = level - prev_proj;
  const double d2 = level - cur_proj;
  if (d1 * d2 <= 0) return true;  // endpoints straddle: crossed for sure
  const double expo = -2.0 * d1 * d2 / (sigma * sigma * h);
  if (expo < -36.0) return false;  // crossing probability below 2e-16
  return rng.uniform() < std::exp(expo);
}

ExitRecord first_exit_slab(EnvView& view, const IntegratorConfig& cfg, Rng rng,
                           const Vec& x0, const Slab& slab) {
  ExitRecord rec;
  rec.position = x0;
  if (!slab.inside(x0)) {
    rec.status = ExitStatus::exited;
    const double p = x0.dot(slab.l);
    rec.side = p <= slab.lower() ? -1 : +1;
    return rec;
  }
  Walker w(view, cfg, std::move(rng), x0);
  const std::int64_t max_steps =
      static_cast<std::int64_t>(std::llround(cfg.max_time / cfg.step));
  const bool bridge = cfg.correction == BoundaryCorrection::bridge_test;
  while (w.steps_taken() < max_steps) {
    w.step();
    const double p = w.position().dot(slab.l);
    if (p <= slab.lower() || p >= slab.upper()) {
      rec.status = ExitStatus::exited;
      rec.side = p <= slab.lower() ? -1 : +1;
      rec.time = w.time();
      rec.position = w.position();
      rec.steps = w.steps_taken();
      return rec;
    }
    if (bridge) {
      const double prev = w.last_projection(slab.l);
      // test the nearer wall first; double sub-step crossings are negligible
      const double mid = 0.5 * (slab.lower() + slab.upper());
      const double first_level = 0.5 * (prev + p) < mid ? slab.lower() : slab.upper();
      const double second_level =
          first_level == slab.lower() ? slab.upper() : slab.lower();
      for (double level : {first_level, second_level}) {
        if (bridge_crossed(prev, p, level, w.last_sigma(), cfg.step, w.rng())) {
          rec.status = ExitStatus::exited;
          rec.side = level == slab.lower() ? -1 : +1;
          rec.time = w.time();
          rec.position = w.position();
          rec.bridge_detected = true;
          rec.steps = w.steps_taken();
          return rec;
        }
      }
    }
  }
  rec.status = ExitStatus::censored;
  rec.time = w.time();
  rec.position = w.position();
  rec.steps = w.steps_taken();
  return rec;
}

ExitRecord first_exit_region(EnvView& view, const IntegratorConfig& cfg, Rng rng,
                             const Vec& x0,
                             const std::function<bool(const Vec&)>& inside) {
  ExitRecord rec;
  rec.position = x0;
  if (!inside(x0)) {
    rec.status = ExitStatus::exited;
    return rec;
  }
  Walker w(view, cfg, std::move(rng), x0);
  const std::int64_t max_steps =
      static_cast<std::int64_t>(std::llround(cfg.max_time / cfg.step));
  while (w.steps_taken() < max_steps) {
    w.step();
    if (!inside(w.position())) {
      rec.status = ExitStatus::exited;
      rec.time = w.time();
      rec.position = w.position();
      rec.steps = w.steps_taken();
      return rec;
    }
  }
  rec.status = ExitStatus::censored;
  rec.time = w.time();
  rec.position = w.position();
  rec.steps = w.steps_taken();
  return rec;
}

ExitRecord half_space_entrance(EnvView& view, const IntegratorConfig& cfg,
                               Rng rng, const Vec& x0, const Vec& l,
                               double level, int side) {
  ExitRecord rec;
  rec.position = x0;
  rec.side = side;
  auto entered = [&](double p) { return side > 0 ? p >= level : p <= level; };
  if (entered(x0.dot(l))) {
    rec.status = ExitStatus::exited;
    return rec;
  }
  Walker w(view, cfg, std::move(rng), x0);
  const std::int64_t max_steps =
      static_cast<std::int64_t>(std::llround(cfg.max_time / cfg.step));
  const bool bridge = cfg.correction == BoundaryCorrection::bridge_test;
  while (w.steps_taken() < max_steps) {
    w.step();
    const double p = w.position().dot(l);
    if (entered(p) ||
        (bridge && bridge_crossed(w.last_projection(l), p, level, w.last_sigma(),
                                  cfg.step, w.rng()))) {
      rec.status = ExitStatus::exited;
      rec.time = w.time();
      rec.position = w.position();
      rec.bridge_detected = !entered(p);
      rec.steps = w.steps_taken();
      return rec;
    }
  }
  rec.status = ExitStatus::censored;
  rec.time = w.time();
  rec.position = w.position();
  rec.steps = w.steps_taken();
  return rec;
}

Path simulate_path(EnvView& view, const IntegratorConfig& cfg, Rng rng,
                   const Vec& x0, double total_time) {
  Path path;
  path.h = cfg.step;
  const std::int64_t n =
      static_cast<std::int64_t>(std::llround(total_time / cfg.step));
  path.pos.reserve(static_cast<std::size_t>(n + 1));
  path.pos.push_back(x0);
  Walker w(view, cfg, std::move(rng), x0);
  for (std::int64_t i = 0; i < n; ++i) {
    w.step();
    path.pos.push_back(w.position());
  }
  return path;
}

PathFunctionals path_functionals(const Path& path, const Vec& l, double R,
                                 bool bridge_correct, Rng* rng,
                                 const std::vector<double>* sigmas) {
  if (path.pos.empty())
    throw std::invalid_argument("path_functionals: empty trajectory");
  PathFunctionals f;
  f.running_max.reserve(path.pos.size());
  const double start = path.pos.front().dot(l);
  double m = start;
  for (std::size_t i = 0; i < path.pos.size(); ++i) {
    const double p = path.pos[i].dot(l);
    m = std::max(m, p);
    f.running_max.push_back(m);
    if (f.backtrack_time == kInf && i > 0) {
      bool crossed = p - start <= -R;
      if (!crossed && bridge_correct && rng != nullptr) {
        const double prev = path.pos[i - 1].dot(l);
        const double sigma = sigmas != nullptr ? (*sigmas)[i - 1] : 1.0;
        crossed = bridge_crossed(prev, p, start - R, sigma, path.h, *rng);
      }
      if (crossed) {
        f.backtrack_time = path.time_of(static_cast<int>(i));
        f.backtrack_rounded = std::ceil(f.backtrack_time - 1e-12);
      }
    }
  }
  return f;
}

std::vector<DisplacementTailRow> displacement_tail(
    const EnvironmentSpec& spec, const IntegratorConfig& cfg, double alpha,
    const std::vector<double>& Ls, std::int64_t n_traj, int workers) {
  if (Ls.empty())
    throw std::invalid_argument("displacement_tail: empty L ladder");
  std::vector<DisplacementTailRow> rows;
  const int d = spec.dimension;
  for (double L : Ls) {
    DisplacementTailRow row;
    row.L = L;
    row.horizon = alpha * L;
    row.threshold = L * L;
    row.n = n_traj;
    const double lam = L * L - alpha * spec.drift_bound * L;
    row.sub_gaussian_bound =
        lam <= 0 ? 1.0
                 : std::min(1.0, 2.0 * d *
                                     std::exp(-lam * lam /
                                              (2.0 * d * spec.ellipticity_nu *
                                               alpha * L)));
    const std::int64_t n_steps =
        static_cast<std::int64_t>(std::llround(row.horizon / cfg.step));
    std::vector<std::int64_t> chunk_hits(
        static_cast<std::size_t>((n_traj + 1023) / 1024), 0);
    parallel_chunks(n_traj, workers, 1024,
                    [&](std::int64_t chunk_id, std::int64_t lo, std::int64_t hi) {
                      std::int64_t hits = 0;
                      for (std::int64_t i = lo; i < hi; ++i) {
                        const Environment env(spec, i);
                        EnvView view(env);
                        Rng rng = make_stream(spec.master_seed, StreamTag::trajectory,
                                              static_cast<std::uint64_t>(i), 0);
                        Walker w(view, cfg, std::move(rng), Vec::zero(d));
                        const Vec x0 = Vec::zero(d);
                        bool hit = false;
                        for (std::int64_t s = 0; s < n_steps && !hit; ++s) {
                          w.step();
                          if (distance(w.position(), x0) >= row.threshold) hit = true;
                        }
                        if (hit) ++hits;
                      }
                      chunk_hits[static_cast<std::size_t>(chunk_id)] += hits;
                    });
    for (auto h : chunk_hits) row.hits += h;
    row.p_hat = n_traj > 0 ? static_cast<double>(row.hits) / n_traj : 0;
    row.se = n_traj > 0
                 ? std::sqrt(std::max(row.p_hat * (1 - row.p_hat), 1e-12) /
                             static_cast<double>(n_traj))
                 : 0;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace rediff
