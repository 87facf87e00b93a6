#include "rediff/regeneration.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace rediff {

std::vector<std::string> CouplingConfig::validation_errors() const {
  std::vector<std::string> errs;
  if (!(success_p > 0 && success_p < 1))
    errs.push_back("coupling.success_p must lie in (0,1)");
  if (l.dim() < 1) errs.push_back("coupling.direction must be set");
  if (l.dim() >= 1 && !is_unit(l))
    errs.push_back("coupling.direction must be a unit vector (tol 1e-12)");
  if (bridge_max_rejects < 1)
    errs.push_back("coupling.bridge_max_rejects must be >= 1");
  return errs;
}

void CouplingConfig::check_valid() const {
  const auto errs = validation_errors();
  if (!errs.empty()) throw std::invalid_argument(errs.front());
}

namespace {

double gaussian_log_density(const Vec& delta, const Vec& mean, double var) {
  const int d = delta.dim();
  double q = 0;
  for (int i = 0; i < d; ++i) {
    const double z = delta[i] - mean[i];
    q += z * z;
  }
  return -0.5 * (d * std::log(6.283185307179586 * var) + q / var);
}

}  // namespace

SegmentOutcome coupled_unit_segment(EnvView& view, const IntegratorConfig& icfg,
                                    const CouplingConfig& cfg, Rng& rng,
                                    const Vec& from, std::vector<Vec>& out) {
  SegmentOutcome res;
  const double R = view.environment().spec().range;
  const double h = icfg.step;
  const int spu = icfg.steps_per_unit();
  res.lambda = rng.uniform() < cfg.success_p ? 1 : 0;

  if (res.lambda == 0) {
    Vec z = from;
    for (int s = 0; s < spu; ++s) {
      const Vec b = view.drift(z);
      const double sd = view.sigma_scalar(z) * std::sqrt(h);
      for (int i = 0; i < z.dim(); ++i) z[i] += b[i] * h + sd * rng.gaussian();
      out.push_back(z);
    }
    return res;
  }

  const Vec stay_center = from + 5.0 * R * cfg.l;  // segment must stay in B_{6R}
  const Vec land_center = from + 9.0 * R * cfg.l;  // endpoint uniform on B_R
  const Vec target = rng.uniform_in_ball(land_center, R);

  // Guided bridge pinned at the target. The endpoint is kept across path
  // rejections so its law stays exactly uniform; only the bridge path is
  // resampled when it leaves the containment ball.
  const std::size_t base = out.size();
  for (int attempt = 0; attempt < cfg.bridge_max_rejects; ++attempt) {
    out.resize(base);
    Vec z = from;
    bool contained = true;
    double log_weight = 0;
    for (int s = 0; s < spu; ++s) {
      if (s == spu - 1) {
        z = target;
      } else {
        const double tau = 1.0 - s * h;  // remaining bridge time
        const double frac = h / tau;
        const double damp = h * (tau - h) / tau;
        const Vec b = view.drift(z);
        const double sigma = view.sigma_scalar(z);
        const double sd = sigma * std::sqrt(damp);
        Vec mean_step = (target - z) * frac + b * damp;
        Vec zn = z;
        for (int i = 0; i < z.dim(); ++i)
          zn[i] += mean_step[i] + sd * rng.gaussian();
        if (cfg.mode == CouplingConfig::Mode::weighted_bridge) {
          const Vec delta = zn - z;
          log_weight += gaussian_log_density(delta, b * h, sigma * sigma * h) -
                        gaussian_log_density(delta, mean_step, sd * sd);
        }
        z = zn;
      }
      if (distance(z, stay_center) >= 6.0 * R) {
        contained = false;
        break;
      }
      out.push_back(z);
    }
    if (contained) {
      // the pinned final step has a degenerate proposal; its weight term is
      // omitted from the diagnostic
      res.log_weight = log_weight;
      res.rejects = attempt;
      return res;
    }
  }
  out.resize(base);
  res.failed = true;
  res.rejects = cfg.bridge_max_rejects;
  return res;
}

CoupledPath simulate_coupled_chain(EnvView& view, const IntegratorConfig& icfg,
                                   const CouplingConfig& cfg,
                                   std::uint64_t master_seed,
                                   std::int64_t env_index,
                                   std::int64_t traj_index, const Vec& x0,
                                   std::int64_t horizon_units) {
  CoupledPath cp;
  cp.path.h = icfg.step;
  const int spu = icfg.steps_per_unit();
  cp.path.pos.reserve(static_cast<std::size_t>(horizon_units * spu + 1));
  cp.path.pos.push_back(x0);
  cp.lambdas.reserve(static_cast<std::size_t>(horizon_units));
  for (std::int64_t m = 0; m < horizon_units; ++m) {
    Rng seg = make_stream(master_seed, StreamTag::segment,
                          static_cast<std::uint64_t>(env_index),
                          static_cast<std::uint64_t>(traj_index),
                          static_cast<std::uint64_t>(m));
    const SegmentOutcome so =
        coupled_unit_segment(view, icfg, cfg, seg, cp.path.pos.back(), cp.path.pos);
    cp.lambdas.push_back(static_cast<std::uint8_t>(so.lambda));
    cp.total_log_weight += so.log_weight;
    cp.bridge_rejects += so.rejects;
    if (so.failed) {
      cp.failed = true;
      cp.failed_segment = m;
      break;
    }
  }
  return cp;
}

namespace {

struct Projection {
  std::vector<double> p;
  int spu;
  std::int64_t last_index() const { return static_cast<std::int64_t>(p.size()) - 1; }

  std::int64_t first_cross_at_or_above(std::int64_t from, double level) const {
    for (std::int64_t j = from; j <= last_index(); ++j)
      if (p[static_cast<std::size_t>(j)] >= level) return j;
    return -1;
  }
  std::int64_t first_drop_below(std::int64_t from, double level) const {
    for (std::int64_t j = from; j <= last_index(); ++j)
      if (p[static_cast<std::size_t>(j)] <= level) return j;
    return -1;
  }
  double max_over(std::int64_t lo, std::int64_t hi) const {
    double m = -kInf;
    for (std::int64_t j = lo; j <= hi; ++j)
      m = std::max(m, p[static_cast<std::size_t>(j)]);
    return m;
  }
};

}  // namespace

ScanResult regeneration_scan(const Path& path,
                             const std::vector<std::uint8_t>& lambdas,
                             const Vec& l, double R, double confirm_window,
                             std::int64_t trajectory_id) {
  ScanResult res;
  const int spu = static_cast<int>(std::llround(1.0 / path.h));
  const std::int64_t horizon = static_cast<std::int64_t>(lambdas.size());
  const std::int64_t n_idx = static_cast<std::int64_t>(path.pos.size()) - 1;
  if (n_idx < 0) return res;

  Projection proj;
  proj.spu = spu;
  proj.p.resize(path.pos.size());
  for (std::size_t i = 0; i < path.pos.size(); ++i) proj.p[i] = path.pos[i].dot(l);

  {
    const std::int64_t j0 = proj.first_drop_below(1, proj.p[0] - R);
    res.d_infinite = j0 < 0;
    res.initial_backtrack_time = j0 < 0 ? kInf : static_cast<double>(j0) * path.h;
  }

  // one fresh-maximum candidate: first climb of `a` above the origin's value,
  // iterated with climbs of R above the running maximum until the rounding
  // interval oscillates by less than R/2
  auto find_candidate = [&](std::int64_t origin_idx, double a) -> std::int64_t {
    double level = proj.p[static_cast<std::size_t>(origin_idx)] + a;
    std::int64_t from = origin_idx;
    for (;;) {
      const std::int64_t j = proj.first_cross_at_or_above(from, level);
      if (j < 0) return -1;
      const std::int64_t cv = ((j + spu - 1) / spu) * spu;  // ceil to unit grid
      if (cv > n_idx) return -1;
      const std::int64_t m = cv / spu;
      if (m > horizon - 1) return -1;  // needs a coin and a following segment
      double osc = 0;
      for (std::int64_t i = j; i <= cv; ++i)
        osc = std::max(osc, std::abs(proj.p[static_cast<std::size_t>(i)] -
                                     proj.p[static_cast<std::size_t>(j)]));
      if (osc < 0.5 * R) return m;
      level = proj.max_over(origin_idx, cv) + R;
      from = cv;
    }
  };

  // candidate sequence gated by the coins
  auto find_coin_candidate = [&](std::int64_t origin_idx, double a) -> std::int64_t {
    std::int64_t m = find_candidate(origin_idx, a);
    for (;;) {
      if (m < 0) return -1;
      ++res.n_candidates;
      if (lambdas[static_cast<std::size_t>(m)] == 1) {
        ++res.n_coin_hits;
        return m;
      }
      m = find_candidate(m * spu, 3.0 * R);
    }
  };

  std::vector<std::int64_t> taus;  // integer times
  std::int64_t origin_idx = 0;
  for (;;) {
    double a = 3.0 * R;
    std::int64_t cur_idx = origin_idx;
    std::int64_t tau = -1;
    for (;;) {
      const std::int64_t n1 = find_coin_candidate(cur_idx, a);
      if (n1 < 0) break;
      const std::int64_t s = n1 + 1;  // integer time of the post-coin position
      const std::int64_t s_idx = s * spu;
      if (s_idx > n_idx) break;
      const std::int64_t jd = proj.first_drop_below(
          s_idx + 1, proj.p[static_cast<std::size_t>(s_idx)] - R);
      if (jd < 0) {
        tau = s;  // no backtrack before the horizon
        break;
      }
      const std::int64_t d_units = (jd - s_idx + spu - 1) / spu;  // ceil in units
      const std::int64_t r_idx = s_idx + d_units * spu;
      if (r_idx >= n_idx) break;  // ran out of path mid-iteration
      a = proj.max_over(origin_idx, r_idx) -
          proj.p[static_cast<std::size_t>(r_idx)] + R;
      cur_idx = r_idx;
    }
    if (tau < 0) break;
    taus.push_back(tau);
    origin_idx = tau * spu;
    if (origin_idx >= n_idx) break;
  }

  res.n_taus = static_cast<std::int64_t>(taus.size());
  if (!taus.empty()) {
    res.first_tau = static_cast<double>(taus.front());
    res.first_tau_confirmed =
        static_cast<double>(horizon - taus.front()) >= confirm_window;
  }

  auto make_record = [&](int k, std::int64_t t0, std::int64_t t1, bool censored,
                         bool partial = false) {
    RegenerationRecord rec;
    rec.trajectory = trajectory_id;
    rec.k = k;
    rec.tau = t0;
    const std::int64_t i0 = t0 * spu;
    const std::int64_t i1 = t1 * spu;
    rec.x_tau = path.pos[static_cast<std::size_t>(i0)];
    rec.block_increment =
        path.pos[static_cast<std::size_t>(i1)] - rec.x_tau;
    rec.increment_l = rec.block_increment.dot(l);
    rec.block_duration = t1 - t0;
    double sup = 0;
    for (std::int64_t i = i0; i <= i1; ++i)
      sup = std::max(sup, distance(path.pos[static_cast<std::size_t>(i)], rec.x_tau));
    rec.sup_displacement = sup;
    rec.censored = censored;
    rec.partial = partial;
    rec.trajectory_d_infinite = res.d_infinite;
    res.records.push_back(std::move(rec));
  };

  std::int64_t prev = 0;
  for (std::size_t k = 0; k < taus.size(); ++k) {
    const bool weak_tail =
        static_cast<double>(horizon - taus[k]) < confirm_window;
    make_record(static_cast<int>(k), prev, taus[k], weak_tail);
    prev = taus[k];
  }
  if (!taus.empty() && prev < horizon) {
    // trailing incomplete block: always censored
    make_record(static_cast<int>(taus.size()), prev, horizon, true, true);
  }
  return res;
}

RenewalReport renewal_tests(const std::vector<RegenerationRecord>& records,
                            const RenewalTestOptions& opts) {
  RenewalReport rep;
  std::vector<double> dur_k1, dur_k2, inc_k1, inc_k2, dur_pool, z0_dur;
  std::map<std::int64_t, std::vector<std::pair<int, double>>> by_traj;
  for (const auto& r : records) {
    if (r.censored) continue;
    if (r.k >= 1) {
      ++rep.n_uncensored;
      dur_pool.push_back(static_cast<double>(r.block_duration));
      by_traj[r.trajectory].push_back({r.k, static_cast<double>(r.block_duration)});
      if (r.k == 1) {
        dur_k1.push_back(static_cast<double>(r.block_duration));
        inc_k1.push_back(r.increment_l);
      } else if (r.k == 2) {
        dur_k2.push_back(static_cast<double>(r.block_duration));
        inc_k2.push_back(r.increment_l);
      }
    } else if (r.trajectory_d_infinite) {
      z0_dur.push_back(static_cast<double>(r.block_duration));
    }
  }
  rep.n_k1 = static_cast<std::int64_t>(dur_k1.size());
  rep.n_k2 = static_cast<std::int64_t>(dur_k2.size());
  rep.n_z0 = static_cast<std::int64_t>(z0_dur.size());
  if (rep.n_uncensored < opts.min_blocks) {
    rep.refused = true;
    rep.refusal_reason = "insufficient uncensored blocks with k >= 1: have " +
                         std::to_string(rep.n_uncensored) + ", need " +
                         std::to_string(opts.min_blocks);
    return rep;
  }
  rep.ks_duration = ks_two_sample(dur_k1, dur_k2);
  rep.ks_increment = ks_two_sample(inc_k1, inc_k2);

  // lag-1 dependence across successive blocks inside each trajectory. The
  // permutation null shuffles durations WITHIN each uncensored run: with a
  // fixed horizon, trajectories with short blocks contribute more pairs, so a
  // global shuffle would see that length bias as spurious positive
  // correlation; within-run exchangeability conditions it away.
  std::vector<std::vector<double>> runs;
  for (auto& [traj, blocks] : by_traj) {
    std::sort(blocks.begin(), blocks.end());
    std::vector<double> run;
    int prev_k = -10;
    for (auto& [k, dur] : blocks) {
      if (k != prev_k + 1 && !run.empty()) {
        if (run.size() >= 2) runs.push_back(run);
        run.clear();
      }
      run.push_back(dur);
      prev_k = k;
    }
    if (run.size() >= 2) runs.push_back(run);
  }
  auto pair_corr = [&](const std::vector<std::vector<double>>& rs) {
    std::vector<double> xs, ys;
    for (const auto& r : rs)
      for (std::size_t i = 0; i + 1 < r.size(); ++i) {
        xs.push_back(r[i]);
        ys.push_back(r[i + 1]);
      }
    return std::abs(pearson_correlation(xs, ys));
  };
  if (!runs.empty()) {
    rep.lag1.statistic = pair_corr(runs);
    rep.lag1.n_permutations = opts.n_permutations;
    Rng rng(opts.seed, {static_cast<std::uint64_t>(StreamTag::permutation), 0x1a91});
    std::vector<std::vector<double>> perm = runs;
    int ge = 0;
    for (int p = 0; p < opts.n_permutations; ++p) {
      for (auto& r : perm) shuffle(r, rng);
      if (pair_corr(perm) >= rep.lag1.statistic) ++ge;
    }
    rep.lag1.p_value = (1.0 + ge) / (1.0 + opts.n_permutations);
  }

  if (!z0_dur.empty()) {
    rep.ks_z0_duration = ks_two_sample(dur_pool, z0_dur);
    rep.z0_compared = true;
  }
  return rep;
}

}  // namespace rediff
