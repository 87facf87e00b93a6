#include "rediff/ballistic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rediff/parallel.hpp"

namespace rediff {

SlabExitEstimate slab_exit_probability(const EnvironmentSpec& spec,
                                       const IntegratorConfig& cfg,
                                       const Slab& slab, std::int64_t n,
                                       std::int64_t env_offset, int workers,
                                       std::vector<ExitRecord>* capture,
                                       bool quenched) {
  if (n < 100)
    throw std::invalid_argument("slab_exit_probability: n must be >= 100");
  if (!is_unit(slab.l))
    throw std::invalid_argument("slab_exit_probability: slab direction must be unit");
  SlabExitEstimate est;
  est.slab = slab;
  est.n = n;
  if (capture) capture->assign(static_cast<std::size_t>(n), ExitRecord{});
  struct Counts {
    std::int64_t left = 0, right = 0, censored = 0;
  };
  const std::int64_t chunk = 512;
  std::vector<Counts> partial(static_cast<std::size_t>((n + chunk - 1) / chunk));
  parallel_chunks(n, workers, chunk,
                  [&](std::int64_t c, std::int64_t lo, std::int64_t hi) {
                    Counts& pc = partial[static_cast<std::size_t>(c)];
                    for (std::int64_t i = lo; i < hi; ++i) {
                      const Environment env(spec, quenched ? env_offset : env_offset + i);
                      EnvView view(env);
                      Rng rng = make_stream(spec.master_seed, StreamTag::trajectory,
                                            static_cast<std::uint64_t>(env_offset + i),
                                            1);
                      const ExitRecord rec = first_exit_slab(
                          view, cfg, std::move(rng), Vec::zero(spec.dimension), slab);
                      if (rec.status == ExitStatus::censored)
                        ++pc.censored;
                      else if (rec.side < 0)
                        ++pc.left;
                      else
                        ++pc.right;
                      if (capture) (*capture)[static_cast<std::size_t>(i)] = rec;
                    }
                  });
  for (const auto& pc : partial) {
    est.exit_left += pc.left;
    est.exit_right += pc.right;
    est.censored += pc.censored;
  }
  est.p_hat = static_cast<double>(est.exit_left) / static_cast<double>(n);
  est.ci = wilson_interval(est.exit_left, n);
  est.censor_warning = static_cast<double>(est.censored) > 0.05 * static_cast<double>(n);
  return est;
}

std::string to_string(DecayVerdict v) {
  switch (v) {
    case DecayVerdict::consistent: return "consistent";
    case DecayVerdict::not_consistent: return "not_consistent";
    case DecayVerdict::below_resolution: return "below_resolution";
    case DecayVerdict::insufficient: return "insufficient";
  }
  return "?";
}

DecayFit fit_condition_T(const std::vector<SlabExitEstimate>& ladder, double gamma) {
  DecayFit fit;
  fit.gamma = gamma;
  std::vector<double> xs, ys, vars;
  int zero_cells = 0;
  for (const auto& est : ladder) {
    if (est.n <= 0) continue;
    const double x = std::pow(est.slab.length, gamma);
    if (est.exit_left > 0) {
      const double p = static_cast<double>(est.exit_left) / static_cast<double>(est.n);
      xs.push_back(x);
      ys.push_back(std::log(p));
      vars.push_back((1.0 - p) / (static_cast<double>(est.n) * p));
    } else {
      ++zero_cells;
      const double ub = clopper_pearson_upper(0, est.n, 0.05);
      xs.push_back(x);
      ys.push_back(std::log(ub));
      vars.push_back(1.0);  // bound-only cell: weak weight
      ++fit.n_bound_points;
    }
  }
  fit.n_points = static_cast<int>(xs.size());
  if (zero_cells == static_cast<int>(ladder.size()) && zero_cells > 0) {
    fit.verdict = DecayVerdict::below_resolution;
    return fit;
  }
  if (fit.n_points < 3) {
    fit.verdict = DecayVerdict::insufficient;
    return fit;
  }
  const LineFit lf = weighted_line_fit(xs, ys, vars);
  if (!lf.ok) {
    fit.verdict = DecayVerdict::insufficient;
    return fit;
  }
  fit.slope = lf.slope;
  fit.slope_se = lf.slope_se;
  fit.slope_upper95 = lf.slope + 1.645 * lf.slope_se;
  fit.verdict = fit.slope_upper95 < 0 ? DecayVerdict::consistent
                                      : DecayVerdict::not_consistent;
  return fit;
}

std::vector<Vec> cone_directions(const Vec& l, double cone_half_angle, int n_dirs) {
  const int d = l.dim();
  std::vector<Vec> dirs{l};
  if (d == 1 || n_dirs <= 0 || cone_half_angle <= 0) return dirs;
  // orthonormal completion of l by Gram-Schmidt over the coordinate basis
  std::vector<Vec> basis;
  for (int axis = 0; axis < d && static_cast<int>(basis.size()) < d - 1; ++axis) {
    Vec v = Vec::basis(d, axis);
    v -= v.dot(l) * l;
    for (const auto& b : basis) v -= v.dot(b) * b;
    const double n = v.norm();
    if (n > 1e-9) basis.push_back(v * (1.0 / n));
  }
  const double c = std::cos(cone_half_angle), s = std::sin(cone_half_angle);
  if (d == 2) {
    dirs.push_back(c * l + s * basis[0]);
    dirs.push_back(c * l - s * basis[0]);
    for (int j = 3; j <= n_dirs; ++j)
      dirs.push_back(j % 2 ? c * l + s * basis[0] : c * l - s * basis[0]);
    dirs.resize(static_cast<std::size_t>(n_dirs) + 1);
    return dirs;
  }
  for (int j = 0; j < n_dirs; ++j) {
    const double psi = 2.0 * 3.14159265358979323846 * j / n_dirs;
    dirs.push_back(c * l + s * (std::cos(psi) * basis[0] + std::sin(psi) * basis[1]));
  }
  return dirs;
}

NeighborhoodReport neighborhood_T(const EnvironmentSpec& spec,
                                  const IntegratorConfig& cfg, const Vec& l,
                                  double gamma, double cone_half_angle,
                                  int n_dirs, double depth_ratio,
                                  const std::vector<double>& Ls,
                                  std::int64_t n_per_point, int workers,
                                  std::int64_t env_offset_base) {
  if (spec.dimension > 1 && n_dirs < 3)
    throw std::invalid_argument("neighborhood_T: n_dirs must be >= 3");
  NeighborhoodReport rep;
  std::int64_t env_offset = env_offset_base;
  for (const Vec& dir : cone_directions(l, cone_half_angle, n_dirs)) {
    DirectionFit df;
    df.direction = dir;
    for (double L : Ls) {
      Slab slab{dir, depth_ratio, L};
      df.ladder.push_back(
          slab_exit_probability(spec, cfg, slab, n_per_point, env_offset, workers));
      env_offset += n_per_point;  // fresh environments per ladder cell
    }
    df.fit = fit_condition_T(df.ladder, gamma);
    rep.directions.push_back(std::move(df));
  }
  rep.all_consistent =
      !rep.directions.empty() &&
      std::all_of(rep.directions.begin(), rep.directions.end(), [](const auto& d) {
        return d.fit.verdict == DecayVerdict::consistent;
      });
  return rep;
}

std::string to_string(TailVerdict v) {
  switch (v) {
    case TailVerdict::integrable: return "integrable";
    case TailVerdict::not_integrable: return "not_integrable";
    case TailVerdict::insufficient: return "insufficient";
  }
  return "?";
}

TailFit tau1_integrability(const std::vector<RegenerationRecord>& records,
                           double gamma, std::int64_t min_records) {
  TailFit fit;
  fit.gamma = gamma;
  std::vector<double> sups;
  for (const auto& r : records)
    if (r.k == 0 && !r.censored) sups.push_back(r.sup_displacement);
  fit.n = static_cast<std::int64_t>(sups.size());
  if (fit.n < min_records) {
    fit.verdict = TailVerdict::insufficient;
    fit.note = "uncensored first blocks: " + std::to_string(fit.n) + ", need " +
               std::to_string(min_records);
    return fit;
  }
  std::sort(sups.begin(), sups.end());
  const auto n = static_cast<double>(sups.size());
  // survival over the upper half of the sample, cut where fewer than 5 remain
  std::vector<double> xs, ys, vars;
  const int grid = 30;
  for (int g = 0; g < grid; ++g) {
    const double q = 0.5 + 0.5 * (g + 0.5) / grid;
    const auto idx = static_cast<std::size_t>(q * (n - 1));
    const double v = sups[idx];
    const auto above = static_cast<double>(
        sups.end() - std::upper_bound(sups.begin(), sups.end(), v));
    if (above < 5) break;
    const double s = above / n;
    fit.survival.push_back({v, s});
    xs.push_back(std::pow(v, gamma));
    ys.push_back(std::log(s));
    vars.push_back((1.0 - s) / (n * s));
  }
  if (xs.size() < 3 || xs.back() - xs.front() < 1e-12) {
    fit.verdict = TailVerdict::insufficient;
    fit.note = "degenerate sup-displacement spread";
    return fit;
  }
  const LineFit lf = weighted_line_fit(xs, ys, vars);
  if (!lf.ok) {
    fit.verdict = TailVerdict::insufficient;
    return fit;
  }
  fit.mu_hat = -lf.slope;
  fit.mu_se = lf.slope_se;
  // integrable when the decay rate is significantly positive
  fit.verdict = (fit.mu_hat - 1.645 * fit.mu_se) > 0 ? TailVerdict::integrable
                                                     : TailVerdict::not_integrable;
  return fit;
}

BlockStatistics block_statistics(const std::vector<RegenerationRecord>& records,
                                 const Vec& l) {
  BlockStatistics bs;
  const int d = l.dim();
  bs.mean_increment = Vec::zero(d);
  bs.velocity = Vec::zero(d);
  bs.velocity_se = Vec::zero(d);
  bs.v_hat = Vec::zero(d);
  std::vector<const RegenerationRecord*> blocks;
  for (const auto& r : records)
    if (r.k >= 1 && !r.censored) blocks.push_back(&r);
  bs.n_blocks = static_cast<std::int64_t>(blocks.size());
  if (bs.n_blocks < 2) return bs;

  RunningStat dur;
  std::vector<RunningStat> inc(static_cast<std::size_t>(d));
  for (const auto* r : blocks) {
    dur.add(static_cast<double>(r->block_duration));
    for (int i = 0; i < d; ++i) inc[static_cast<std::size_t>(i)].add(r->block_increment[i]);
  }
  bs.mean_duration = dur.mean();
  for (int i = 0; i < d; ++i) bs.mean_increment[i] = inc[static_cast<std::size_t>(i)].mean();
  bs.velocity = bs.mean_increment * (1.0 / bs.mean_duration);
  const double inorm = bs.mean_increment.norm();
  if (inorm > 0) bs.v_hat = bs.mean_increment * (1.0 / inorm);

  // ratio-estimator SEs and the block CLT covariance from centered residuals
  const auto nb = static_cast<double>(bs.n_blocks);
  std::vector<RunningStat> resid(static_cast<std::size_t>(d));
  std::vector<RunningStat> cov(static_cast<std::size_t>(d * d));
  RunningStat resid_l;
  for (const auto* r : blocks) {
    Vec e = r->block_increment - bs.velocity * static_cast<double>(r->block_duration);
    for (int i = 0; i < d; ++i) {
      resid[static_cast<std::size_t>(i)].add(e[i]);
      for (int j = 0; j < d; ++j)
        cov[static_cast<std::size_t>(i * d + j)].add(e[i] * e[j]);
    }
    resid_l.add(e.dot(l));
  }
  for (int i = 0; i < d; ++i)
    bs.velocity_se[i] =
        resid[static_cast<std::size_t>(i)].stddev() / (bs.mean_duration * std::sqrt(nb));
  bs.covariance.resize(static_cast<std::size_t>(d * d));
  bs.covariance_se.resize(static_cast<std::size_t>(d * d));
  for (int i = 0; i < d * d; ++i) {
    bs.covariance[static_cast<std::size_t>(i)] =
        cov[static_cast<std::size_t>(i)].mean() / bs.mean_duration;
    bs.covariance_se[static_cast<std::size_t>(i)] =
        cov[static_cast<std::size_t>(i)].standard_error() / bs.mean_duration;
  }
  bs.velocity_l = bs.velocity.dot(l);
  bs.velocity_l_se = resid_l.stddev() / (bs.mean_duration * std::sqrt(nb));
  bs.ok = true;
  return bs;
}

ConditionedVelocity conditioned_first_block_velocity(
    const std::vector<RegenerationRecord>& records, const Vec& l) {
  ConditionedVelocity cv;
  RunningStat dur, incl;
  std::vector<std::pair<double, double>> pairs;
  for (const auto& r : records)
    if (r.k == 0 && !r.censored && r.trajectory_d_infinite) {
      const double proj = r.block_increment.dot(l);
      dur.add(static_cast<double>(r.block_duration));
      incl.add(proj);
      pairs.push_back({proj, static_cast<double>(r.block_duration)});
    }
  cv.n = dur.count();
  if (cv.n < 2) return cv;
  cv.velocity_l = incl.mean() / dur.mean();
  RunningStat resid;
  for (auto& [a, b] : pairs) resid.add(a - cv.velocity_l * b);
  cv.velocity_l_se = resid.stddev() / (dur.mean() * std::sqrt(static_cast<double>(cv.n)));
  cv.ok = true;
  return cv;
}

DirectVelocity direct_velocity(const std::vector<Vec>& endpoints, double T) {
  DirectVelocity dv;
  dv.n = static_cast<std::int64_t>(endpoints.size());
  dv.T = T;
  if (endpoints.empty() || T <= 0) return dv;
  const int d = endpoints.front().dim();
  dv.velocity = Vec::zero(d);
  dv.velocity_se = Vec::zero(d);
  std::vector<RunningStat> comp(static_cast<std::size_t>(d));
  for (const auto& x : endpoints)
    for (int i = 0; i < d; ++i) comp[static_cast<std::size_t>(i)].add(x[i]);
  for (int i = 0; i < d; ++i) {
    dv.velocity[i] = comp[static_cast<std::size_t>(i)].mean() / T;
    dv.velocity_se[i] =
        comp[static_cast<std::size_t>(i)].standard_error() / T;
  }
  std::vector<RunningStat> cov(static_cast<std::size_t>(d * d));
  for (const auto& x : endpoints) {
    const Vec e = x - dv.velocity * T;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        cov[static_cast<std::size_t>(i * d + j)].add(e[i] * e[j] / T);
  }
  dv.covariance.resize(static_cast<std::size_t>(d * d));
  dv.covariance_se.resize(static_cast<std::size_t>(d * d));
  for (int i = 0; i < d * d; ++i) {
    dv.covariance[static_cast<std::size_t>(i)] = cov[static_cast<std::size_t>(i)].mean();
    dv.covariance_se[static_cast<std::size_t>(i)] =
        cov[static_cast<std::size_t>(i)].standard_error();
  }
  dv.ok = true;
  return dv;
}

std::vector<TauSurvivalRow> tau_survival_table(
    const std::vector<RegenerationRecord>& records, int n_points) {
  std::vector<double> taus;
  for (const auto& r : records)
    if (r.k == 0 && !r.censored) taus.push_back(static_cast<double>(r.block_duration));
  std::vector<TauSurvivalRow> rows;
  if (taus.size() < 2) return rows;
  std::sort(taus.begin(), taus.end());
  const double lo = std::max(1.0, taus.front());
  const double hi = taus.back();
  if (hi <= lo) return rows;
  for (int g = 0; g < n_points; ++g) {
    const double u = lo * std::pow(hi / lo, static_cast<double>(g) / (n_points - 1));
    const auto above = static_cast<std::int64_t>(
        taus.end() - std::upper_bound(taus.begin(), taus.end(), u));
    rows.push_back({u, static_cast<double>(above) / static_cast<double>(taus.size()),
                    above});
  }
  return rows;
}

}  // namespace rediff
