#include "rediff/kalikow.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

#include "rediff/parallel.hpp"

namespace rediff {

Domain Domain::ball(double r) {
  Domain d;
  d.shape = DomainShape::ball;
  d.radius = r;
  return d;
}

Domain Domain::box(const Vec& half) {
  Domain d;
  d.shape = DomainShape::box;
  d.half = half;
  return d;
}

Domain Domain::slab_caps(const Vec& l, double lower, double upper, double cap) {
  Domain d;
  d.shape = DomainShape::slab_with_caps;
  d.l = l;
  d.lower = lower;
  d.upper = upper;
  d.cap = cap;
  return d;
}

bool Domain::contains(const Vec& x) const { return boundary_margin(x) > 0; }

double Domain::boundary_margin(const Vec& x) const {
  switch (shape) {
    case DomainShape::ball:
      return radius - x.norm();
    case DomainShape::box: {
      double m = kInf;
      for (int i = 0; i < x.dim(); ++i)
        m = std::min(m, half[i] - std::abs(x[i]));
      return m;
    }
    case DomainShape::slab_with_caps: {
      const double p = x.dot(l);
      double m = std::min(upper - p, p - lower);
      const double t = project_orthogonal(x, l).norm();
      return std::min(m, cap - t);
    }
  }
  return -kInf;
}

double Domain::bounding_radius() const {
  switch (shape) {
    case DomainShape::ball:
      return radius;
    case DomainShape::box:
      return half.norm();
    case DomainShape::slab_with_caps:
      return std::sqrt(std::max(upper * upper, lower * lower) + cap * cap);
  }
  return 0;
}

std::string Domain::describe() const {
  char buf[128];
  switch (shape) {
    case DomainShape::ball:
      std::snprintf(buf, sizeof buf, "ball(r=%g)", radius);
      break;
    case DomainShape::box:
      std::snprintf(buf, sizeof buf, "box(h=%g)", half.dim() > 0 ? half[0] : 0.0);
      break;
    case DomainShape::slab_with_caps:
      std::snprintf(buf, sizeof buf, "slab(%g,%g;cap=%g)", lower, upper, cap);
      break;
  }
  return buf;
}

DomainGrid DomainGrid::make(const Domain& dom, int d, double delta) {
  if (!(delta > 0)) throw std::invalid_argument("grid delta must be > 0");
  if (!dom.contains(Vec::zero(d)))
    throw std::invalid_argument("grid domain must contain the origin strictly");
  DomainGrid g;
  g.domain = dom;
  g.d = d;
  g.delta = delta;
  const double br = dom.bounding_radius();
  const auto m = static_cast<std::int32_t>(std::ceil(br / delta)) + 1;
  std::int64_t n = 1;
  for (int i = 0; i < d; ++i) {
    g.half_extent[static_cast<std::size_t>(i)] = m;
    n *= 2 * static_cast<std::int64_t>(m) + 1;
  }
  if (n > 50'000'000)
    throw std::runtime_error("domain grid would need " + std::to_string(n) +
                             " cells; reduce the domain scale or coarsen delta");
  g.n_cells = n;
  g.in_domain.resize(static_cast<std::size_t>(n));
  for (std::int64_t c = 0; c < n; ++c)
    g.in_domain[static_cast<std::size_t>(c)] = dom.contains(g.center(c)) ? 1 : 0;
  g.origin_cell = g.index_of(Vec::zero(d));
  return g;
}

Vec DomainGrid::center(std::int64_t idx) const {
  Vec x(d);
  std::int64_t rem = idx;
  for (int i = 0; i < d; ++i) {
    const std::int64_t span = 2 * static_cast<std::int64_t>(half_extent[static_cast<std::size_t>(i)]) + 1;
    const std::int64_t k = rem % span - half_extent[static_cast<std::size_t>(i)];
    rem /= span;
    x[i] = static_cast<double>(k) * delta;
  }
  return x;
}

std::int64_t DomainGrid::index_of(const Vec& x) const {
  std::int64_t idx = 0, stride = 1;
  for (int i = 0; i < d; ++i) {
    const auto m = half_extent[static_cast<std::size_t>(i)];
    const auto k = static_cast<std::int64_t>(std::llround(x[i] / delta));
    if (k < -m || k > m) return -1;
    idx += (k + m) * stride;
    stride *= 2 * static_cast<std::int64_t>(m) + 1;
  }
  return idx;
}

double DomainGrid::cell_volume() const { return std::pow(delta, d); }

GreenEstimate estimate_green(const EnvironmentSpec& spec,
                             const IntegratorConfig& cfg, const DomainGrid& grid,
                             int n_env, std::int64_t n_traj,
                             std::int64_t env_offset, int workers) {
  if (grid.origin_cell < 0 || !grid.in_domain[static_cast<std::size_t>(grid.origin_cell)])
    throw std::invalid_argument("estimate_green: origin must be interior");
  if (n_env < 1 || n_traj < 1)
    throw std::invalid_argument("estimate_green: need n_env >= 1 and n_traj >= 1");
  GreenEstimate est;
  est.grid = grid;
  est.n_env = n_env;
  est.n_traj = n_traj;
  est.env_offset = env_offset;
  est.master_seed = spec.master_seed;
  const auto nc = static_cast<std::size_t>(grid.n_cells);
  est.g_env.assign(static_cast<std::size_t>(n_env) * nc, 0.f);

  const double norm = 1.0 / (static_cast<double>(n_traj) * grid.cell_volume());
  const std::int64_t max_steps =
      static_cast<std::int64_t>(std::llround(cfg.max_time / cfg.step));
  const int d = spec.dimension;
  const bool interval_bridge =
      d == 1 && cfg.correction == BoundaryCorrection::bridge_test &&
      grid.domain.shape != DomainShape::slab_with_caps;

  std::vector<std::int64_t> censored_per_env(static_cast<std::size_t>(n_env), 0);
  std::vector<RunningStat> exit_time_per_env(static_cast<std::size_t>(n_env));

  parallel_chunks(n_env, workers, 1, [&](std::int64_t, std::int64_t elo,
                                         std::int64_t ehi) {
    for (std::int64_t e = elo; e < ehi; ++e) {
      const Environment env(spec, env_offset + e);
      EnvView view(env);
      std::vector<double> occ(nc, 0.0);
      for (std::int64_t t = 0; t < n_traj; ++t) {
        Rng rng = make_stream(spec.master_seed, StreamTag::trajectory,
                              static_cast<std::uint64_t>(env_offset + e),
                              static_cast<std::uint64_t>(t), 11);
        Walker w(view, cfg, std::move(rng), Vec::zero(d));
        bool exited = false;
        while (w.steps_taken() < max_steps) {
          const Vec at = w.position();
          if (!grid.domain.contains(at)) {
            exited = true;
            break;
          }
          const std::int64_t cell = grid.index_of(at);
          if (cell >= 0) occ[static_cast<std::size_t>(cell)] += cfg.step;
          w.step();
          if (interval_bridge) {
            // in one dimension the domain walls are hyperplanes; the bridge
            // test removes the O(sqrt(h)) kill bias
            const double hw = grid.domain.shape == DomainShape::ball
                                  ? grid.domain.radius
                                  : grid.domain.half[0];
            const double prev = w.previous_position()[0];
            const double cur = w.position()[0];
            if (cur > -hw && cur < hw &&
                (bridge_crossed(prev, cur, -hw, w.last_sigma(), cfg.step, w.rng()) ||
                 bridge_crossed(prev, cur, hw, w.last_sigma(), cfg.step, w.rng()))) {
              exited = true;
              break;
            }
          }
        }
        if (!exited && grid.domain.contains(w.position())) {
          ++censored_per_env[static_cast<std::size_t>(e)];
        }
        exit_time_per_env[static_cast<std::size_t>(e)].add(w.time());
      }
      float* ge = est.g_env.data() + static_cast<std::size_t>(e) * nc;
      for (std::size_t c = 0; c < nc; ++c)
        ge[c] = static_cast<float>(occ[c] * norm);
    }
  });

  RunningStat exit_all;
  for (int e = 0; e < n_env; ++e) {
    est.censored += censored_per_env[static_cast<std::size_t>(e)];
    exit_all.merge(exit_time_per_env[static_cast<std::size_t>(e)]);
  }
  est.censor_flag = est.censored > 0;
  est.mean_exit_time_se = exit_all.standard_error();

  est.g_mean.assign(nc, 0.0);
  est.g_se.assign(nc, 0.0);
  for (std::size_t c = 0; c < nc; ++c) {
    RunningStat s;
    for (int e = 0; e < n_env; ++e)
      s.add(est.g_at(e, static_cast<std::int64_t>(c)));
    est.g_mean[c] = s.mean();
    est.g_se[c] = s.standard_error();
  }
  double total = 0;
  for (std::size_t c = 0; c < nc; ++c) total += est.g_mean[c];
  est.mean_exit_time = total * grid.cell_volume();
  return est;
}

AuxiliaryDriftField auxiliary_drift(const EnvironmentSpec& spec,
                                    const GreenEstimate& green,
                                    double se_floor_fraction) {
  if (green.n_env < 1)
    throw std::invalid_argument("auxiliary_drift: empty ensemble");
  AuxiliaryDriftField f;
  f.grid = green.grid;
  f.range = spec.range;
  f.n_env = green.n_env;
  f.origin_cell = green.grid.origin_cell;
  const auto nc = static_cast<std::size_t>(green.grid.n_cells);
  const int d = spec.dimension;
  f.bprime.assign(nc * static_cast<std::size_t>(d), 0.0);
  f.bprime_se.assign(nc * static_cast<std::size_t>(d), 0.0);
  f.reliable.assign(nc, 0);
  f.b_env.assign(static_cast<std::size_t>(green.n_env) * nc * static_cast<std::size_t>(d),
                 0.f);

  std::vector<double> num(nc * static_cast<std::size_t>(d), 0.0);
  std::vector<double> den(nc, 0.0);
  std::vector<Vec> centers(nc);
  for (std::size_t c = 0; c < nc; ++c)
    centers[c] = green.grid.center(static_cast<std::int64_t>(c));

  for (int e = 0; e < green.n_env; ++e) {
    const Environment env(spec, green.env_offset + e);
    EnvView view(env);
    for (std::size_t c = 0; c < nc; ++c) {
      if (!green.grid.in_domain[c]) continue;
      const Vec b = view.drift(centers[c]);
      float* cache = f.b_env.data() +
                     (static_cast<std::size_t>(e) * nc + c) * static_cast<std::size_t>(d);
      for (int i = 0; i < d; ++i) cache[i] = static_cast<float>(b[i]);
      const double g = green.g_at(e, static_cast<std::int64_t>(c));
      if (g <= 0) continue;
      if (green.n_env == 1) {
        // degenerate ensemble: the Green-weighted ratio reduces to the drift
        // itself, kept exact rather than round-tripped through the ratio
        for (int i = 0; i < d; ++i) num[c * d + i] = b[i];
        den[c] = -1;
      } else {
        for (int i = 0; i < d; ++i) num[c * d + i] += g * b[i];
        den[c] += g;
      }
    }
  }
  for (std::size_t c = 0; c < nc; ++c) {
    if (!green.grid.in_domain[c] || den[c] == 0) continue;
    if (static_cast<std::int64_t>(c) == f.origin_cell) continue;  // conventional 0
    if (green.n_env == 1) {
      for (int i = 0; i < d; ++i) f.bprime[c * d + i] = num[c * d + i];
      f.reliable[c] = 1;
    } else {
      for (int i = 0; i < d; ++i) f.bprime[c * d + i] = num[c * d + i] / den[c];
      const double mean = green.g_mean[c];
      const double se = green.g_se[c];
      f.reliable[c] = (mean > 0 && se <= se_floor_fraction * mean) ? 1 : 0;
      // leave-one-environment-out jackknife of the ratio, per component
      const int ne = green.n_env;
      for (int i = 0; i < d; ++i) {
        double mean_loo = 0;
        std::vector<double> loo(static_cast<std::size_t>(ne), 0.0);
        int valid = 0;
        for (int e = 0; e < ne; ++e) {
          const double ge = green.g_at(e, static_cast<std::int64_t>(c));
          const double be = f.b_env[(static_cast<std::size_t>(e) * nc + c) * d + i];
          const double dd = den[c] - ge;
          if (dd <= 0) {
            valid = 0;
            break;
          }
          loo[static_cast<std::size_t>(e)] = (num[c * d + i] - ge * be) / dd;
          mean_loo += loo[static_cast<std::size_t>(e)];
          ++valid;
        }
        if (valid == ne && ne >= 2) {
          mean_loo /= ne;
          double ss = 0;
          for (int e = 0; e < ne; ++e) {
            const double z = loo[static_cast<std::size_t>(e)] - mean_loo;
            ss += z * z;
          }
          f.bprime_se[c * d + i] =
              std::sqrt(ss * (ne - 1) / static_cast<double>(ne));
        }
      }
    }
  }

  // nearest-reliable completion (multi-source BFS on the lattice graph) so the
  // auxiliary diffusion sees a drift everywhere, clamped at mask boundaries
  f.filled = f.bprime;
  std::vector<std::int64_t> src(nc, -1);
  std::deque<std::int64_t> queue;
  for (std::size_t c = 0; c < nc; ++c)
    if (f.reliable[c]) {
      src[c] = static_cast<std::int64_t>(c);
      queue.push_back(static_cast<std::int64_t>(c));
    }
  std::array<std::int64_t, kMaxDim> stride{};
  std::int64_t acc = 1;
  for (int i = 0; i < d; ++i) {
    stride[static_cast<std::size_t>(i)] = acc;
    acc *= 2 * static_cast<std::int64_t>(green.grid.half_extent[static_cast<std::size_t>(i)]) + 1;
  }
  while (!queue.empty()) {
    const std::int64_t c = queue.front();
    queue.pop_front();
    std::int64_t rem = c;
    std::array<std::int64_t, kMaxDim> coord{};
    for (int i = 0; i < d; ++i) {
      const std::int64_t span =
          2 * static_cast<std::int64_t>(green.grid.half_extent[static_cast<std::size_t>(i)]) + 1;
      coord[static_cast<std::size_t>(i)] = rem % span;
      rem /= span;
    }
    for (int i = 0; i < d; ++i) {
      const std::int64_t span =
          2 * static_cast<std::int64_t>(green.grid.half_extent[static_cast<std::size_t>(i)]) + 1;
      for (int dir = -1; dir <= 1; dir += 2) {
        const std::int64_t k = coord[static_cast<std::size_t>(i)] + dir;
        if (k < 0 || k >= span) continue;
        const std::int64_t nb = c + dir * stride[static_cast<std::size_t>(i)];
        if (src[static_cast<std::size_t>(nb)] >= 0) continue;
        src[static_cast<std::size_t>(nb)] = src[static_cast<std::size_t>(c)];
        queue.push_back(nb);
      }
    }
  }
  for (std::size_t c = 0; c < nc; ++c) {
    if (f.reliable[c] || src[c] < 0) continue;
    const auto s = static_cast<std::size_t>(src[c]);
    for (int i = 0; i < d; ++i) f.filled[c * d + i] = f.bprime[s * d + i];
  }
  return f;
}

Vec AuxiliaryDriftField::drift_at(const Vec& x) const {
  const int d = grid.d;
  Vec out(d);
  std::array<std::int64_t, kMaxDim> base{};
  std::array<double, kMaxDim> frac{};
  std::array<std::int64_t, kMaxDim> stride{};
  std::int64_t acc = 1;
  for (int i = 0; i < d; ++i) {
    const auto m = static_cast<std::int64_t>(grid.half_extent[static_cast<std::size_t>(i)]);
    stride[static_cast<std::size_t>(i)] = acc;
    acc *= 2 * m + 1;
    double u = x[i] / grid.delta;
    u = std::clamp(u, static_cast<double>(-m), static_cast<double>(m));
    double fl = std::floor(u);
    if (fl >= static_cast<double>(m)) fl = static_cast<double>(m - 1);
    base[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(fl) + m;
    frac[static_cast<std::size_t>(i)] = u - fl;
  }
  const int corners = 1 << d;
  for (int t = 0; t < corners; ++t) {
    double w = 1;
    std::int64_t idx = 0;
    for (int i = 0; i < d; ++i) {
      const int bit = (t >> i) & 1;
      w *= bit ? frac[static_cast<std::size_t>(i)] : 1 - frac[static_cast<std::size_t>(i)];
      idx += (base[static_cast<std::size_t>(i)] + bit) * stride[static_cast<std::size_t>(i)];
    }
    if (w == 0) continue;
    for (int i = 0; i < d; ++i)
      out[i] += w * filled[static_cast<std::size_t>(idx) * d + i];
  }
  return out;
}

std::string to_string(KVerdict v) {
  switch (v) {
    case KVerdict::holds: return "holds";
    case KVerdict::fails: return "fails";
    case KVerdict::vacuous: return "vacuous";
    case KVerdict::inconclusive: return "inconclusive";
  }
  return "?";
}

ConditionKReport check_condition_K(
    const std::vector<std::pair<const GreenEstimate*, const AuxiliaryDriftField*>>& fields,
    const Vec& l, int n_boot, std::uint64_t seed) {
  ConditionKReport rep;
  for (const auto& [green, field] : fields) {
    ConditionKDomain dr;
    dr.domain = field->grid.domain.describe();
    const double margin_depth = 5.0 * field->range;
    const auto nc = static_cast<std::size_t>(field->grid.n_cells);
    const int d = field->grid.d;
    std::vector<std::int64_t> margin;
    for (std::size_t c = 0; c < nc; ++c) {
      if (!field->grid.in_domain[c]) continue;
      if (static_cast<std::int64_t>(c) == field->origin_cell) continue;
      const Vec x = field->grid.center(static_cast<std::int64_t>(c));
      if (field->grid.domain.boundary_margin(x) > margin_depth)
        margin.push_back(static_cast<std::int64_t>(c));
    }
    dr.margin_cells = static_cast<std::int64_t>(margin.size());
    if (margin.empty()) {
      dr.verdict = KVerdict::vacuous;  // inf over the empty set
      rep.domains.push_back(dr);
      continue;
    }
    for (auto c : margin)
      if (!field->reliable[static_cast<std::size_t>(c)]) ++dr.unreliable_margin;
    if (dr.unreliable_margin > 0) {
      dr.verdict = KVerdict::inconclusive;
      rep.domains.push_back(dr);
      continue;
    }
    double eps = kInf;
    for (auto c : margin) {
      double v = 0;
      for (int i = 0; i < d; ++i)
        v += field->bprime[static_cast<std::size_t>(c) * d + i] * l[i];
      eps = std::min(eps, v);
    }
    dr.eps_hat = eps;

    // environment bootstrap of the margin infimum, on cached per-env values
    const int ne = green->n_env;
    if (ne >= 2 && n_boot > 0) {
      std::vector<double> gsum(margin.size()), gbsum(margin.size());
      std::vector<double> genv(static_cast<std::size_t>(ne) * margin.size());
      std::vector<double> gbenv(static_cast<std::size_t>(ne) * margin.size());
      for (int e = 0; e < ne; ++e)
        for (std::size_t mi = 0; mi < margin.size(); ++mi) {
          const double g = green->g_at(e, margin[mi]);
          const float* cache =
              field->b_env.data() +
              (static_cast<std::size_t>(e) * nc + static_cast<std::size_t>(margin[mi])) *
                  static_cast<std::size_t>(d);
          double bl = 0;
          for (int i = 0; i < d; ++i) bl += static_cast<double>(cache[i]) * l[i];
          genv[static_cast<std::size_t>(e) * margin.size() + mi] = g;
          gbenv[static_cast<std::size_t>(e) * margin.size() + mi] = g * bl;
        }
      Rng rng(seed, {static_cast<std::uint64_t>(StreamTag::bootstrap), 0x4b});
      std::vector<double> mins;
      mins.reserve(static_cast<std::size_t>(n_boot));
      for (int b = 0; b < n_boot; ++b) {
        std::fill(gsum.begin(), gsum.end(), 0.0);
        std::fill(gbsum.begin(), gbsum.end(), 0.0);
        for (int e = 0; e < ne; ++e) {
          const int pick = static_cast<int>(rng.uniform() * ne);
          const std::size_t off = static_cast<std::size_t>(std::min(pick, ne - 1)) * margin.size();
          for (std::size_t mi = 0; mi < margin.size(); ++mi) {
            gsum[mi] += genv[off + mi];
            gbsum[mi] += gbenv[off + mi];
          }
        }
        double m = kInf;
        for (std::size_t mi = 0; mi < margin.size(); ++mi)
          if (gsum[mi] > 0) m = std::min(m, gbsum[mi] / gsum[mi]);
        if (m < kInf) mins.push_back(m);
      }
      dr.eps_boot_lo = mins.empty() ? -kInf : sample_quantile(mins, 0.05);
    } else {
      dr.eps_boot_lo = dr.eps_hat;  // degenerate ensemble: no resampling spread
    }

    if (dr.eps_hat <= 0)
      dr.verdict = KVerdict::fails;
    else if (dr.eps_boot_lo > 0)
      dr.verdict = KVerdict::holds;
    else
      dr.verdict = KVerdict::inconclusive;
    rep.domains.push_back(dr);
  }

  bool any_fail = false, any_inconclusive = false, any_nonvacuous = false;
  for (const auto& dr : rep.domains) {
    if (dr.verdict == KVerdict::fails) any_fail = true;
    if (dr.verdict == KVerdict::inconclusive) any_inconclusive = true;
    if (dr.verdict != KVerdict::vacuous) {
      any_nonvacuous = true;
      rep.eps_hat = std::min(rep.eps_hat, dr.eps_hat);
    }
  }
  if (any_fail)
    rep.overall = KVerdict::fails;
  else if (any_inconclusive)
    rep.overall = KVerdict::inconclusive;
  else if (!any_nonvacuous)
    rep.overall = KVerdict::vacuous;
  else
    rep.overall = KVerdict::holds;
  return rep;
}

ExitIdentityReport exit_law_identity_test(const EnvironmentSpec& spec,
                                          const IntegratorConfig& cfg,
                                          const Domain& domain,
                                          const AuxiliaryDriftField& field,
                                          std::int64_t n, int n_perms,
                                          std::int64_t max_per_sample,
                                          std::int64_t env_offset, int workers) {
  ExitIdentityReport rep;
  const int d = spec.dimension;
  const std::int64_t max_steps =
      static_cast<std::int64_t>(std::llround(cfg.max_time / cfg.step));
  std::vector<Vec> sample_a(static_cast<std::size_t>(n));
  std::vector<Vec> sample_b(static_cast<std::size_t>(n));
  std::vector<std::uint8_t> ok_a(static_cast<std::size_t>(n), 0),
      ok_b(static_cast<std::size_t>(n), 0);

  parallel_chunks(n, workers, 128, [&](std::int64_t, std::int64_t lo,
                                       std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) {
      {
        const Environment env(spec, env_offset + i);
        EnvView view(env);
        Rng rng = make_stream(spec.master_seed, StreamTag::trajectory,
                              static_cast<std::uint64_t>(env_offset + i), 21);
        Walker w(view, cfg, std::move(rng), Vec::zero(d));
        while (w.steps_taken() < max_steps && domain.contains(w.position())) w.step();
        if (!domain.contains(w.position())) {
          sample_a[static_cast<std::size_t>(i)] = w.position();
          ok_a[static_cast<std::size_t>(i)] = 1;
        }
      }
      {
        Rng rng = make_stream(spec.master_seed, StreamTag::trajectory,
                              static_cast<std::uint64_t>(env_offset + i), 22);
        Vec z = Vec::zero(d);
        const double sqh = std::sqrt(cfg.step);
        std::int64_t s = 0;
        for (; s < max_steps && domain.contains(z); ++s) {
          const Vec b = field.drift_at(z);
          for (int k = 0; k < d; ++k)
            z[k] += b[k] * cfg.step + sqh * rng.gaussian();
        }
        if (!domain.contains(z)) {
          sample_b[static_cast<std::size_t>(i)] = z;
          ok_b[static_cast<std::size_t>(i)] = 1;
        }
      }
    }
  });

  std::vector<Vec> a, b;
  for (std::int64_t i = 0; i < n; ++i) {
    if (ok_a[static_cast<std::size_t>(i)])
      a.push_back(sample_a[static_cast<std::size_t>(i)]);
    else
      ++rep.censored_a;
    if (ok_b[static_cast<std::size_t>(i)])
      b.push_back(sample_b[static_cast<std::size_t>(i)]);
    else
      ++rep.censored_b;
  }
  rep.n_a = static_cast<std::int64_t>(a.size());
  rep.n_b = static_cast<std::int64_t>(b.size());
  Rng perm = make_stream(spec.master_seed, StreamTag::permutation,
                         static_cast<std::uint64_t>(env_offset), 7);
  rep.energy = energy_distance_test(a, b, n_perms, std::move(perm),
                                    max_per_sample, workers);
  rep.rejected_1pct = rep.energy.p_value <= 0.01;
  rep.sample_a = std::move(a);
  rep.sample_b = std::move(b);
  return rep;
}

CriterionReport criterion_check(const EnvironmentSpec& spec, const Vec& l,
                                std::int64_t n_env_moments,
                                const std::vector<double>& scales,
                                const std::vector<Domain>& family, double delta,
                                const IntegratorConfig& cfg, int green_n_env,
                                std::int64_t green_n_traj, int n_boot,
                                int workers) {
  CriterionReport rep;
  rep.base_moments = sign_split_moments(spec, l, n_env_moments);
  if (rep.base_moments.mean_minus <= 0) {
    rep.vacuous_nonnestling = true;
    return rep;
  }
  for (double s : scales) {
    EnvironmentSpec scaled = spec;
    scaled.base_drift = spec.base_drift * s;
    CriterionScalePoint pt;
    pt.scale = s;
    const SignSplitMoments m = sign_split_moments(scaled, l, n_env_moments);
    pt.mean_plus = m.mean_plus;
    pt.mean_minus = m.mean_minus;
    pt.ratio = m.ratio();

    std::vector<GreenEstimate> greens;
    std::vector<AuxiliaryDriftField> auxs;
    greens.reserve(family.size());
    auxs.reserve(family.size());
    for (const Domain& dom : family) {
      const DomainGrid grid = DomainGrid::make(dom, spec.dimension, delta);
      greens.push_back(
          estimate_green(scaled, cfg, grid, green_n_env, green_n_traj, 0, workers));
      auxs.push_back(auxiliary_drift(scaled, greens.back()));
    }
    std::vector<std::pair<const GreenEstimate*, const AuxiliaryDriftField*>> fields;
    for (std::size_t i = 0; i < greens.size(); ++i)
      fields.push_back({&greens[i], &auxs[i]});
    const ConditionKReport k = check_condition_K(fields, l, n_boot, spec.master_seed);
    pt.k_verdict = k.overall;
    pt.eps_hat = k.eps_hat;
    if (k.overall == KVerdict::holds && pt.ratio < rep.c_e_hat) {
      rep.c_e_hat = pt.ratio;
      rep.c_e_defined = true;
    }
    rep.scan.push_back(pt);
  }
  return rep;
}

}  // namespace rediff
