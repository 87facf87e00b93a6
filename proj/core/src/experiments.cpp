#include "rediff/experiments.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "rediff/ballistic.hpp"
#include "rediff/kalikow.hpp"
#include "rediff/parallel.hpp"
#include "rediff/regeneration.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace rediff {

std::string version_string() { return "0.1.0"; }

std::vector<std::pair<std::string, std::string>> experiment_catalog() {
  return {
      {"slab_ladder",
       "annealed slab exit-left probabilities over an L ladder with decay fits"},
      {"regeneration", "coupled-chain renewal blocks and distributional tests"},
      {"ballistic_report",
       "velocity, covariance, tail and transverse statistics from renewal blocks"},
      {"kalikow", "Green-weighted auxiliary drift fields and uniform-positivity check"},
      {"exit_identity",
       "two-sample exit-law comparison of annealed and auxiliary diffusions"},
      {"criterion", "sign-split drift moments with a scan locating the holding ratio"},
  };
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt(std::int64_t v) { return std::to_string(v); }

class Csv {
 public:
  explicit Csv(std::vector<std::string> header) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i) out_ << ',';
      out_ << header[i];
    }
    out_ << '\n';
    cols_ = header.size();
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }
  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
  std::size_t cols_ = 0;
};

void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

json vec_json(const Vec& v) {
  json a = json::array();
  for (int i = 0; i < v.dim(); ++i) a.push_back(v[i]);
  return a;
}

json matrix_json(const std::vector<double>& m, int d) {
  json rows = json::array();
  for (int i = 0; i < d; ++i) {
    json r = json::array();
    for (int j = 0; j < d; ++j) r.push_back(m[static_cast<std::size_t>(i * d + j)]);
    rows.push_back(r);
  }
  return rows;
}

struct Emitter {
  fs::path dir;
  std::vector<std::string>* names;
  void emit(const std::string& name, const std::string& bytes) const {
    write_file(dir / name, bytes);
    names->push_back(name);
  }
};

json decay_fit_json(const DecayFit& f) {
  return json{{"gamma", f.gamma},
              {"slope", f.slope},
              {"slope_se", f.slope_se},
              {"slope_upper95", f.slope_upper95},
              {"n_points", f.n_points},
              {"n_bound_points", f.n_bound_points},
              {"verdict", to_string(f.verdict)}};
}

json estimate_json(const SlabExitEstimate& est) {
  return json{{"L", est.slab.length},
              {"depth_ratio", est.slab.depth_ratio},
              {"n", est.n},
              {"exit_left", est.exit_left},
              {"exit_right", est.exit_right},
              {"censored", est.censored},
              {"p_hat", est.p_hat},
              {"ci_low", est.ci.lo},
              {"ci_high", est.ci.hi},
              {"censor_warning", est.censor_warning}};
}

void run_slab_ladder(const ExperimentConfig& ec, int workers, const Emitter& em,
                     std::map<std::string, std::int64_t>& censoring) {
  const auto& p = ec.slab;
  std::vector<SlabExitEstimate> ladder;
  std::ostringstream events;
  std::int64_t censored_total = 0;
  for (std::size_t li = 0; li < p.L_values.size(); ++li) {
    const Slab slab{p.direction, p.depth_ratio, p.L_values[li]};
    std::vector<ExitRecord> capture;
    const std::int64_t env_offset = static_cast<std::int64_t>(li) * p.n_traj;
    const SlabExitEstimate est =
        slab_exit_probability(ec.env, ec.integrator, slab, p.n_traj, env_offset,
                              workers, p.emit_events ? &capture : nullptr,
                              p.quenched);
    censored_total += est.censored;
    if (p.emit_events) {
      for (std::size_t i = 0; i < capture.size(); ++i) {
        const ExitRecord& rec = capture[i];
        json line{{"trajectory_index", static_cast<std::int64_t>(i)},
                  {"env_index", env_offset + static_cast<std::int64_t>(i)},
                  {"event", rec.status == ExitStatus::censored
                                ? "censored"
                                : (rec.side < 0 ? "exit_left" : "exit_right")},
                  {"time", rec.time},
                  {"position", vec_json(rec.position)},
                  {"L", slab.length}};
        events << line.dump() << '\n';
      }
    }
    ladder.push_back(est);
  }

  Csv table({"L", "gamma", "p_hat", "ci_low", "ci_high", "censored"});
  for (double gamma : p.gammas)
    for (const auto& est : ladder)
      table.row({fmt(est.slab.length), fmt(gamma), fmt(est.p_hat), fmt(est.ci.lo),
                 fmt(est.ci.hi), fmt(est.censored)});
  em.emit("ladder.csv", table.str());

  // censored mass brackets the hitting probability: [p_hat, p_hat_plus_censored]
  Csv counts({"L", "n", "exit_left", "exit_right", "censored", "p_hat",
              "p_hat_plus_censored", "ci_low", "ci_high", "censor_warning"});
  for (const auto& est : ladder)
    counts.row({fmt(est.slab.length), fmt(est.n), fmt(est.exit_left),
                fmt(est.exit_right), fmt(est.censored), fmt(est.p_hat),
                fmt(static_cast<double>(est.exit_left + est.censored) /
                    static_cast<double>(est.n)),
                fmt(est.ci.lo), fmt(est.ci.hi), fmt(static_cast<std::int64_t>(est.censor_warning))});
  em.emit("counts.csv", counts.str());

  Csv fits({"gamma", "slope", "slope_se", "slope_upper95", "n_points",
            "n_bound_points", "verdict"});
  json jfits = json::array();
  for (double gamma : p.gammas) {
    const DecayFit f = fit_condition_T(ladder, gamma);
    fits.row({fmt(f.gamma), fmt(f.slope), fmt(f.slope_se), fmt(f.slope_upper95),
              fmt(static_cast<std::int64_t>(f.n_points)),
              fmt(static_cast<std::int64_t>(f.n_bound_points)), to_string(f.verdict)});
    jfits.push_back(decay_fit_json(f));
  }
  em.emit("fits.csv", fits.str());

  json summary{{"ladder", json::array()}, {"fits", jfits}};
  for (const auto& est : ladder) summary["ladder"].push_back(estimate_json(est));

  if (p.n_dirs > 0) {
    const NeighborhoodReport nb = neighborhood_T(
        ec.env, ec.integrator, p.direction, p.neighborhood_gamma, p.cone_half_angle,
        p.n_dirs, p.depth_ratio, p.L_values, p.n_traj, workers,
        static_cast<std::int64_t>(p.L_values.size()) * p.n_traj);
    json jnb = json::array();
    for (const auto& df : nb.directions) {
      json entry{{"direction", vec_json(df.direction)}, {"fit", decay_fit_json(df.fit)}};
      jnb.push_back(entry);
    }
    summary["neighborhood"] = {{"directions", jnb}, {"all_consistent", nb.all_consistent}};
  }
  em.emit("summary.json", summary.dump(2) + "\n");
  if (p.emit_events) em.emit("events.jsonl", events.str());
  censoring["slab_censored_trajectories"] = censored_total;
}

json record_json(const RegenerationRecord& r) {
  return json{{"trajectory", r.trajectory},
              {"k", r.k},
              {"tau", r.tau},
              {"x_tau", vec_json(r.x_tau)},
              {"increment", vec_json(r.block_increment)},
              {"increment_l", r.increment_l},
              {"duration", r.block_duration},
              {"sup_displacement", r.sup_displacement},
              {"censored", r.censored},
              {"trajectory_d_infinite", r.trajectory_d_infinite}};
}

struct ChainBatch {
  std::vector<RegenerationRecord> records;
  std::int64_t failed_couplings = 0;
  std::int64_t no_tau = 0;
  std::int64_t total_bridge_rejects = 0;
  std::vector<ScanResult> scans;
  std::vector<std::pair<std::int64_t, double>> log_weights;  // weighted mode
};

/// Coupled chains with one fresh environment per trajectory, scanned for
/// renewal blocks; deterministic for any worker count.
ChainBatch run_chain_batch(const ExperimentConfig& ec, std::int64_t n_traj,
                           std::int64_t horizon, double confirm_window,
                           std::int64_t env_offset, int workers) {
  const std::int64_t chunk = 8;
  const std::int64_t n_chunks = (n_traj + chunk - 1) / chunk;
  std::vector<ChainBatch> partial(static_cast<std::size_t>(n_chunks));
  parallel_chunks(n_traj, workers, chunk, [&](std::int64_t c, std::int64_t lo,
                                              std::int64_t hi) {
    ChainBatch& pb = partial[static_cast<std::size_t>(c)];
    for (std::int64_t i = lo; i < hi; ++i) {
      const Environment env(ec.env, env_offset + i);
      EnvView view(env);
      const CoupledPath cp = simulate_coupled_chain(
          view, ec.integrator, ec.coupling, ec.env.master_seed, env_offset + i, i,
          Vec::zero(ec.env.dimension), horizon);
      pb.total_bridge_rejects += cp.bridge_rejects;
      if (ec.coupling.mode == CouplingConfig::Mode::weighted_bridge)
        pb.log_weights.push_back({i, cp.total_log_weight});
      if (cp.failed) {
        ++pb.failed_couplings;
        continue;
      }
      ScanResult sr = regeneration_scan(cp.path, cp.lambdas, ec.coupling.l,
                                        ec.env.range, confirm_window, i);
      if (sr.n_taus == 0) ++pb.no_tau;
      pb.records.insert(pb.records.end(), sr.records.begin(), sr.records.end());
      sr.records.clear();
      pb.scans.push_back(std::move(sr));
    }
  });
  ChainBatch out;
  for (auto& pb : partial) {
    out.records.insert(out.records.end(), pb.records.begin(), pb.records.end());
    out.failed_couplings += pb.failed_couplings;
    out.no_tau += pb.no_tau;
    out.total_bridge_rejects += pb.total_bridge_rejects;
    out.scans.insert(out.scans.end(), pb.scans.begin(), pb.scans.end());
    out.log_weights.insert(out.log_weights.end(), pb.log_weights.begin(),
                           pb.log_weights.end());
  }
  return out;
}

json renewal_report_json(const RenewalReport& rep) {
  json j{{"refused", rep.refused},
         {"n_uncensored", rep.n_uncensored},
         {"n_k1", rep.n_k1},
         {"n_k2", rep.n_k2},
         {"n_z0", rep.n_z0}};
  if (rep.refused) {
    j["refusal_reason"] = rep.refusal_reason;
    return j;
  }
  j["ks_duration"] = {{"statistic", rep.ks_duration.statistic},
                      {"p_value", rep.ks_duration.p_value}};
  j["ks_increment"] = {{"statistic", rep.ks_increment.statistic},
                       {"p_value", rep.ks_increment.p_value}};
  j["lag1"] = {{"statistic", rep.lag1.statistic},
               {"p_value", rep.lag1.p_value},
               {"n_permutations", rep.lag1.n_permutations}};
  if (rep.z0_compared)
    j["ks_first_block_given_no_backtrack"] = {
        {"statistic", rep.ks_z0_duration.statistic},
        {"p_value", rep.ks_z0_duration.p_value}};
  return j;
}

void run_regeneration(const ExperimentConfig& ec, int workers, const Emitter& em,
                      std::map<std::string, std::int64_t>& censoring) {
  const auto& p = ec.regen;
  ChainBatch batch =
      run_chain_batch(ec, p.n_traj, p.horizon, p.confirm_window, 0, workers);

  std::ostringstream lines;
  std::int64_t censored_blocks = 0;
  for (const auto& r : batch.records) {
    if (r.censored) ++censored_blocks;
    lines << record_json(r).dump() << '\n';
  }
  em.emit("records.jsonl", lines.str());

  RenewalTestOptions opts;
  opts.min_blocks = p.min_blocks;
  opts.n_permutations = p.n_permutations;
  opts.seed = ec.env.master_seed;
  const RenewalReport rep = renewal_tests(batch.records, opts);

  json j = renewal_report_json(rep);
  j["n_trajectories"] = p.n_traj;
  j["horizon"] = p.horizon;
  j["failed_couplings"] = batch.failed_couplings;
  j["trajectories_without_regeneration"] = batch.no_tau;
  j["censored_blocks"] = censored_blocks;
  j["total_blocks"] = static_cast<std::int64_t>(batch.records.size());
  if (!batch.log_weights.empty()) {
    json w = json::array();
    for (const auto& [traj, lw] : batch.log_weights)
      w.push_back({{"trajectory", traj}, {"log_weight", lw}});
    j["bridge_log_weights"] = w;
  }
  em.emit("renewal_report.json", j.dump(2) + "\n");

  censoring["censored_blocks"] = censored_blocks;
  censoring["failed_couplings"] = batch.failed_couplings;
  censoring["trajectories_without_regeneration"] = batch.no_tau;
}

void run_ballistic(const ExperimentConfig& ec, int workers, const Emitter& em,
                   std::map<std::string, std::int64_t>& censoring) {
  const auto& p = ec.ballistic;
  const int d = ec.env.dimension;
  ChainBatch batch =
      run_chain_batch(ec, p.n_traj, p.horizon, p.confirm_window, 0, workers);
  std::int64_t censored_blocks = 0;
  for (const auto& r : batch.records)
    if (r.censored) ++censored_blocks;

  const BlockStatistics bs = block_statistics(batch.records, ec.coupling.l);
  const ConditionedVelocity cv =
      conditioned_first_block_velocity(batch.records, ec.coupling.l);
  const TailFit tail = tau1_integrability(batch.records, p.tau_gamma);
  const auto survival = tau_survival_table(batch.records);

  // long paths under the same coupled law (comparable velocities) plus plain
  // quenched paths as the coupling-bias diagnostic
  const std::int64_t horizon_long =
      static_cast<std::int64_t>(std::llround(p.long_T));
  const Vec vhat = bs.ok && bs.v_hat.norm() > 0 ? bs.v_hat : ec.coupling.l;
  std::vector<double> checkpoints;
  for (double f : {0.125, 0.25, 0.5, 1.0}) checkpoints.push_back(p.long_T * f);

  struct LongOut {
    std::vector<Vec> coupled_end, plain_end;
    std::vector<std::vector<double>> sup_transverse;  // [checkpoint][path]
    std::int64_t failed = 0;
  };
  const std::int64_t chunk = 8;
  const std::int64_t n_chunks = (p.n_long + chunk - 1) / chunk;
  std::vector<LongOut> partial(static_cast<std::size_t>(n_chunks));
  for (auto& pl : partial) pl.sup_transverse.resize(checkpoints.size());
  const int spu = ec.integrator.steps_per_unit();
  parallel_chunks(p.n_long, workers, chunk, [&](std::int64_t c, std::int64_t lo,
                                                std::int64_t hi) {
    LongOut& pl = partial[static_cast<std::size_t>(c)];
    for (std::int64_t i = lo; i < hi; ++i) {
      const std::int64_t env_index = p.n_traj + i;
      const Environment env(ec.env, env_index);
      EnvView view(env);
      const CoupledPath cp = simulate_coupled_chain(
          view, ec.integrator, ec.coupling, ec.env.master_seed, env_index,
          1000000 + i, Vec::zero(d), horizon_long);
      if (cp.failed) {
        ++pl.failed;
        continue;
      }
      pl.coupled_end.push_back(cp.path.back());
      for (std::size_t ci = 0; ci < checkpoints.size(); ++ci) {
        const auto limit = static_cast<std::size_t>(
            std::llround(checkpoints[ci] / ec.integrator.step));
        double sup = 0;
        for (std::size_t s = 0; s <= limit && s < cp.path.pos.size(); ++s)
          sup = std::max(sup, project_orthogonal(cp.path.pos[s], vhat).norm());
        pl.sup_transverse[ci].push_back(sup);
      }
      EnvView view2(env);
      Rng rng = make_stream(ec.env.master_seed, StreamTag::trajectory,
                            static_cast<std::uint64_t>(env_index), 31);
      Walker w(view2, ec.integrator, std::move(rng), Vec::zero(d));
      const std::int64_t nsteps = horizon_long * spu;
      while (w.steps_taken() < nsteps) w.step();
      pl.plain_end.push_back(w.position());
    }
  });
  LongOut longs;
  longs.sup_transverse.resize(checkpoints.size());
  for (auto& pl : partial) {
    longs.failed += pl.failed;
    longs.coupled_end.insert(longs.coupled_end.end(), pl.coupled_end.begin(),
                             pl.coupled_end.end());
    longs.plain_end.insert(longs.plain_end.end(), pl.plain_end.begin(),
                           pl.plain_end.end());
    for (std::size_t ci = 0; ci < checkpoints.size(); ++ci)
      longs.sup_transverse[ci].insert(longs.sup_transverse[ci].end(),
                                      pl.sup_transverse[ci].begin(),
                                      pl.sup_transverse[ci].end());
  }

  const DirectVelocity dv = direct_velocity(longs.coupled_end, p.long_T);
  const DirectVelocity dv_plain = direct_velocity(longs.plain_end, p.long_T);

  bool inconsistent = false;
  if (bs.ok && dv.ok) {
    for (int i = 0; i < d; ++i) {
      const double se = std::sqrt(bs.velocity_se[i] * bs.velocity_se[i] +
                                  dv.velocity_se[i] * dv.velocity_se[i]);
      if (se > 0 && std::abs(bs.velocity[i] - dv.velocity[i]) > 5 * se)
        inconsistent = true;
    }
  }

  json j;
  j["n_trajectories"] = p.n_traj;
  j["horizon"] = p.horizon;
  j["blocks"] = {{"n", bs.n_blocks},
                 {"velocity", vec_json(bs.velocity)},
                 {"velocity_se", vec_json(bs.velocity_se)},
                 {"velocity_l", bs.velocity_l},
                 {"velocity_l_se", bs.velocity_l_se},
                 {"velocity_l_positive_95", bs.ok && bs.velocity_l - 1.645 * bs.velocity_l_se > 0},
                 {"v_hat", vec_json(bs.v_hat)},
                 {"mean_duration", bs.mean_duration}};
  if (bs.ok) {
    j["blocks"]["covariance"] = matrix_json(bs.covariance, d);
    j["blocks"]["covariance_se"] = matrix_json(bs.covariance_se, d);
  }
  if (cv.ok)
    j["first_block_conditioned"] = {{"n", cv.n},
                                    {"velocity_l", cv.velocity_l},
                                    {"velocity_l_se", cv.velocity_l_se}};
  if (dv.ok)
    j["direct_coupled"] = {{"n", dv.n},
                           {"T", dv.T},
                           {"velocity", vec_json(dv.velocity)},
                           {"velocity_se", vec_json(dv.velocity_se)},
                           {"covariance", matrix_json(dv.covariance, d)},
                           {"covariance_se", matrix_json(dv.covariance_se, d)}};
  if (dv_plain.ok)
    j["direct_plain"] = {{"n", dv_plain.n},
                         {"velocity", vec_json(dv_plain.velocity)},
                         {"velocity_se", vec_json(dv_plain.velocity_se)},
                         {"covariance", matrix_json(dv_plain.covariance, d)},
                         {"covariance_se", matrix_json(dv_plain.covariance_se, d)}};
  j["velocity_estimators_inconsistent_5se"] = inconsistent;
  j["tau1_tail"] = {{"gamma", tail.gamma},
                    {"verdict", to_string(tail.verdict)},
                    {"mu_hat", tail.mu_hat},
                    {"mu_se", tail.mu_se},
                    {"n", tail.n},
                    {"note", tail.note}};
  j["failed_couplings"] = batch.failed_couplings + longs.failed;
  j["censored_blocks"] = censored_blocks;
  em.emit("ballistic_report.json", j.dump(2) + "\n");

  Csv surv({"u", "survival", "at_risk", "log_u", "log_neg_log_survival"});
  for (const auto& row : survival) {
    const double lnu = std::log(row.u);
    const double lnls = (row.survival > 0 && row.survival < 1)
                            ? std::log(-std::log(row.survival))
                            : std::nan("");
    surv.row({fmt(row.u), fmt(row.survival), fmt(row.at_risk), fmt(lnu), fmt(lnls)});
  }
  em.emit("tau_survival.csv", surv.str());

  Csv trans({"T", "mean_sup_transverse", "se", "ratio_T_0.6", "ratio_T_0.8",
             "ratio_T_1.0"});
  for (std::size_t ci = 0; ci < checkpoints.size(); ++ci) {
    RunningStat s;
    for (double v : longs.sup_transverse[ci]) s.add(v);
    const double T = checkpoints[ci];
    trans.row({fmt(T), fmt(s.mean()), fmt(s.standard_error()),
               fmt(s.mean() / std::pow(T, 0.6)), fmt(s.mean() / std::pow(T, 0.8)),
               fmt(s.mean() / std::pow(T, 1.0))});
  }
  em.emit("transverse.csv", trans.str());

  censoring["censored_blocks"] = censored_blocks;
  censoring["failed_couplings"] = batch.failed_couplings + longs.failed;
}

Domain domain_from(DomainShape shape, double scale_R, const Vec& l, int d) {
  switch (shape) {
    case DomainShape::ball:
      return Domain::ball(scale_R);
    case DomainShape::box: {
      Vec half(d);
      for (int i = 0; i < d; ++i) half[i] = scale_R;
      return Domain::box(half);
    }
    case DomainShape::slab_with_caps:
      return Domain::slab_caps(l, -scale_R, scale_R, scale_R);
  }
  return Domain::ball(scale_R);
}

void check_grid_budget(const DomainGrid& grid, int n_env) {
  const double bytes = static_cast<double>(grid.n_cells) * n_env * 4.0;
  if (bytes > 1.5e9)
    throw std::runtime_error(
        "domain grid too large for the per-environment store (" +
        std::to_string(grid.n_cells) + " cells x " + std::to_string(n_env) +
        " environments); reduce scales, delta resolution, or n_env");
}

void run_kalikow(const ExperimentConfig& ec, int workers, const Emitter& em,
                 std::map<std::string, std::int64_t>& censoring) {
  const auto& p = ec.kalikow;
  const int d = ec.env.dimension;
  std::vector<GreenEstimate> greens;
  std::vector<AuxiliaryDriftField> fields;
  std::int64_t green_censored = 0;
  int idx = 0;
  for (DomainShape shape : p.shapes)
    for (double scale : p.scales) {
      const Domain dom = domain_from(shape, scale * ec.env.range, p.direction, d);
      const DomainGrid grid = DomainGrid::make(dom, d, p.delta);
      check_grid_budget(grid, p.n_env);
      GreenEstimate green =
          estimate_green(ec.env, ec.integrator, grid, p.n_env, p.n_traj, 0, workers);
      green_censored += green.censored;
      AuxiliaryDriftField field = auxiliary_drift(ec.env, green);

      Csv gcsv([&] {
        std::vector<std::string> h;
        for (int i = 0; i < d; ++i) h.push_back("center_" + std::to_string(i));
        h.push_back("g_mean");
        h.push_back("g_se");
        return h;
      }());
      Csv bcsv([&] {
        std::vector<std::string> h;
        for (int i = 0; i < d; ++i) h.push_back("center_" + std::to_string(i));
        for (int i = 0; i < d; ++i) h.push_back("bprime_" + std::to_string(i));
        for (int i = 0; i < d; ++i) h.push_back("bprime_se_" + std::to_string(i));
        h.push_back("reliable");
        h.push_back("margin");
        return h;
      }());
      const double margin_depth = 5.0 * ec.env.range;
      for (std::int64_t c = 0; c < grid.n_cells; ++c) {
        if (!grid.in_domain[static_cast<std::size_t>(c)]) continue;
        const Vec x = grid.center(c);
        std::vector<std::string> grow, brow;
        for (int i = 0; i < d; ++i) grow.push_back(fmt(x[i]));
        grow.push_back(fmt(green.g_mean[static_cast<std::size_t>(c)]));
        grow.push_back(fmt(green.g_se[static_cast<std::size_t>(c)]));
        gcsv.row(grow);
        for (int i = 0; i < d; ++i) brow.push_back(fmt(x[i]));
        for (int i = 0; i < d; ++i)
          brow.push_back(fmt(field.bprime[static_cast<std::size_t>(c) * d + i]));
        for (int i = 0; i < d; ++i)
          brow.push_back(fmt(field.bprime_se[static_cast<std::size_t>(c) * d + i]));
        brow.push_back(fmt(static_cast<std::int64_t>(field.reliable[static_cast<std::size_t>(c)])));
        brow.push_back(fmt(static_cast<std::int64_t>(
            dom.boundary_margin(x) > margin_depth && c != grid.origin_cell)));
        bcsv.row(brow);
      }
      em.emit("green_" + std::to_string(idx) + ".csv", gcsv.str());
      em.emit("bprime_" + std::to_string(idx) + ".csv", bcsv.str());
      greens.push_back(std::move(green));
      fields.push_back(std::move(field));
      ++idx;
    }

  std::vector<std::pair<const GreenEstimate*, const AuxiliaryDriftField*>> pairs;
  for (std::size_t i = 0; i < greens.size(); ++i)
    pairs.push_back({&greens[i], &fields[i]});
  const ConditionKReport rep =
      check_condition_K(pairs, p.direction, p.n_boot, ec.env.master_seed);

  json j;
  j["overall"] = to_string(rep.overall);
  j["eps_hat"] = rep.eps_hat == kInf ? json() : json(rep.eps_hat);
  j["domains"] = json::array();
  for (const auto& dr : rep.domains)
    j["domains"].push_back({{"domain", dr.domain},
                            {"verdict", to_string(dr.verdict)},
                            {"eps_hat", dr.eps_hat == kInf ? json() : json(dr.eps_hat)},
                            {"eps_boot_lo", dr.eps_boot_lo == kInf ? json() : json(dr.eps_boot_lo)},
                            {"margin_cells", dr.margin_cells},
                            {"unreliable_margin", dr.unreliable_margin}});
  j["green_censored_trajectories"] = green_censored;
  em.emit("condition_K.json", j.dump(2) + "\n");
  censoring["green_censored_trajectories"] = green_censored;
}

void run_exit_identity(const ExperimentConfig& ec, int workers, const Emitter& em,
                       std::map<std::string, std::int64_t>& censoring) {
  const auto& p = ec.exit_identity;
  const int d = ec.env.dimension;
  json seeds = json::array();
  std::int64_t rejections = 0;
  std::int64_t censored_total = 0;
  for (int s = 0; s < p.n_seeds; ++s) {
    EnvironmentSpec spec = ec.env;
    spec.master_seed = ec.env.master_seed + static_cast<std::uint64_t>(s);
    const Domain dom = domain_from(DomainShape::ball, p.radius * spec.range,
                                   Vec::basis(d, 0), d);
    const DomainGrid grid = DomainGrid::make(dom, d, spec.range / 4.0);
    check_grid_budget(grid, p.field_n_env);
    const GreenEstimate green = estimate_green(spec, ec.integrator, grid,
                                               p.field_n_env, p.field_n_traj,
                                               p.n, workers);
    const AuxiliaryDriftField field = auxiliary_drift(spec, green);
    const ExitIdentityReport rep = exit_law_identity_test(
        spec, ec.integrator, dom, field, p.n, p.n_perms, p.n, 0, workers);
    if (rep.rejected_1pct) ++rejections;
    censored_total += rep.censored_a + rep.censored_b;
    seeds.push_back({{"seed", spec.master_seed},
                     {"energy_statistic", rep.energy.statistic},
                     {"p_value", rep.energy.p_value},
                     {"n_a", rep.n_a},
                     {"n_b", rep.n_b},
                     {"censored_a", rep.censored_a},
                     {"censored_b", rep.censored_b},
                     {"rejected_1pct", rep.rejected_1pct},
                     {"green_censored", green.censored}});
    if (s == 0) {
      auto dump_points = [&](const std::vector<Vec>& pts) {
        std::vector<std::string> h;
        for (int i = 0; i < d; ++i) h.push_back("x_" + std::to_string(i));
        Csv csv(h);
        for (const auto& x : pts) {
          std::vector<std::string> row;
          for (int i = 0; i < d; ++i) row.push_back(fmt(x[i]));
          csv.row(row);
        }
        return csv.str();
      };
      em.emit("exit_points_a.csv", dump_points(rep.sample_a));
      em.emit("exit_points_b.csv", dump_points(rep.sample_b));
    }
  }
  json j;
  j["seeds"] = seeds;
  j["n_seeds"] = p.n_seeds;
  j["rejections_at_1pct"] = rejections;
  j["rejection_rate"] =
      p.n_seeds > 0 ? static_cast<double>(rejections) / p.n_seeds : 0.0;
  em.emit("exit_identity.json", j.dump(2) + "\n");
  censoring["censored_exits"] = censored_total;
}

void run_criterion(const ExperimentConfig& ec, int workers, const Emitter& em,
                   std::map<std::string, std::int64_t>& censoring) {
  const auto& p = ec.criterion;
  const int d = ec.env.dimension;
  std::vector<Domain> family;
  for (DomainShape shape : p.shapes)
    for (double scale : p.domain_scales)
      family.push_back(domain_from(shape, scale * ec.env.range, p.direction, d));
  const CriterionReport rep =
      criterion_check(ec.env, p.direction, p.n_env_moments, p.scales, family,
                      p.delta, ec.integrator, p.green_n_env, p.green_n_traj,
                      p.n_boot, workers);
  json j;
  j["mean_plus"] = rep.base_moments.mean_plus;
  j["se_plus"] = rep.base_moments.se_plus;
  j["mean_minus"] = rep.base_moments.mean_minus;
  j["se_minus"] = rep.base_moments.se_minus;
  j["ratio"] = rep.base_moments.mean_minus > 0 ? json(rep.base_moments.ratio()) : json();
  j["vacuous_nonnestling"] = rep.vacuous_nonnestling;
  if (rep.vacuous_nonnestling)
    j["note"] = "drift projection never negative: uniform positivity regime";
  j["c_e_hat"] = rep.c_e_defined ? json(rep.c_e_hat) : json();
  if (rep.c_e_defined && rep.base_moments.mean_minus > 0)
    j["margin_at_c_e_hat"] = criterion_margin(
        rep.base_moments.mean_plus, rep.base_moments.mean_minus, rep.c_e_hat);
  j["scan"] = json::array();
  Csv csv({"scale", "mean_plus", "mean_minus", "ratio", "k_verdict", "eps_hat"});
  for (const auto& pt : rep.scan) {
    j["scan"].push_back({{"scale", pt.scale},
                         {"mean_plus", pt.mean_plus},
                         {"mean_minus", pt.mean_minus},
                         {"ratio", std::isfinite(pt.ratio) ? json(pt.ratio) : json()},
                         {"k_verdict", to_string(pt.k_verdict)},
                         {"eps_hat", pt.eps_hat == kInf ? json() : json(pt.eps_hat)}});
    csv.row({fmt(pt.scale), fmt(pt.mean_plus), fmt(pt.mean_minus),
             std::isfinite(pt.ratio) ? fmt(pt.ratio) : "inf",
             to_string(pt.k_verdict), pt.eps_hat == kInf ? "inf" : fmt(pt.eps_hat)});
  }
  em.emit("criterion_scan.csv", csv.str());
  em.emit("criterion.json", j.dump(2) + "\n");
  censoring["none"] = 0;
}

}  // namespace

RunManifest run_experiment(const ExperimentConfig& cfg_in, const ConfigFile& source,
                           const RunOptions& opts) {
  ExperimentConfig cfg = cfg_in;
  if (opts.output_override) cfg.output_dir = *opts.output_override;
  if (opts.seed_override) cfg.env.master_seed = *opts.seed_override;
  if (opts.workers_override) cfg.workers = *opts.workers_override;
  const int workers = cfg.workers == 0 ? hardware_workers() : cfg.workers;

  const fs::path out_dir(cfg.output_dir);
  const fs::path partial = out_dir / ".partial";
  fs::create_directories(partial);

  RunManifest man;
  man.experiment = to_string(cfg.kind);
  man.config_hash = config_hash_hex(source.text());
  man.version = version_string();
  man.output_dir = out_dir.string();

  Emitter em{partial, &man.outputs};
  const auto t0 = std::chrono::steady_clock::now();
  try {
    switch (cfg.kind) {
      case ExperimentKind::slab_ladder:
        run_slab_ladder(cfg, workers, em, man.censoring);
        break;
      case ExperimentKind::regeneration:
        run_regeneration(cfg, workers, em, man.censoring);
        break;
      case ExperimentKind::ballistic_report:
        run_ballistic(cfg, workers, em, man.censoring);
        break;
      case ExperimentKind::kalikow:
        run_kalikow(cfg, workers, em, man.censoring);
        break;
      case ExperimentKind::exit_identity:
        run_exit_identity(cfg, workers, em, man.censoring);
        break;
      case ExperimentKind::criterion:
        run_criterion(cfg, workers, em, man.censoring);
        break;
    }
  } catch (...) {
    // keep partial outputs aside for inspection instead of mixing them with
    // completed runs
    const fs::path quarantine = out_dir / "quarantine";
    std::error_code ec;
    fs::remove_all(quarantine, ec);
    fs::rename(partial, quarantine, ec);
    throw;
  }
  man.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  for (const auto& name : man.outputs) {
    std::error_code ec;
    fs::rename(partial / name, out_dir / name, ec);
    if (ec) throw std::runtime_error("finalize failed for " + name + ": " + ec.message());
  }
  {
    std::error_code ec;
    fs::remove(partial, ec);
  }

  write_file(out_dir / "config_copy.cfg", source.text());
  man.outputs.push_back("config_copy.cfg");

  json j;
  j["experiment"] = man.experiment;
  j["config_hash"] = man.config_hash;
  j["version"] = man.version;
  j["wall_time_sec"] = man.wall_time_sec;
  j["outputs"] = man.outputs;
  j["censoring"] = man.censoring;
  j["workers"] = workers;
  if (opts.seed_override) j["seed_override"] = *opts.seed_override;
  write_file(out_dir / "manifest.json", j.dump(2) + "\n");
  man.outputs.push_back("manifest.json");
  return man;
}

}  // namespace rediff
