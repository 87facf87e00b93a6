#include "rediff/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace rediff {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

ConfigFile ConfigFile::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str(), path);
}

ConfigFile ConfigFile::parse_string(const std::string& text, const std::string& name) {
  ConfigFile cf;
  cf.name_ = name;
  cf.text_ = text;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument(name + ":" + std::to_string(lineno) +
                                    ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      cf.data_[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(name + ":" + std::to_string(lineno) +
                                  ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument(name + ":" + std::to_string(lineno) + ": empty key");
    cf.data_[section].push_back({key, val});
  }
  return cf;
}

bool ConfigFile::has_section(const std::string& s) const { return data_.count(s) > 0; }

bool ConfigFile::has(const std::string& s, const std::string& k) const {
  return raw(s, k).has_value();
}

std::optional<std::string> ConfigFile::raw(const std::string& s,
                                           const std::string& k) const {
  const auto it = data_.find(s);
  if (it == data_.end()) return std::nullopt;
  for (const auto& [key, val] : it->second)
    if (key == k) return val;
  return std::nullopt;
}

std::vector<std::string> ConfigFile::keys(const std::string& s) const {
  std::vector<std::string> out;
  const auto it = data_.find(s);
  if (it == data_.end()) return out;
  for (const auto& [key, val] : it->second) out.push_back(key);
  return out;
}

std::vector<std::string> ConfigFile::sections() const {
  std::vector<std::string> out;
  for (const auto& [sec, kv] : data_) out.push_back(sec);
  return out;
}

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::slab_ladder: return "slab_ladder";
    case ExperimentKind::regeneration: return "regeneration";
    case ExperimentKind::ballistic_report: return "ballistic_report";
    case ExperimentKind::kalikow: return "kalikow";
    case ExperimentKind::exit_identity: return "exit_identity";
    case ExperimentKind::criterion: return "criterion";
  }
  return "?";
}

std::optional<ExperimentKind> experiment_from_string(const std::string& s) {
  for (auto k : {ExperimentKind::slab_ladder, ExperimentKind::regeneration,
                 ExperimentKind::ballistic_report, ExperimentKind::kalikow,
                 ExperimentKind::exit_identity, ExperimentKind::criterion})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

namespace {

/// Collects parse problems instead of throwing so `validate` can list every
/// offending field at once.
class Reader {
 public:
  Reader(const ConfigFile& cf, ValidationReport& rep) : cf_(cf), rep_(rep) {}

  void fail(const std::string& msg) { rep_.failures.push_back(msg); }
  void warn(const std::string& msg) { rep_.warnings.push_back(msg); }

  double number(const std::string& sec, const std::string& key, double fallback,
                bool required = false) {
    const auto raw = cf_.raw(sec, key);
    if (!raw) {
      if (required) fail(sec + "." + key + ": missing required key");
      return fallback;
    }
    try {
      std::size_t used = 0;
      const double v = std::stod(*raw, &used);
      if (trimmed_rest(*raw, used)) {
        fail(sec + "." + key + ": trailing characters in number '" + *raw + "'");
        return fallback;
      }
      return v;
    } catch (const std::exception&) {
      fail(sec + "." + key + ": not a number: '" + *raw + "'");
      return fallback;
    }
  }

  std::int64_t integer(const std::string& sec, const std::string& key,
                       std::int64_t fallback, bool required = false) {
    const double v = number(sec, key, static_cast<double>(fallback), required);
    const auto r = static_cast<std::int64_t>(std::llround(v));
    if (static_cast<double>(r) != v)
      fail(sec + "." + key + ": expected an integer");
    return r;
  }

  std::uint64_t u64(const std::string& sec, const std::string& key,
                    std::uint64_t fallback, bool required = false) {
    const auto raw = cf_.raw(sec, key);
    if (!raw) {
      if (required) fail(sec + "." + key + ": missing required key");
      return fallback;
    }
    try {
      std::size_t used = 0;
      const std::uint64_t v = std::stoull(*raw, &used);
      if (trimmed_rest(*raw, used)) {
        fail(sec + "." + key + ": trailing characters in integer");
        return fallback;
      }
      return v;
    } catch (const std::exception&) {
      fail(sec + "." + key + ": not an unsigned integer: '" + *raw + "'");
      return fallback;
    }
  }

  bool boolean(const std::string& sec, const std::string& key, bool fallback) {
    const auto raw = cf_.raw(sec, key);
    if (!raw) return fallback;
    if (*raw == "true" || *raw == "1") return true;
    if (*raw == "false" || *raw == "0") return false;
    fail(sec + "." + key + ": expected true/false");
    return fallback;
  }

  std::string text(const std::string& sec, const std::string& key,
                   const std::string& fallback, bool required = false) {
    const auto raw = cf_.raw(sec, key);
    if (!raw && required) fail(sec + "." + key + ": missing required key");
    return raw.value_or(fallback);
  }

  std::vector<double> numbers(const std::string& sec, const std::string& key,
                              std::vector<double> fallback, bool required = false) {
    const auto raw = cf_.raw(sec, key);
    if (!raw) {
      if (required) fail(sec + "." + key + ": missing required key");
      return fallback;
    }
    std::vector<double> out;
    std::istringstream ss(*raw);
    std::string tok;
    while (ss >> tok) {
      try {
        out.push_back(std::stod(tok));
      } catch (const std::exception&) {
        fail(sec + "." + key + ": not a number list: '" + *raw + "'");
        return fallback;
      }
    }
    if (out.empty()) {
      fail(sec + "." + key + ": empty list");
      return fallback;
    }
    return out;
  }

  Vec vec(const std::string& sec, const std::string& key, int dim, Vec fallback,
          bool required = false) {
    const auto values = numbers(sec, key, fallback.to_vector(), required);
    if (static_cast<int>(values.size()) != dim) {
      fail(sec + "." + key + ": expected " + std::to_string(dim) + " components");
      return fallback;
    }
    return Vec::from(values);
  }

 private:
  static bool trimmed_rest(const std::string& s, std::size_t used) {
    for (std::size_t i = used; i < s.size(); ++i)
      if (!std::isspace(static_cast<unsigned char>(s[i]))) return true;
    return false;
  }
  const ConfigFile& cf_;
  ValidationReport& rep_;
};

const std::map<std::string, std::set<std::string>>& allowed_keys() {
  static const std::map<std::string, std::set<std::string>> allowed = {
      {"experiment", {"type", "output", "workers"}},
      {"environment",
       {"dimension", "range", "drift_bound", "lipschitz_K", "ellipticity_nu",
        "base_drift", "bump_intensity", "bump_amplitude_law", "amplitude_value",
        "amplitude_lo", "amplitude_hi", "amplitude_radius", "sigma_mode",
        "sigma_amplitude", "master_seed"}},
      {"integrator", {"step", "boundary_correction", "max_time"}},
      {"coupling", {"direction", "success_p", "mode", "bridge_max_rejects"}},
      {"slab_ladder",
       {"direction", "depth_ratio", "L_values", "gammas", "n_traj", "n_dirs",
        "cone_half_angle", "neighborhood_gamma", "emit_events", "env_mode"}},
      {"regeneration",
       {"horizon", "n_traj", "confirm_window", "min_blocks", "n_permutations"}},
      {"ballistic_report",
       {"horizon", "n_traj", "n_long", "long_T", "confirm_window", "tau_gamma"}},
      {"kalikow", {"shapes", "scales", "delta", "n_env", "n_traj", "n_boot", "direction"}},
      {"exit_identity",
       {"radius", "n", "n_perms", "field_n_env", "field_n_traj", "n_seeds"}},
      {"criterion",
       {"direction", "scales", "shapes", "domain_scales", "delta",
        "n_env_moments", "green_n_env", "green_n_traj", "n_boot"}},
  };
  return allowed;
}

std::vector<DomainShape> parse_shapes(Reader& r, const ConfigFile& cf,
                                      const std::string& sec,
                                      std::vector<DomainShape> fallback) {
  const auto raw = cf.raw(sec, "shapes");
  if (!raw) return fallback;
  std::vector<DomainShape> out;
  std::istringstream ss(*raw);
  std::string tok;
  while (ss >> tok) {
    if (tok == "ball")
      out.push_back(DomainShape::ball);
    else if (tok == "box")
      out.push_back(DomainShape::box);
    else if (tok == "slab_with_caps")
      out.push_back(DomainShape::slab_with_caps);
    else
      r.fail(sec + ".shapes: unknown shape '" + tok + "'");
  }
  if (out.empty()) r.fail(sec + ".shapes: empty");
  return out;
}

ExperimentConfig parse(const ConfigFile& cf, ValidationReport& rep) {
  ExperimentConfig ec;
  Reader r(cf, rep);

  // unknown sections/keys are reported: typos must not silently change runs
  for (const auto& sec : cf.sections()) {
    const auto it = allowed_keys().find(sec);
    if (it == allowed_keys().end()) {
      rep.failures.push_back("unknown section [" + sec + "]");
      continue;
    }
    for (const auto& key : cf.keys(sec))
      if (!it->second.count(key))
        rep.failures.push_back("unknown key " + sec + "." + key);
  }

  const std::string type = r.text("experiment", "type", "", true);
  if (const auto k = experiment_from_string(type)) {
    ec.kind = *k;
  } else if (!type.empty()) {
    rep.failures.push_back("experiment.type: unknown experiment '" + type + "'");
  }
  ec.output_dir = r.text("experiment", "output", "out");
  ec.workers = static_cast<int>(r.integer("experiment", "workers", 0));
  if (ec.workers < 0) rep.failures.push_back("experiment.workers must be >= 0");

  if (!cf.has_section("environment")) {
    rep.failures.push_back("missing required section [environment]");
  } else {
    EnvironmentSpec& e = ec.env;
    e.dimension = static_cast<int>(r.integer("environment", "dimension", 2, true));
    if (e.dimension < 1 || e.dimension > kMaxDim) {
      rep.failures.push_back("environment.dimension out of range");
      e.dimension = 2;
    }
    e.range = r.number("environment", "range", 1.0, true);
    e.drift_bound = r.number("environment", "drift_bound", 1.0, true);
    e.lipschitz_k = r.number("environment", "lipschitz_K", 5.0, true);
    e.ellipticity_nu = r.number("environment", "ellipticity_nu", 1.0, true);
    e.base_drift = r.vec("environment", "base_drift", e.dimension,
                         Vec::zero(e.dimension), true);
    e.bump_intensity = r.number("environment", "bump_intensity", 0.0, true);
    const std::string law = r.text("environment", "bump_amplitude_law", "uniform_box");
    if (law == "constant")
      e.amplitude_law = AmplitudeLaw::constant;
    else if (law == "uniform_ball")
      e.amplitude_law = AmplitudeLaw::uniform_ball;
    else if (law == "uniform_box")
      e.amplitude_law = AmplitudeLaw::uniform_box;
    else
      rep.failures.push_back("environment.bump_amplitude_law: unknown law '" + law + "'");
    e.amplitude_value =
        r.vec("environment", "amplitude_value", e.dimension, Vec::zero(e.dimension));
    e.amplitude_lo =
        r.vec("environment", "amplitude_lo", e.dimension, Vec::zero(e.dimension),
              e.bump_intensity > 0 && e.amplitude_law == AmplitudeLaw::uniform_box);
    e.amplitude_hi =
        r.vec("environment", "amplitude_hi", e.dimension, Vec::zero(e.dimension),
              e.bump_intensity > 0 && e.amplitude_law == AmplitudeLaw::uniform_box);
    e.amplitude_radius = r.number("environment", "amplitude_radius", 0.0);
    const std::string sm = r.text("environment", "sigma_mode", "identity");
    if (sm == "identity")
      e.sigma_mode = SigmaMode::identity;
    else if (sm == "scalar_field")
      e.sigma_mode = SigmaMode::scalar_field;
    else
      rep.failures.push_back("environment.sigma_mode: unknown mode '" + sm + "'");
    e.sigma_amplitude = r.number("environment", "sigma_amplitude", 0.0);
    e.master_seed = r.u64("environment", "master_seed", 1, true);
    for (const auto& msg : e.validation_errors()) rep.failures.push_back(msg);
    if (e.expected_field_magnitude() > 0.8 * e.drift_bound)
      rep.warnings.push_back(
          "environment: expected field magnitude exceeds 0.8*drift_bound; the "
          "radial clip will engage often");
  }

  if (!cf.has_section("integrator")) {
    rep.failures.push_back("missing required section [integrator]");
  } else {
    ec.integrator.step = r.number("integrator", "step", 0.01, true);
    const std::string bc = r.text("integrator", "boundary_correction", "bridge_test");
    if (bc == "none")
      ec.integrator.correction = BoundaryCorrection::none;
    else if (bc == "bridge_test")
      ec.integrator.correction = BoundaryCorrection::bridge_test;
    else
      rep.failures.push_back("integrator.boundary_correction: unknown value '" + bc + "'");
    ec.integrator.max_time = r.number("integrator", "max_time", 1000, true);
    for (const auto& msg : ec.integrator.validation_errors())
      rep.failures.push_back(msg);
  }

  const bool needs_coupling = ec.kind == ExperimentKind::regeneration ||
                              ec.kind == ExperimentKind::ballistic_report;
  ec.has_coupling = cf.has_section("coupling");
  if (needs_coupling && !ec.has_coupling)
    rep.failures.push_back("missing required section [coupling] for experiment " +
                           to_string(ec.kind));
  if (ec.has_coupling) {
    ec.coupling.l =
        r.vec("coupling", "direction", ec.env.dimension, Vec::basis(ec.env.dimension, 0), true);
    ec.coupling.success_p = r.number("coupling", "success_p", 0.05, true);
    const std::string mode = r.text("coupling", "mode", "geometric_bridge");
    if (mode == "geometric_bridge")
      ec.coupling.mode = CouplingConfig::Mode::geometric_bridge;
    else if (mode == "weighted_bridge")
      ec.coupling.mode = CouplingConfig::Mode::weighted_bridge;
    else
      rep.failures.push_back("coupling.mode: unknown mode '" + mode + "'");
    ec.coupling.bridge_max_rejects =
        static_cast<int>(r.integer("coupling", "bridge_max_rejects", 64));
    for (const auto& msg : ec.coupling.validation_errors()) rep.failures.push_back(msg);
  }

  auto require_unit = [&](Vec& v, const std::string& where) {
    if (v.dim() != ec.env.dimension) return;
    const double n = v.norm();
    if (n <= 0) {
      rep.failures.push_back(where + ": zero direction");
      return;
    }
    if (std::abs(n - 1.0) > 1e-12) {
      if (std::abs(n - 1.0) < 1e-6)
        v *= 1.0 / n;  // tolerate rounded config values
      else
        rep.failures.push_back(where + ": direction must be unit length");
    }
  };

  switch (ec.kind) {
    case ExperimentKind::slab_ladder: {
      if (!cf.has_section("slab_ladder")) {
        rep.failures.push_back("missing required section [slab_ladder]");
        break;
      }
      auto& p = ec.slab;
      p.direction = r.vec("slab_ladder", "direction", ec.env.dimension,
                          Vec::basis(ec.env.dimension, 0), true);
      require_unit(p.direction, "slab_ladder.direction");
      p.depth_ratio = r.number("slab_ladder", "depth_ratio", 1.0, true);
      if (p.depth_ratio <= 0) rep.failures.push_back("slab_ladder.depth_ratio must be > 0");
      p.L_values = r.numbers("slab_ladder", "L_values", {}, true);
      p.gammas = r.numbers("slab_ladder", "gammas", p.gammas);
      p.n_traj = r.integer("slab_ladder", "n_traj", 1000, true);
      if (p.n_traj < 100) rep.failures.push_back("slab_ladder.n_traj must be >= 100");
      p.n_dirs = static_cast<int>(r.integer("slab_ladder", "n_dirs", 0));
      if (ec.env.dimension > 1 && p.n_dirs != 0 && p.n_dirs < 3)
        rep.failures.push_back("slab_ladder.n_dirs must be 0 or >= 3");
      p.cone_half_angle = r.number("slab_ladder", "cone_half_angle", 0.2);
      p.neighborhood_gamma = r.number("slab_ladder", "neighborhood_gamma", 1.0);
      p.emit_events = r.boolean("slab_ladder", "emit_events", false);
      const std::string em = r.text("slab_ladder", "env_mode", "annealed");
      if (em == "quenched")
        p.quenched = true;
      else if (em != "annealed")
        rep.failures.push_back("slab_ladder.env_mode: expected annealed or quenched");
      break;
    }
    case ExperimentKind::regeneration: {
      if (!cf.has_section("regeneration")) {
        rep.failures.push_back("missing required section [regeneration]");
        break;
      }
      auto& p = ec.regen;
      p.horizon = r.integer("regeneration", "horizon", 1000, true);
      p.n_traj = r.integer("regeneration", "n_traj", 100, true);
      p.confirm_window = r.number("regeneration", "confirm_window", 25);
      p.min_blocks = static_cast<int>(r.integer("regeneration", "min_blocks", 200));
      p.n_permutations = static_cast<int>(r.integer("regeneration", "n_permutations", 1000));
      if (p.horizon < 2) rep.failures.push_back("regeneration.horizon must be >= 2");
      if (p.n_traj < 1) rep.failures.push_back("regeneration.n_traj must be >= 1");
      break;
    }
    case ExperimentKind::ballistic_report: {
      if (!cf.has_section("ballistic_report")) {
        rep.failures.push_back("missing required section [ballistic_report]");
        break;
      }
      auto& p = ec.ballistic;
      p.horizon = r.integer("ballistic_report", "horizon", 1000, true);
      p.n_traj = r.integer("ballistic_report", "n_traj", 100, true);
      p.n_long = r.integer("ballistic_report", "n_long", 50, true);
      p.long_T = r.number("ballistic_report", "long_T", 200, true);
      p.confirm_window = r.number("ballistic_report", "confirm_window", 25);
      p.tau_gamma = r.number("ballistic_report", "tau_gamma", 1.0);
      if (p.n_long < 2) rep.failures.push_back("ballistic_report.n_long must be >= 2");
      break;
    }
    case ExperimentKind::kalikow: {
      if (!cf.has_section("kalikow")) {
        rep.failures.push_back("missing required section [kalikow]");
        break;
      }
      auto& p = ec.kalikow;
      p.shapes = parse_shapes(r, cf, "kalikow", p.shapes);
      p.scales = r.numbers("kalikow", "scales", p.scales);
      p.delta = r.number("kalikow", "delta", 0.25, true);
      p.n_env = static_cast<int>(r.integer("kalikow", "n_env", 32, true));
      p.n_traj = r.integer("kalikow", "n_traj", 1000, true);
      p.n_boot = static_cast<int>(r.integer("kalikow", "n_boot", 200));
      p.direction = r.vec("kalikow", "direction", ec.env.dimension,
                          Vec::basis(ec.env.dimension, 0), true);
      require_unit(p.direction, "kalikow.direction");
      if (p.delta > ec.env.range / 4 + 1e-12)
        rep.failures.push_back("kalikow.delta must be <= range/4");
      if (p.n_env < 1) rep.failures.push_back("kalikow.n_env must be >= 1");
      break;
    }
    case ExperimentKind::exit_identity: {
      if (!cf.has_section("exit_identity")) {
        rep.failures.push_back("missing required section [exit_identity]");
        break;
      }
      auto& p = ec.exit_identity;
      p.radius = r.number("exit_identity", "radius", 12, true);
      p.n = r.integer("exit_identity", "n", 4000, true);
      p.n_perms = static_cast<int>(r.integer("exit_identity", "n_perms", 199));
      p.field_n_env = static_cast<int>(r.integer("exit_identity", "field_n_env", 64));
      p.field_n_traj = r.integer("exit_identity", "field_n_traj", 600);
      p.n_seeds = static_cast<int>(r.integer("exit_identity", "n_seeds", 1));
      if (p.n < 100) rep.failures.push_back("exit_identity.n must be >= 100");
      if (ec.env.sigma_mode != SigmaMode::identity)
        rep.failures.push_back(
            "exit_identity requires sigma_mode = identity (unit auxiliary noise)");
      break;
    }
    case ExperimentKind::criterion: {
      if (!cf.has_section("criterion")) {
        rep.failures.push_back("missing required section [criterion]");
        break;
      }
      auto& p = ec.criterion;
      p.direction = r.vec("criterion", "direction", ec.env.dimension,
                          Vec::basis(ec.env.dimension, 0), true);
      require_unit(p.direction, "criterion.direction");
      p.scales = r.numbers("criterion", "scales", p.scales);
      p.shapes = parse_shapes(r, cf, "criterion", p.shapes);
      p.domain_scales = r.numbers("criterion", "domain_scales", p.domain_scales);
      p.delta = r.number("criterion", "delta", 0.25, true);
      p.n_env_moments = r.integer("criterion", "n_env_moments", 2000);
      p.green_n_env = static_cast<int>(r.integer("criterion", "green_n_env", 32));
      p.green_n_traj = r.integer("criterion", "green_n_traj", 1000);
      p.n_boot = static_cast<int>(r.integer("criterion", "n_boot", 200));
      if (p.delta > ec.env.range / 4 + 1e-12)
        rep.failures.push_back("criterion.delta must be <= range/4");
      if (ec.env.sigma_mode != SigmaMode::identity)
        rep.failures.push_back("criterion requires sigma_mode = identity");
      break;
    }
  }
  return ec;
}

}  // namespace

ValidationReport validate_config(const ConfigFile& cf) {
  ValidationReport rep;
  parse(cf, rep);
  return rep;
}

ExperimentConfig load_config(const ConfigFile& cf) {
  ValidationReport rep;
  ExperimentConfig ec = parse(cf, rep);
  if (!rep.ok()) throw std::invalid_argument("invalid config: " + rep.failures.front());
  return ec;
}

std::string config_hash_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace rediff
