#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rediff/environment.hpp"
#include "rediff/kalikow.hpp"
#include "rediff/regeneration.hpp"
#include "rediff/sde.hpp"

namespace rediff {

/// Flat sectioned key-value configuration: `[section]` headers, `key = value`
/// lines, `#` comments. One file describes one run.
class ConfigFile {
 public:
  static ConfigFile parse_file(const std::string& path);
  static ConfigFile parse_string(const std::string& text, const std::string& name = "<string>");

  bool has_section(const std::string& s) const;
  bool has(const std::string& s, const std::string& k) const;
  std::optional<std::string> raw(const std::string& s, const std::string& k) const;
  std::vector<std::string> keys(const std::string& s) const;
  std::vector<std::string> sections() const;
  const std::string& text() const { return text_; }
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  std::string text_;
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> data_;
};

enum class ExperimentKind {
  slab_ladder,
  regeneration,
  ballistic_report,
  kalikow,
  exit_identity,
  criterion,
};

std::string to_string(ExperimentKind k);
std::optional<ExperimentKind> experiment_from_string(const std::string& s);

struct SlabLadderParams {
  Vec direction;
  double depth_ratio = 1.0;
  std::vector<double> L_values;
  std::vector<double> gammas{0.4, 0.6, 0.8, 1.0};
  std::int64_t n_traj = 1000;
  int n_dirs = 0;  // 0 disables the directional neighborhood scan
  double cone_half_angle = 0.2;
  double neighborhood_gamma = 1.0;
  bool emit_events = false;
  bool quenched = false;  // reuse one environment instead of one per trajectory
};

struct RegenerationParams {
  std::int64_t horizon = 1000;
  std::int64_t n_traj = 100;
  double confirm_window = 25;
  int min_blocks = 200;
  int n_permutations = 1000;
};

struct BallisticParams {
  std::int64_t horizon = 1000;
  std::int64_t n_traj = 100;
  std::int64_t n_long = 50;
  double long_T = 200;
  double confirm_window = 25;
  double tau_gamma = 1.0;
};

struct KalikowParams {
  std::vector<DomainShape> shapes{DomainShape::ball, DomainShape::box};
  std::vector<double> scales{12, 24, 48};  // in units of R
  double delta = 0.25;
  int n_env = 32;
  std::int64_t n_traj = 1000;
  int n_boot = 200;
  Vec direction;
};

struct ExitIdentityParams {
  double radius = 12;  // in units of R
  std::int64_t n = 4000;
  int n_perms = 199;
  int field_n_env = 64;
  std::int64_t field_n_traj = 600;
  int n_seeds = 1;
};

struct CriterionParams {
  Vec direction;
  std::vector<double> scales{0.0, 0.5, 1.0};
  std::vector<DomainShape> shapes{DomainShape::ball};
  std::vector<double> domain_scales{12};
  double delta = 0.25;
  std::int64_t n_env_moments = 2000;
  int green_n_env = 32;
  std::int64_t green_n_traj = 1000;
  int n_boot = 200;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::slab_ladder;
  std::string output_dir = "out";
  int workers = 0;  // 0 = hardware parallelism
  EnvironmentSpec env;
  IntegratorConfig integrator;
  CouplingConfig coupling;
  bool has_coupling = false;
  SlabLadderParams slab;
  RegenerationParams regen;
  BallisticParams ballistic;
  KalikowParams kalikow;
  ExitIdentityParams exit_identity;
  CriterionParams criterion;
};

struct ValidationReport {
  std::vector<std::string> failures;
  std::vector<std::string> warnings;
  bool ok() const { return failures.empty(); }
};

/// Structural and invariant checks; never simulates.
ValidationReport validate_config(const ConfigFile& cf);

/// Parses into a typed config; throws std::invalid_argument with the first
/// validation failure if the file is invalid.
ExperimentConfig load_config(const ConfigFile& cf);

/// FNV-1a of the raw config bytes; stored in the manifest and recomputable
/// from the archived copy.
std::string config_hash_hex(const std::string& bytes);

}  // namespace rediff
