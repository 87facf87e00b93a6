#include <doctest.h>

#include <stdexcept>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rediff/config.hpp"
#include "rediff/experiments.hpp"

using namespace rediff;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("config");

namespace {

std::string minimal_slab_config(const std::string& extra_env = "",
                                const std::string& extra_integ = "") {
  std::ostringstream ss;
  ss << "[experiment]\n"
     << "type = slab_ladder\n"
     << "output = out/test\n"
     << "workers = 1\n"
     << "[environment]\n"
     << "dimension = 1\n"
     << "range = 1.0\n"
     << "drift_bound = 1.0\n"
     << "lipschitz_K = 6.0\n"
     << "ellipticity_nu = 1.0\n"
     << "base_drift = 0.0\n"
     << "bump_intensity = 0.0\n"
     << "master_seed = 99\n"
     << extra_env
     << "[integrator]\n"
     << "step = 0.01\n"
     << "boundary_correction = bridge_test\n"
     << "max_time = 50\n"
     << extra_integ
     << "[slab_ladder]\n"
     << "direction = 1\n"
     << "depth_ratio = 1.0\n"
     << "L_values = 1\n"
     << "gammas = 1.0\n"
     << "n_traj = 200\n";
  return ss.str();
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config parsing basics") {
  const ConfigFile cf = ConfigFile::parse_string(
      "# comment\n[sec]\nkey = some value # trailing\nnum = 3\n");
  CHECK(cf.has_section("sec"));
  CHECK(cf.raw("sec", "key") == "some value");
  CHECK(cf.raw("sec", "num") == "3");
  CHECK(!cf.has("sec", "missing"));
  CHECK_THROWS_AS(ConfigFile::parse_string("[bad\n"), std::invalid_argument);
  CHECK_THROWS_AS(ConfigFile::parse_string("[s]\nnovalue\n"), std::invalid_argument);
}

TEST_CASE("valid config passes validation and loads") {
  const ConfigFile cf = ConfigFile::parse_string(minimal_slab_config());
  const ValidationReport rep = validate_config(cf);
  CHECK(rep.ok());
  const ExperimentConfig ec = load_config(cf);
  CHECK(ec.kind == ExperimentKind::slab_ladder);
  CHECK(ec.env.dimension == 1);
  CHECK(ec.slab.L_values == std::vector<double>{1.0});
}

TEST_CASE("non-integer reciprocal step is rejected with the field name") {
  std::string text = minimal_slab_config();
  const auto pos = text.find("step = 0.01");
  text.replace(pos, 11, "step = 0.03");
  const ValidationReport rep = validate_config(ConfigFile::parse_string(text));
  CHECK(!rep.ok());
  bool cited = false;
  for (const auto& f : rep.failures)
    if (f.find("integrator.step") != std::string::npos) cited = true;
  CHECK(cited);
}

TEST_CASE("oversized bump amplitudes are rejected citing the analytic bound") {
  const std::string extra =
      "bump_intensity = 2.0\nbump_amplitude_law = uniform_box\n"
      "amplitude_lo = -5\namplitude_hi = 5\n";
  std::string text = minimal_slab_config(extra);
  const auto pos = text.find("bump_intensity = 0.0\n");
  text.erase(pos, std::string("bump_intensity = 0.0\n").size());
  const ValidationReport rep = validate_config(ConfigFile::parse_string(text));
  CHECK(!rep.ok());
  bool cited = false;
  for (const auto& f : rep.failures)
    if (f.find("Lipschitz") != std::string::npos) cited = true;
  CHECK(cited);
}

TEST_CASE("unknown keys and sections are failures") {
  std::string text = minimal_slab_config() + "typo_key = 1\n";
  ValidationReport rep = validate_config(ConfigFile::parse_string(text));
  CHECK(!rep.ok());
  text = minimal_slab_config() + "[mystery]\nx = 1\n";
  rep = validate_config(ConfigFile::parse_string(text));
  CHECK(!rep.ok());
}

TEST_CASE("missing required sections are reported together") {
  const ConfigFile cf = ConfigFile::parse_string("[experiment]\ntype = regeneration\n");
  const ValidationReport rep = validate_config(cf);
  CHECK(rep.failures.size() >= 3);  // environment, integrator, coupling, params
}

TEST_CASE("config hash is stable and sensitive") {
  const std::string a = minimal_slab_config();
  CHECK(config_hash_hex(a) == config_hash_hex(a));
  CHECK(config_hash_hex(a) != config_hash_hex(a + "\n# tail\n"));
  CHECK(config_hash_hex(a).size() == 16);
}

TEST_CASE("run_experiment writes outputs, copy, and manifest deterministically") {
  const fs::path base = fs::temp_directory_path() / "rediff_test_run";
  fs::remove_all(base);
  const ConfigFile cf = ConfigFile::parse_string(minimal_slab_config());
  ExperimentConfig ec = load_config(cf);

  RunOptions opt1;
  opt1.output_override = (base / "a").string();
  const RunManifest m1 = run_experiment(ec, cf, opt1);
  RunOptions opt2;
  opt2.output_override = (base / "b").string();
  opt2.workers_override = 3;  // parallelism must not change the bytes
  const RunManifest m2 = run_experiment(ec, cf, opt2);

  for (const std::string name : {"ladder.csv", "counts.csv", "fits.csv", "summary.json"}) {
    const std::string f1 = read_file(base / "a" / name);
    const std::string f2 = read_file(base / "b" / name);
    CHECK(!f1.empty());
    CHECK(f1 == f2);
  }
  CHECK(read_file(base / "a" / "config_copy.cfg") == cf.text());
  CHECK(m1.config_hash == m2.config_hash);
  CHECK(m1.config_hash == config_hash_hex(read_file(base / "a" / "config_copy.cfg")));
  CHECK(fs::exists(base / "a" / "manifest.json"));
  fs::remove_all(base);
}

TEST_CASE("failed runs quarantine their partial outputs") {
  // a kalikow grid far beyond the per-environment budget throws mid-run
  std::ostringstream ss;
  ss << "[experiment]\ntype = kalikow\noutput = out\nworkers = 1\n"
     << "[environment]\ndimension = 2\nrange = 1.0\ndrift_bound = 1.0\n"
     << "lipschitz_K = 6.0\nellipticity_nu = 1.0\nbase_drift = 0.5 0.0\n"
     << "bump_intensity = 0.0\nmaster_seed = 7\n"
     << "[integrator]\nstep = 0.01\nboundary_correction = none\nmax_time = 10\n"
     << "[kalikow]\nshapes = ball\nscales = 4000\ndelta = 0.25\nn_env = 64\n"
     << "n_traj = 100\ndirection = 1 0\n";
  const ConfigFile cf = ConfigFile::parse_string(ss.str());
  const ValidationReport rep = validate_config(cf);
  REQUIRE(rep.ok());
  ExperimentConfig ec = load_config(cf);
  const fs::path base = fs::temp_directory_path() / "rediff_test_quarantine";
  fs::remove_all(base);
  RunOptions opts;
  opts.output_override = base.string();
  CHECK_THROWS_AS(run_experiment(ec, cf, opts), std::runtime_error);
  CHECK(fs::exists(base / "quarantine"));
  fs::remove_all(base);
}

TEST_CASE("seed override changes outputs and is recorded") {
  const fs::path base = fs::temp_directory_path() / "rediff_test_seed";
  fs::remove_all(base);
  const ConfigFile cf = ConfigFile::parse_string(minimal_slab_config());
  ExperimentConfig ec = load_config(cf);
  RunOptions o1, o2;
  o1.output_override = (base / "a").string();
  o2.output_override = (base / "b").string();
  o2.seed_override = 123456;
  run_experiment(ec, cf, o1);
  run_experiment(ec, cf, o2);
  CHECK(read_file(base / "a" / "counts.csv") != read_file(base / "b" / "counts.csv"));
  CHECK(read_file(base / "b" / "manifest.json").find("seed_override") != std::string::npos);
  fs::remove_all(base);
}

TEST_CASE("experiment catalog names every family") {
  const auto cat = experiment_catalog();
  REQUIRE(cat.size() == 6);
  for (const auto& [name, desc] : cat) {
    CHECK(experiment_from_string(name).has_value());
    CHECK(!desc.empty());
  }
}

TEST_SUITE_END();
