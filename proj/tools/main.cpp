// Experiment runner: binds configuration files to the experiment families
// with deterministic reproduction and result persistence.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "rediff/config.hpp"
#include "rediff/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"rediff: Monte Carlo laboratory for diffusions in random media"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output_dir;
  int workers = -1;
  std::uint64_t seed_override = 0;
  bool have_seed_override = false;

  auto* run = app.add_subcommand("run", "execute the experiment described by a config");
  run->add_option("--config", config_path, "path to the run configuration")->required();
  run->add_option("--output", output_dir, "override the output directory");
  run->add_option("--workers", workers, "worker threads (default: hardware parallelism)");
  run->add_option("--seed-override", seed_override, "replace the master seed")
      ->each([&](const std::string&) { have_seed_override = true; });

  auto* validate = app.add_subcommand("validate", "check a config without simulating");
  validate->add_option("--config", config_path, "path to the run configuration")->required();

  app.add_subcommand("list-experiments", "print the available experiment families");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("list-experiments")) {
      for (const auto& [name, summary] : rediff::experiment_catalog())
        std::printf("%-18s %s\n", name.c_str(), summary.c_str());
      return 0;
    }

    const rediff::ConfigFile cf = rediff::ConfigFile::parse_file(config_path);

    if (app.got_subcommand("validate")) {
      const rediff::ValidationReport rep = rediff::validate_config(cf);
      for (const auto& w : rep.warnings) std::printf("warning: %s\n", w.c_str());
      if (rep.ok()) {
        std::printf("ok: %s\n", config_path.c_str());
        return 0;
      }
      for (const auto& f : rep.failures) std::printf("failure: %s\n", f.c_str());
      return 1;
    }

    const rediff::ValidationReport rep = rediff::validate_config(cf);
    if (!rep.ok()) {
      for (const auto& f : rep.failures)
        std::fprintf(stderr, "config failure: %s\n", f.c_str());
      return 1;
    }
    for (const auto& w : rep.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());

    rediff::ExperimentConfig ec = rediff::load_config(cf);
    rediff::RunOptions opts;
    if (!output_dir.empty()) opts.output_override = output_dir;
    if (have_seed_override) opts.seed_override = seed_override;
    if (workers >= 0) opts.workers_override = workers;

    const rediff::RunManifest man = rediff::run_experiment(ec, cf, opts);
    std::printf("%s: wrote %zu files to %s (%.1fs)\n", man.experiment.c_str(),
                man.outputs.size(), man.output_dir.c_str(), man.wall_time_sec);
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
