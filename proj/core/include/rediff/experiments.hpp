#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rediff/config.hpp"

namespace rediff {

struct RunOptions {
  std::optional<std::string> output_override;
  std::optional<std::uint64_t> seed_override;
  std::optional<int> workers_override;
};

struct RunManifest {
  std::string experiment;
  std::string config_hash;
  std::string version;
  double wall_time_sec = 0;
  std::vector<std::string> outputs;  // file names relative to the output dir
  std::map<std::string, std::int64_t> censoring;
  std::string output_dir;
};

/// Executes the configured experiment. All outputs plus a verbatim copy of
/// the config and the manifest land in the output directory; partial outputs
/// of a failed run are moved to a quarantine subdirectory. Identical (config,
/// version) pairs produce byte-identical tabular outputs for any worker
/// count.
RunManifest run_experiment(const ExperimentConfig& cfg, const ConfigFile& source,
                           const RunOptions& opts = {});

std::string version_string();

/// The experiment families exposed by the runner, with one-line summaries.
std::vector<std::pair<std::string, std::string>> experiment_catalog();

}  // namespace rediff
