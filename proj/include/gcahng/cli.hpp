#pragma once

// Command-line front end: synth-data, train, eval, inspect, ablate.
// A run is described by one JSON document with "data", "train" and "eval"
// sections, layered defaults < --config file < flags.

#include "gcahng/datakit.hpp"
#include "gcahng/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace gcahng::cli {

struct DataSection {
  std::string path;  // feature file; empty -> generate from `synthetic`
  SyntheticDatasetSpec synthetic{};
  double holdout_fraction = 0.2;
};

struct EvalSection {
  std::vector<int> ks = {1, 2, 4, 8};
};

struct RunConfig {
  DataSection data;
  TrainConfig train;
  EvalSection eval;
};

nlohmann::ordered_json to_json(const RunConfig& cfg);
/// Strict: unknown keys in any section raise ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

/// Dataset named by the config; split into (train, held-out) with a stream
/// derived from the data seed only, so every arm and training seed sees the
/// same split.
std::pair<Dataset, Dataset> load_and_split(const DataSection& data);

/// run-<first 8 hex of the config hash>-s<seed>
std::string run_directory_name(const RunConfig& cfg);

struct ArmSummary {
  std::string arm;
  std::vector<MetricReport> reports;  // one per seed
};

/// arm,seeds,r@K_mean,r@K_std for each K,rp_mean,rp_std,map_at_r_mean,map_at_r_std
std::string ablation_csv_header(std::span<const int> ks);
std::string ablation_csv_row(const ArmSummary& s, std::span<const int> ks);

/// Full command-line entry point. Returns the process exit code:
/// 0 success, 1 other failure, 2 configuration error, 3 numeric abort.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gcahng::cli
