#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssacgan/data.hpp"
#include "ssacgan/eval.hpp"
#include "ssacgan/trainer.hpp"

namespace ssacgan {

/// Bad or unknown configuration keys/values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataSection {
  std::filesystem::path dir;    // dataset written by `synth`; empty: build the phantom in memory
  std::filesystem::path split;  // split manifest; empty: split with split_seed
  PhantomSpec phantom;
  std::size_t subjects = 40;    // in-memory phantom only
  std::uint64_t split_seed = 0;
  SplitRatios ratios = kDefaultSplitRatios;
};

struct EvalSection {
  std::vector<double> sigmas = kDefaultNoiseSigmas;
  std::uint64_t noise_seed = 0;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
};

/// JSON document with sections `data`, `train`, `eval`. Every key is
/// optional; unknown keys are rejected.
struct ExperimentConfig {
  DataSection data;
  TrainConfig train;
  EvalSection eval;
};

ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
std::string experiment_config_json(const ExperimentConfig& cfg);

/// A standalone phantom spec document (the keys of `data.phantom`).
PhantomSpec parse_phantom_spec(const std::string& json_text);
PhantomSpec load_phantom_spec(const std::filesystem::path& path);

struct PreparedData {
  Dataset dataset;
  DatasetSplit split;
};

/// Loads (or synthesizes) the dataset and its split as described by `data`.
PreparedData prepare_data(const DataSection& data);

/// Files written into a run directory.
inline constexpr const char* kCheckpointFile = "checkpoint.ssck";
inline constexpr const char* kLossLogFile = "loss_log.csv";
inline constexpr const char* kEffectiveConfigFile = "effective_config.json";

struct SeedRunOptions {
  bool resume = false;               // continue from the run directory's checkpoint
  bool allow_config_mismatch = false;
  std::function<void(const std::string&)> warn;
};

/// Trains cfg.train (its seed included) into `run_dir`: effective config,
/// loss log streamed row by row, checkpoint at cadence and at the end.
TrainingState train_seed(const ExperimentConfig& cfg, const TrainingData& data, const std::filesystem::path& run_dir,
                         const SeedRunOptions& options = {});

}  // namespace ssacgan
