// ssacgan: synth | split | train | eval | infer

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "ssacgan/experiment.hpp"
#include "ssacgan/parallel.hpp"

namespace fs = std::filesystem;
using namespace ssacgan;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kDiverged = 3 };

// Turns the library's exceptions into exit codes.
int report_failure(const std::exception_ptr& error) {
  try {
    std::rethrow_exception(error);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDiverged;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const VolumeFormatError& e) {
    std::cerr << "volume error: " << e.what() << '\n';
    return kData;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
}

struct DataFlags {
  std::string config;
  std::string data;
  std::string split;
};

void add_data_flags(CLI::App* cmd, DataFlags& f) {
  cmd->add_option("--config", f.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--data", f.data, "Dataset directory written by synth (default: config's data section)");
  cmd->add_option("--split", f.split, "Split manifest written by split (default: split with data.split_seed)");
}

// Config file first, then flags on top.
ExperimentConfig resolve_config(const DataFlags& f) {
  ExperimentConfig cfg = f.config.empty() ? ExperimentConfig{} : load_experiment_config(f.config);
  if (!f.data.empty()) cfg.data.dir = f.data;
  if (!f.split.empty()) cfg.data.split = f.split;
  return cfg;
}

// ---------------------------------------------------------------------------

struct SynthFlags {
  std::string spec;
  std::string out;
  std::size_t subjects = 40;
  std::optional<std::uint64_t> seed;
};

int run_synth(const SynthFlags& f) {
  PhantomSpec spec = f.spec.empty() ? PhantomSpec{} : load_phantom_spec(f.spec);
  if (f.seed) spec.seed = *f.seed;
  const auto ids = write_phantom_dataset(spec, f.subjects, f.out);
  std::cout << "wrote " << ids.size() << " subjects to " << f.out << '\n';
  return kOk;
}

struct SplitFlags {
  std::string data;
  std::string out;
  std::uint64_t seed = 0;
  std::vector<double> ratios;
};

int run_split(const SplitFlags& f) {
  SplitRatios ratios = kDefaultSplitRatios;
  if (!f.ratios.empty()) {
    if (f.ratios.size() != ratios.size()) throw ConfigError("--ratios takes exactly 5 values");
    std::copy(f.ratios.begin(), f.ratios.end(), ratios.begin());
  }
  const Dataset dataset = load_dataset(f.data);
  Rng rng(f.seed);
  const DatasetSplit split = split_dataset(dataset.ids(), ratios, rng);
  save_split(split, f.out);
  const auto n = split.sizes();
  std::cout << "split " << n[0] << '/' << n[1] << '/' << n[2] << '/' << n[3] << '/' << n[4] << " -> " << f.out
            << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct TrainFlags {
  DataFlags data;
  std::string regime;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::optional<std::size_t> epochs;
  std::size_t jobs = 1;
  bool resume = false;
  bool allow_config_mismatch = false;
};

fs::path seed_dir(const fs::path& out, std::uint64_t seed) { return out / ("seed_" + std::to_string(seed)); }

int run_train(const TrainFlags& f) {
  ExperimentConfig cfg = resolve_config(f.data);
  if (!f.regime.empty()) cfg.train.regime = parse_regime(f.regime);
  if (f.epochs) {
    // keep the constant/decay proportion of the configured schedule
    const double share = double(cfg.train.lr_constant_epochs) / double(cfg.train.epochs);
    cfg.train.epochs = *f.epochs;
    cfg.train.lr_constant_epochs = std::size_t(share * double(*f.epochs));
  }
  validate(cfg.train);

  const PreparedData prepared = prepare_data(cfg.data);
  const TrainingData data = make_training_data(prepared.dataset, prepared.split, cfg.train.min_foreground);
  fs::create_directories(f.out);
  save_split(prepared.split, fs::path(f.out) / "split.json");

  std::mutex io;
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(f.seeds.size());
  auto worker = [&] {
    for (std::size_t i = next++; i < f.seeds.size(); i = next++) {
      ExperimentConfig seed_cfg = cfg;
      seed_cfg.train.seed = f.seeds[i];
      SeedRunOptions options;
      options.resume = f.resume;
      options.allow_config_mismatch = f.allow_config_mismatch;
      options.warn = [&io](const std::string& w) {
        std::lock_guard lock(io);
        std::cerr << "warning: " << w << '\n';
      };
      try {
        const fs::path dir = seed_dir(f.out, f.seeds[i]);
        train_seed(seed_cfg, data, dir, options);
        std::lock_guard lock(io);
        std::cout << to_string(seed_cfg.train.regime) << " seed " << f.seeds[i] << " -> " << dir.string() << '\n';
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(f.jobs, 1, f.seeds.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  int code = kOk;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i]) continue;
    std::cerr << "seed " << f.seeds[i] << ": ";
    code = std::max(code, report_failure(errors[i]));
  }
  return code;
}

// ---------------------------------------------------------------------------

struct EvalFlags {
  DataFlags data;
  std::string checkpoints;
  std::string out;
  bool noise_sweep = false;
  std::optional<std::uint64_t> noise_seed;
};

std::vector<fs::path> find_checkpoints(const fs::path& root) {
  std::vector<fs::path> found;
  if (fs::is_regular_file(root)) return {root};
  if (!fs::is_directory(root)) throw DataError("checkpoint path " + root.string() + " does not exist");
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ssck") found.push_back(entry.path());
  }
  std::sort(found.begin(), found.end());
  return found;
}

int run_eval(const EvalFlags& f) {
  const auto paths = find_checkpoints(f.checkpoints);
  if (paths.empty()) throw DataError("no checkpoints found under " + f.checkpoints);

  DataFlags data_flags = f.data;
  if (data_flags.config.empty()) {
    // fall back to the config a run directory was trained with
    const fs::path echoed = paths.front().parent_path() / kEffectiveConfigFile;
    if (fs::exists(echoed)) data_flags.config = echoed.string();
  }
  const ExperimentConfig cfg = resolve_config(data_flags);
  const PreparedData prepared = prepare_data(cfg.data);
  const TestSet test = make_test_set(prepared.dataset, prepared.split.test);
  const std::uint64_t noise_seed = f.noise_seed.value_or(cfg.eval.noise_seed);

  std::vector<RunMetrics> runs;
  std::vector<NoiseSweepRun> sweeps;
  std::vector<std::string> failures;
  for (const auto& path : paths) {
    LoadedCheckpoint loaded;
    try {
      loaded = load_checkpoint(path);
    } catch (const CheckpointError& e) {
      failures.push_back(path.string() + ": " + e.what());
      continue;
    }
    const std::string regime = to_string(loaded.info.regime);
    const ModelBundle& bundle = loaded.state.bundle;
    for (Direction d : {Direction::x_to_y, Direction::y_to_x}) {
      const Generator& net = d == Direction::x_to_y ? bundle.g : bundle.f;
      const DirectionMetrics m = evaluate_direction(generator_translator(net), test, d);
      runs.push_back({regime, d, loaded.info.seed, m.mse, m.mae});
    }
    if (f.noise_sweep) {
      sweeps.push_back({regime, loaded.info.seed, cfg.eval.sigmas,
                        noise_sweep_mae(generator_translator(bundle.g), test, Direction::x_to_y, cfg.eval.sigmas,
                                        noise_seed)});
    }
    std::cout << "evaluated " << path.string() << '\n';
  }
  if (!runs.empty()) {
    emit_report(runs, sweeps, f.out);
    std::cout << "report in " << f.out << '\n';
  }
  for (const auto& msg : failures) std::cerr << "checkpoint error: " << msg << '\n';
  return failures.empty() ? kOk : kData;
}

// ---------------------------------------------------------------------------

struct InferFlags {
  std::string checkpoint;
  std::string input;
  std::string output;
  std::string direction = "x_to_y";
};

int run_infer(const InferFlags& f) {
  const LoadedCheckpoint loaded = load_checkpoint(f.checkpoint);
  const Direction d = parse_direction(f.direction);
  const Generator& net = d == Direction::x_to_y ? loaded.state.bundle.g : loaded.state.bundle.f;
  const Volume source = normalize_volume(load_volume(f.input));
  save_volume(translate_volume(net, source), f.output);
  std::cout << "wrote " << f.output << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised adversarial CycleGAN: synthesis, training and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ssacgan 1.0");
  app.footer("Exit codes: 0 ok, 1 usage/config, 2 data/checkpoint, 3 divergence.\n"
             "SSACGAN_THREADS caps kernel threads (default 1, bitwise reproducible).");

  SynthFlags synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a two-modality phantom dataset");
  synth_cmd->add_option("--spec", synth.spec, "Phantom spec (JSON); defaults when omitted")->check(CLI::ExistingFile);
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--subjects", synth.subjects, "Number of subjects")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth.seed, "Override the spec's seed");

  SplitFlags split;
  auto* split_cmd = app.add_subcommand("split", "Split a dataset's subjects into the five subsets");
  split_cmd->add_option("--data", split.data, "Dataset directory")->required();
  split_cmd->add_option("--out", split.out, "Split manifest to write")->required();
  split_cmd->add_option("--seed", split.seed, "Shuffle seed");
  split_cmd->add_option("--ratios", split.ratios, "unpaired_x unpaired_y paired validation test")->expected(5);

  TrainFlags train;
  auto* train_cmd = app.add_subcommand("train", "Train one run per seed into <out>/seed_<s>/");
  add_data_flags(train_cmd, train.data);
  train_cmd->add_option("--regime", train.regime, "cycle | paired_only | semi (default: config)")
      ->check(CLI::IsMember({"cycle", "paired_only", "semi"}));
  train_cmd->add_option("--seed", train.seeds, "Run seed; repeat for several runs")->required();
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  train_cmd->add_option("--epochs", train.epochs, "Override epochs, scaling the constant-lr phase")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--jobs", train.jobs, "Seeds trained in parallel")->check(CLI::PositiveNumber);
  train_cmd->add_flag("--resume", train.resume, "Continue from existing checkpoints");
  train_cmd->add_flag("--allow-config-mismatch", train.allow_config_mismatch,
                      "Resume even if the checkpoint's config hash differs");

  EvalFlags eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate checkpoints and write the report");
  eval_cmd->add_option("--checkpoints", eval.checkpoints, "Checkpoint file or directory (searched recursively)")
      ->required();
  add_data_flags(eval_cmd, eval.data);
  eval_cmd->add_option("--out", eval.out, "Report directory")->required();
  eval_cmd->add_flag("--noise-sweep", eval.noise_sweep, "Also run the noise sweep (X to Y)");
  eval_cmd->add_option("--noise-seed", eval.noise_seed, "Override eval.noise_seed");

  InferFlags infer;
  auto* infer_cmd = app.add_subcommand("infer", "Translate one volume file with a trained generator");
  infer_cmd->add_option("--checkpoint", infer.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--input", infer.input, "Source volume (.ssav)")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--output", infer.output, "Translated volume (.ssav), normalized intensities")->required();
  infer_cmd->add_option("--direction", infer.direction, "x_to_y (G) or y_to_x (F)")
      ->check(CLI::IsMember({"x_to_y", "y_to_x"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*synth_cmd) return run_synth(synth);
    if (*split_cmd) return run_split(split);
    if (*train_cmd) return run_train(train);
    if (*eval_cmd) return run_eval(eval);
    if (*infer_cmd) return run_infer(infer);
  } catch (...) {
    return report_failure(std::current_exception());
  }
  return kUsage;
}
