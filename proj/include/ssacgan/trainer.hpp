#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssacgan/data.hpp"
#include "ssacgan/losses.hpp"
#include "ssacgan/nets.hpp"
#include "ssacgan/optim.hpp"

namespace ssacgan {

enum class Regime { cycle, paired_only, semi };

std::string to_string(Regime r);
Regime parse_regime(const std::string& name);

struct TrainConfig {
  Regime regime = Regime::semi;
  std::size_t epochs = 200;
  double lr_start = 2e-4;
  double lr_end = 2e-7;
  std::size_t lr_constant_epochs = 100;
  LossWeights weights;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
  int max_shift = -1;              // -1: default_max_shift of the slice extent
  float shift_fill = -1.0f;        // background value of normalized slices
  double min_foreground = 0.01;    // slices below this foreground fraction are dropped
  std::size_t checkpoint_every = 0;  // epochs; 0 writes only the final checkpoint
  ModelLayout layout;
};

void validate(const TrainConfig& cfg);

/// Canonical text form of every field; the config hash is FNV-1a over it.
std::string canonical_string(const TrainConfig& cfg);
std::uint64_t config_hash(const TrainConfig& cfg);

/// Constant for the first lr_constant_epochs, then linear down to lr_end,
/// which is reached exactly at the last epoch.
double lr_at_epoch(std::size_t epoch, const TrainConfig& cfg);

/// Raised when a loss becomes NaN or infinite; the run is aborted.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Slices prepared for training: modality A for X, modality B for Y.
struct TrainingData {
  std::vector<Image2d> x;  // from the unpaired-X subjects
  std::vector<Image2d> y;  // from the unpaired-Y subjects
  std::vector<std::pair<Image2d, Image2d>> paired;
};

TrainingData make_training_data(const Dataset& dataset, const DatasetSplit& split, double min_foreground = 0.01);

/// Networks plus one Adam per update group. The D_pair group holds the
/// paired head and the trunks of D_X and D_Y that feed it.
struct TrainingState {
  ModelBundle bundle;
  Adam opt_g;
  Adam opt_f;
  Adam opt_dx;
  Adam opt_dy;
  Adam opt_dpair;
  std::uint64_t epochs_completed = 0;
  std::uint64_t global_step = 0;

  static TrainingState create(const TrainConfig& cfg);
  /// Rebuilds the optimizer parameter lists from `bundle`.
  void bind_optimizers();
};

struct Batch {
  Tensor x;  // [N,1,H,W]
  Tensor y;
  bool is_paired = false;
};

/// One alternating update: D_X, D_Y, D_pair (paired batches outside the cycle
/// regime), then G and F jointly with discriminators frozen.
/// `after_critics`, when set, runs between the critic and generator updates.
LossBreakdown train_step(TrainingState& state, const Batch& batch, const TrainConfig& cfg, float lr,
                         const std::function<void()>& after_critics = {});

struct LogRow {
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;  // global step index
  LossBreakdown losses;
  double lr = 0.0;
};

std::string loss_log_header();
std::string format_log_row(const LogRow& row);

struct RunOptions {
  std::filesystem::path checkpoint_path;  // empty: no checkpoint files
  std::function<void(const LogRow&)> on_step;
};

/// Plan of one epoch: which slices each step consumes. Pure function of the
/// config, the data sizes and the epoch.
struct StepPlan {
  bool is_paired = false;
  std::vector<std::size_t> x;  // indices into TrainingData::x (or paired when is_paired)
  std::vector<std::size_t> y;
};

std::size_t steps_per_epoch(const TrainConfig& cfg, const TrainingData& data);
/// Every k-th step of a semi epoch is paired (k = ceil(unpaired / paired)); 0 when there is no interleave.
std::size_t paired_interval(const TrainConfig& cfg, const TrainingData& data);
std::vector<StepPlan> plan_epoch(const TrainConfig& cfg, const TrainingData& data, std::size_t epoch);

/// Trains from `state` (fresh or resumed) until cfg.epochs are complete.
std::vector<LogRow> run_training(const TrainConfig& cfg, const TrainingData& data, TrainingState& state,
                                 const RunOptions& options = {});

/// Runs `epochs` further epochs without run_training's subset checks, so
/// degenerate data (e.g. semi with no paired slices) can be exercised.
std::vector<LogRow> train_epochs(const TrainConfig& cfg, const TrainingData& data, TrainingState& state,
                                 std::size_t epochs);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::array<char, 4> kCheckpointMagic{'S', 'S', 'C', 'K'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct CheckpointInfo {
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  Regime regime = Regime::semi;
};

struct LoadedCheckpoint {
  TrainingState state;
  CheckpointInfo info;
};

std::vector<std::uint8_t> encode_checkpoint(const TrainingState& state, const TrainConfig& cfg);
LoadedCheckpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const TrainingState& state, const TrainConfig& cfg, const std::filesystem::path& path);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Resume policy: a hash mismatch throws unless `allow_mismatch`, in which
/// case a warning is returned.
std::optional<std::string> check_resume(const CheckpointInfo& info, const TrainConfig& cfg, bool allow_mismatch);

}  // namespace ssacgan
