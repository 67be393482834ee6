#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ssacgan/data.hpp"
#include "ssacgan/nets.hpp"

namespace ssacgan {

/// Mean squared / absolute voxel difference, accumulated in double.
double mse(const Volume& a, const Volume& b);
double mae(const Volume& a, const Volume& b);

enum class Direction { x_to_y, y_to_x };

std::string to_string(Direction d);
Direction parse_direction(const std::string& name);

/// Maps a whole source volume to a predicted target volume.
using VolumeTranslator = std::function<Volume(const Volume&)>;

/// Runs `g` slice by slice (first axis) without recording a graph.
Volume translate_volume(const Generator& g, const Volume& source);
VolumeTranslator generator_translator(const Generator& g);

/// Test subjects with both modalities, keyed by subject id.
using TestSet = std::vector<std::pair<std::string, SubjectVolumes>>;
TestSet make_test_set(const Dataset& dataset, const std::vector<std::string>& ids);

struct DirectionMetrics {
  double mse = 0.0;
  double mae = 0.0;
};

/// Per-volume metrics averaged over subjects (visited in id order, so the
/// result does not depend on the order of `test`).
DirectionMetrics evaluate_direction(const VolumeTranslator& translate, const TestSet& test, Direction direction);

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // sample (n-1)
  std::size_t count = 0;
};

Aggregate aggregate_runs(const std::vector<double>& values);

inline const std::vector<double> kDefaultNoiseSigmas{0.025, 0.05, 0.1, 0.2, 0.4};

/// MAE against the clean target after adding N(0, sigma^2) to each source
/// volume. Noise for a given (sigma index, subject) depends only on
/// `noise_seed`, so every model sees the same corrupted inputs.
std::vector<double> noise_sweep_mae(const VolumeTranslator& translate, const TestSet& test, Direction direction,
                                    const std::vector<double>& sigmas, std::uint64_t noise_seed);

struct RunMetrics {
  std::string regime;
  Direction direction = Direction::x_to_y;
  std::uint64_t seed = 0;
  double mse = 0.0;
  double mae = 0.0;
};

struct NoiseSweepRun {
  std::string regime;
  std::uint64_t seed = 0;
  std::vector<double> sigmas;
  std::vector<double> mae;
};

struct NoiseSweepResult {
  std::string regime;
  std::vector<double> sigmas;
  std::vector<Aggregate> mae;  // per sigma, across seeds
};

/// Groups sweep runs by regime (sorted) and aggregates each sigma.
std::vector<NoiseSweepResult> aggregate_sweeps(const std::vector<NoiseSweepRun>& runs);

struct SummaryRow {
  std::string regime;
  Direction direction = Direction::x_to_y;
  Aggregate mse;
  Aggregate mae;
};

/// Mean and sample std per (regime, direction), sorted by regime then direction.
std::vector<SummaryRow> summarize(const std::vector<RunMetrics>& runs);

/// Writes metrics.csv and metrics_summary.csv into `dir`; when `sweeps` is
/// non-empty also noise_sweep.csv and noise_sweep.svg.
void emit_report(const std::vector<RunMetrics>& runs, const std::vector<NoiseSweepRun>& sweeps,
                 const std::filesystem::path& dir);

std::vector<RunMetrics> read_metrics_csv(const std::filesystem::path& path);
std::string render_sweep_svg(const std::vector<NoiseSweepResult>& sweeps);

}  // namespace ssacgan
