#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ssacgan/rng.hpp"
#include "ssacgan/volume.hpp"

namespace ssacgan {

// ---------------------------------------------------------------------------
// Subject-level split
// ---------------------------------------------------------------------------

/// Bucket order: unpaired X, unpaired Y, paired, validation, test.
using SplitRatios = std::array<double, 5>;
inline constexpr SplitRatios kDefaultSplitRatios{0.3, 0.3, 0.1, 0.1, 0.2};

struct DatasetSplit {
  std::vector<std::string> unpaired_x;
  std::vector<std::string> unpaired_y;
  std::vector<std::string> paired;
  std::vector<std::string> validation;
  std::vector<std::string> test;

  std::array<std::size_t, 5> sizes() const;
};

/// Largest-remainder bucket counts for n items (ties go to the earlier bucket).
std::array<std::size_t, 5> apportion(std::size_t n, const SplitRatios& ratios);

/// Shuffles the ids with `rng`, then fills buckets in order with apportioned
/// counts. Throws DataError for fewer than 5 subjects or when a bucket with a
/// positive ratio would be empty.
DatasetSplit split_dataset(std::vector<std::string> subject_ids, const SplitRatios& ratios, Rng& rng);

void save_split(const DatasetSplit& split, const std::filesystem::path& path);
DatasetSplit load_split(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic two-modality phantom
// ---------------------------------------------------------------------------

/// Modality A: nested random ellipsoids (scalp rim, brain, tissue blobs,
/// optional bright lesion). Modality B: contrast inversion of A inside the
/// head, times a smooth multiplicative bias field; background stays 0.
struct PhantomSpec {
  std::size_t image_size = 64;  // height = width
  std::size_t depth = 8;
  std::size_t min_ellipses = 3;
  std::size_t max_ellipses = 6;
  double lesion_probability = 0.5;
  float lesion_intensity = 1.0f;
  float lesion_threshold = 0.9f;  // no tissue class of A reaches this
  float inversion_gain = 1.0f;
  float inversion_offset = 1.1f;  // must exceed lesion_intensity so B stays positive
  float bias_amplitude = 0.1f;
  std::uint64_t seed = 0;
};

void validate(const PhantomSpec& spec);

/// Intensity classes of A (background is 0).
inline constexpr float kRimIntensity = 0.15f;
inline constexpr std::array<float, 3> kTissueIntensities{0.3f, 0.5f, 0.7f};

/// Multiplicative field at voxel (d, h, w); within [1 - amp, 1 + amp].
float bias_field(const PhantomSpec& spec, std::size_t d, std::size_t h, std::size_t w);

std::pair<Volume, Volume> synth_phantom_pair(const PhantomSpec& spec, const std::string& subject_id);

/// A = offset - B / (gain * bias) where B > 0, else 0.
Volume invert_modality_b(const PhantomSpec& spec, const Volume& b);
/// Forward transform applied to any A-like volume.
Volume apply_modality_b(const PhantomSpec& spec, const Volume& a);

// ---------------------------------------------------------------------------
// Slices, augmentation, noise
// ---------------------------------------------------------------------------

struct Image2d {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  float at(std::size_t h, std::size_t w) const { return pixels[h * width + w]; }
  float& at(std::size_t h, std::size_t w) { return pixels[h * width + w]; }
};

Image2d slice_of(const Volume& v, std::size_t index);

/// Fraction of pixels strictly above the volume minimum.
double foreground_fraction(const Image2d& slice, float background);

/// Slice indices whose foreground fraction (relative to the volume minimum)
/// is at least `min_fraction`.
std::vector<std::size_t> usable_slices(const Volume& v, double min_fraction = 0.01);

struct ShiftOffset {
  int rows = 0;
  int cols = 0;
  bool operator==(const ShiftOffset&) const = default;
};

/// Content moves by (rows, cols); vacated pixels take `fill`.
Image2d shift_image(const Image2d& image, ShiftOffset offset, float fill = 0.0f);

struct ShiftedPair {
  Image2d x;
  std::optional<Image2d> y;
  ShiftOffset offset;
};

/// Draws one offset uniformly from [-max_shift, max_shift]^2 and applies it to
/// `x` and, when present, to the paired `y`.
ShiftedPair random_shift(const Image2d& x, const Image2d* y, int max_shift, Rng& rng, float fill = 0.0f);

/// Default shift bound: 5% of the smaller spatial extent, rounded down.
int default_max_shift(std::size_t height, std::size_t width);

/// v + N(0, sigma^2) per voxel; no renormalization.
Volume add_gaussian_noise(const Volume& v, float sigma, Rng& rng);

// ---------------------------------------------------------------------------
// On-disk dataset
// ---------------------------------------------------------------------------

struct SubjectVolumes {
  Volume x;  // modality A, normalized
  Volume y;  // modality B, normalized
};

struct Dataset {
  std::map<std::string, SubjectVolumes> subjects;

  const SubjectVolumes& at(const std::string& id) const;
  std::vector<std::string> ids() const;
};

/// Writes `<dir>/<id>_A.ssav`, `<dir>/<id>_B.ssav` for each subject and a
/// `manifest.json` listing them with the phantom spec. Returns the ids.
std::vector<std::string> write_phantom_dataset(const PhantomSpec& spec, std::size_t subjects,
                                               const std::filesystem::path& dir);

/// Reads the manifest and every listed volume, normalizing each.
Dataset load_dataset(const std::filesystem::path& dir);

/// In-memory equivalent of write_phantom_dataset + load_dataset.
Dataset make_phantom_dataset(const PhantomSpec& spec, std::size_t subjects);

std::string subject_name(std::size_t index);

}  // namespace ssacgan
