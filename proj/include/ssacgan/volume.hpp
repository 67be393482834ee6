#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssacgan {

/// 3-D scalar image of one modality of one subject. Row-major voxels,
/// indexed [depth][height][width].
struct Volume {
  std::array<std::size_t, 3> dims{0, 0, 0};
  std::vector<float> voxels;
  std::string subject_id;
  std::string modality;

  std::size_t depth() const { return dims[0]; }
  std::size_t height() const { return dims[1]; }
  std::size_t width() const { return dims[2]; }
  std::size_t slice_size() const { return dims[1] * dims[2]; }
  std::size_t size() const { return dims[0] * dims[1] * dims[2]; }

  float& at(std::size_t d, std::size_t h, std::size_t w) { return voxels[(d * dims[1] + h) * dims[2] + w]; }
  float at(std::size_t d, std::size_t h, std::size_t w) const { return voxels[(d * dims[1] + h) * dims[2] + w]; }

  static Volume zeros(std::array<std::size_t, 3> dims, std::string subject_id = {}, std::string modality = {});
};

enum class VolumeErrorKind { bad_magic, unsupported_version, dtype_mismatch, bad_rank, truncated_payload, io };

class VolumeFormatError : public std::runtime_error {
 public:
  VolumeFormatError(VolumeErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  VolumeErrorKind kind() const { return kind_; }

 private:
  VolumeErrorKind kind_;
};

/// Raised when a volume cannot be normalized (zero spread).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// SSAV file layout, all little-endian:
//   "SSAV" | u16 version=1 | u8 dtype=0 (f32) | u8 rank=3 |
//   u32 depth | u32 height | u32 width | depth*height*width f32 payload
inline constexpr std::array<char, 4> kVolumeMagic{'S', 'S', 'A', 'V'};
inline constexpr std::uint16_t kVolumeVersion = 1;

std::vector<std::uint8_t> encode_volume(const Volume& v);
Volume decode_volume(const std::vector<std::uint8_t>& bytes);

void save_volume(const Volume& v, const std::filesystem::path& path);
Volume load_volume(const std::filesystem::path& path);

/// Whole-volume z-score (population std) followed by min-max rescaling onto
/// [-1, 1]. The minimum maps to exactly -1 and the maximum to exactly +1.
Volume normalize_volume(const Volume& v);

}  // namespace ssacgan
