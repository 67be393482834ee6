#include "ssacgan/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace ssacgan {

namespace {

constexpr std::size_t kHeaderSize = 4 + 2 + 1 + 1 + 3 * 4;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>((v >> shift) & 0xff));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

Volume Volume::zeros(std::array<std::size_t, 3> dims, std::string subject_id, std::string modality) {
  Volume v;
  v.dims = dims;
  v.voxels.assign(dims[0] * dims[1] * dims[2], 0.0f);
  v.subject_id = std::move(subject_id);
  v.modality = std::move(modality);
  return v;
}

std::vector<std::uint8_t> encode_volume(const Volume& v) {
  if (v.voxels.size() != v.size()) throw DataError("volume voxel count does not match its dims");
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize + 4 * v.voxels.size());
  out.insert(out.end(), kVolumeMagic.begin(), kVolumeMagic.end());
  put_u16(out, kVolumeVersion);
  out.push_back(0);  // dtype f32
  out.push_back(3);  // rank
  for (auto d : v.dims) put_u32(out, static_cast<std::uint32_t>(d));
  for (float f : v.voxels) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

Volume decode_volume(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || !std::equal(kVolumeMagic.begin(), kVolumeMagic.end(), bytes.begin())) {
    throw VolumeFormatError(VolumeErrorKind::bad_magic, "bad magic: not an SSAV volume");
  }
  if (bytes.size() < kHeaderSize) {
    throw VolumeFormatError(VolumeErrorKind::truncated_payload, "truncated payload: header incomplete");
  }
  const std::uint16_t version = static_cast<std::uint16_t>(bytes[4] | (bytes[5] << 8));
  if (version != kVolumeVersion) {
    throw VolumeFormatError(VolumeErrorKind::unsupported_version,
                            "unsupported SSAV version " + std::to_string(version));
  }
  if (bytes[6] != 0) {
    throw VolumeFormatError(VolumeErrorKind::dtype_mismatch,
                            "dtype mismatch: expected 0 (f32), got " + std::to_string(bytes[6]));
  }
  if (bytes[7] != 3) {
    throw VolumeFormatError(VolumeErrorKind::bad_rank, "expected rank 3, got " + std::to_string(bytes[7]));
  }
  Volume v;
  for (int i = 0; i < 3; ++i) v.dims[i] = get_u32(bytes.data() + 8 + 4 * i);
  const std::size_t expected = kHeaderSize + 4 * v.size();
  if (bytes.size() != expected) {
    throw VolumeFormatError(VolumeErrorKind::truncated_payload,
                            "truncated payload: header declares " + std::to_string(expected - kHeaderSize) +
                                " payload bytes, file holds " + std::to_string(bytes.size() - kHeaderSize));
  }
  v.voxels.resize(v.size());
  const std::uint8_t* payload = bytes.data() + kHeaderSize;
  for (std::size_t i = 0; i < v.voxels.size(); ++i) v.voxels[i] = std::bit_cast<float>(get_u32(payload + 4 * i));
  return v;
}

void save_volume(const Volume& v, const std::filesystem::path& path) {
  const auto bytes = encode_volume(v);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw VolumeFormatError(VolumeErrorKind::io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw VolumeFormatError(VolumeErrorKind::io, "write failed for " + path.string());
}

Volume load_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw VolumeFormatError(VolumeErrorKind::io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    Volume v = decode_volume(bytes);
    v.subject_id = path.stem().string();
    return v;
  } catch (const VolumeFormatError& e) {
    throw VolumeFormatError(e.kind(), path.string() + ": " + e.what());
  }
}

Volume normalize_volume(const Volume& v) {
  if (v.voxels.empty()) throw DataError("cannot normalize an empty volume");
  double total = 0.0;
  for (float x : v.voxels) {
    if (!std::isfinite(x)) throw DataError("volume " + v.subject_id + " contains non-finite voxels");
    total += x;
  }
  const double n = static_cast<double>(v.voxels.size());
  const double mu = total / n;
  double var = 0.0;
  for (float x : v.voxels) var += (x - mu) * (x - mu);
  const double sd = std::sqrt(var / n);
  if (!(sd > 0.0)) throw DataError("volume " + v.subject_id + " is constant; cannot normalize");

  std::vector<double> z(v.voxels.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = (v.voxels[i] - mu) / sd;
  const auto [lo_it, hi_it] = std::minmax_element(z.begin(), z.end());
  const double lo = *lo_it, range = *hi_it - *lo_it;
  if (!(range > 0.0)) throw DataError("volume " + v.subject_id + " is constant; cannot normalize");

  Volume out = v;
  for (std::size_t i = 0; i < z.size(); ++i) out.voxels[i] = static_cast<float>(2.0 * ((z[i] - lo) / range) - 1.0);
  return out;
}

}  // namespace ssacgan
