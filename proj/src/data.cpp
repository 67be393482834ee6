#include "ssacgan/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "json.hpp"

namespace ssacgan {

using nlohmann::json;

namespace {

constexpr const char* kBucketNames[5] = {"unpaired_x", "unpaired_y", "paired", "validation", "test"};

std::vector<std::string>& bucket(DatasetSplit& s, std::size_t i) {
  switch (i) {
    case 0: return s.unpaired_x;
    case 1: return s.unpaired_y;
    case 2: return s.paired;
    case 3: return s.validation;
    default: return s.test;
  }
}

const std::vector<std::string>& bucket(const DatasetSplit& s, std::size_t i) {
  return bucket(const_cast<DatasetSplit&>(s), i);
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed for " + path.string());
}

struct Ellipsoid {
  double cu, cv, cz;  // centre in normalized coordinates
  double au, av, az;  // semi-axes
  double angle;       // in-plane rotation
  float intensity;

  bool contains(double u, double v, double z) const {
    const double c = std::cos(angle), s = std::sin(angle);
    const double du = u - cu, dv = v - cv, dz = z - cz;
    const double ru = c * du + s * dv;
    const double rv = -s * du + c * dv;
    return (ru * ru) / (au * au) + (rv * rv) / (av * av) + (dz * dz) / (az * az) <= 1.0;
  }
};

// Voxel centre mapped to (-1, 1).
double coord(std::size_t i, std::size_t n) {
  return (static_cast<double>(i) + 0.5) / (0.5 * static_cast<double>(n)) - 1.0;
}

json spec_to_json(const PhantomSpec& s) {
  return json{{"image_size", s.image_size},
              {"depth", s.depth},
              {"min_ellipses", s.min_ellipses},
              {"max_ellipses", s.max_ellipses},
              {"lesion_probability", s.lesion_probability},
              {"lesion_intensity", s.lesion_intensity},
              {"lesion_threshold", s.lesion_threshold},
              {"inversion_gain", s.inversion_gain},
              {"inversion_offset", s.inversion_offset},
              {"bias_amplitude", s.bias_amplitude},
              {"seed", s.seed}};
}

}  // namespace

// ---------------------------------------------------------------------------
// Split
// ---------------------------------------------------------------------------

std::array<std::size_t, 5> DatasetSplit::sizes() const {
  return {unpaired_x.size(), unpaired_y.size(), paired.size(), validation.size(), test.size()};
}

std::array<std::size_t, 5> apportion(std::size_t n, const SplitRatios& ratios) {
  double total = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw DataError("split ratios must be finite and non-negative");
    total += r;
  }
  if (!(total > 0.0)) throw DataError("split ratios sum to zero");

  std::array<std::size_t, 5> counts{};
  std::array<double, 5> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    const double quota = static_cast<double>(n) * ratios[i] / total;
    // The small slack keeps exact quotas such as 0.3 * 20 from flooring to 5.
    counts[i] = static_cast<std::size_t>(std::floor(quota + 1e-9));
    remainder[i] = quota - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::array<std::size_t, 5> order{0, 1, 2, 3, 4};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b] + 1e-12; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % 5]];
  return counts;
}

DatasetSplit split_dataset(std::vector<std::string> subject_ids, const SplitRatios& ratios, Rng& rng) {
  const std::size_t n = subject_ids.size();
  if (n < 5) throw DataError("need at least 5 subjects to split, got " + std::to_string(n));
  {
    auto sorted = subject_ids;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw DataError("duplicate subject ids in split input");
    }
  }
  const auto counts = apportion(n, ratios);
  for (std::size_t i = 0; i < 5; ++i) {
    if (ratios[i] > 0.0 && counts[i] == 0) {
      throw DataError(std::string("too few subjects: bucket ") + kBucketNames[i] + " would be empty with n=" +
                      std::to_string(n));
    }
  }
  std::shuffle(subject_ids.begin(), subject_ids.end(), rng.engine());

  DatasetSplit split;
  std::size_t next = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    auto& b = bucket(split, i);
    b.assign(subject_ids.begin() + static_cast<std::ptrdiff_t>(next),
             subject_ids.begin() + static_cast<std::ptrdiff_t>(next + counts[i]));
    next += counts[i];
  }
  return split;
}

void save_split(const DatasetSplit& split, const std::filesystem::path& path) {
  json j;
  std::vector<std::string> all;
  for (std::size_t i = 0; i < 5; ++i) {
    j[kBucketNames[i]] = bucket(split, i);
    all.insert(all.end(), bucket(split, i).begin(), bucket(split, i).end());
  }
  std::sort(all.begin(), all.end());
  j["subjects"] = all;
  write_json(j, path);
}

DatasetSplit load_split(const std::filesystem::path& path) {
  const json j = read_json(path);
  DatasetSplit split;
  try {
    for (std::size_t i = 0; i < 5; ++i) bucket(split, i) = j.at(kBucketNames[i]).get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": malformed split manifest: " + e.what());
  }
  return split;
}

// ---------------------------------------------------------------------------
// Phantom
// ---------------------------------------------------------------------------

void validate(const PhantomSpec& spec) {
  if (spec.image_size < 8 || spec.image_size % 4 != 0) {
    throw std::invalid_argument("phantom image_size must be a multiple of 4 and at least 8");
  }
  if (spec.depth == 0) throw std::invalid_argument("phantom depth must be positive");
  if (spec.min_ellipses > spec.max_ellipses) throw std::invalid_argument("phantom min_ellipses > max_ellipses");
  if (!(spec.lesion_probability >= 0.0 && spec.lesion_probability <= 1.0)) {
    throw std::invalid_argument("phantom lesion_probability must lie in [0, 1]");
  }
  const float tissue_max = *std::max_element(kTissueIntensities.begin(), kTissueIntensities.end());
  if (!(spec.lesion_threshold > tissue_max && spec.lesion_threshold < spec.lesion_intensity)) {
    throw std::invalid_argument("phantom lesion_threshold must separate tissue from lesion intensity");
  }
  if (!(spec.inversion_gain > 0.0f)) throw std::invalid_argument("phantom inversion_gain must be positive");
  if (!(spec.inversion_offset > spec.lesion_intensity)) {
    throw std::invalid_argument("phantom inversion_offset must exceed lesion_intensity");
  }
  if (!(spec.bias_amplitude >= 0.0f && spec.bias_amplitude < 0.5f)) {
    throw std::invalid_argument("phantom bias_amplitude must lie in [0, 0.5)");
  }
}

float bias_field(const PhantomSpec& spec, std::size_t d, std::size_t h, std::size_t w) {
  const double u = coord(w, spec.image_size);
  const double v = coord(h, spec.image_size);
  const double z = coord(d, spec.depth);
  // Smooth, bounded by 1 in magnitude over the unit cube.
  const double shape = std::sin(0.5 * std::numbers::pi * (0.6 * u + 0.3 * v + 0.1 * z));
  return static_cast<float>(1.0 + spec.bias_amplitude * shape);
}

std::pair<Volume, Volume> synth_phantom_pair(const PhantomSpec& spec, const std::string& subject_id) {
  validate(spec);
  Rng rng = Rng(spec.seed).child("phantom").child(subject_id);

  std::vector<Ellipsoid> shapes;
  Ellipsoid head{rng.uniform(-0.05f, 0.05f), rng.uniform(-0.05f, 0.05f), 0.0, rng.uniform(0.75f, 0.88f),
                 rng.uniform(0.80f, 0.92f), 1.6, rng.uniform(-0.3f, 0.3f), kRimIntensity};
  shapes.push_back(head);
  Ellipsoid brain = head;
  brain.au *= 0.85;
  brain.av *= 0.85;
  brain.az *= 0.9;
  brain.intensity = kTissueIntensities[2];
  shapes.push_back(brain);

  const auto blobs = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(spec.min_ellipses),
                                                              static_cast<std::int64_t>(spec.max_ellipses)));
  for (std::size_t i = 0; i < blobs; ++i) {
    Ellipsoid e;
    e.cu = brain.cu + rng.uniform(-0.45f, 0.45f) * brain.au;
    e.cv = brain.cv + rng.uniform(-0.45f, 0.45f) * brain.av;
    e.cz = rng.uniform(-0.6f, 0.6f);
    e.au = rng.uniform(0.1f, 0.3f);
    e.av = rng.uniform(0.1f, 0.3f);
    e.az = rng.uniform(0.4f, 1.2f);
    e.angle = rng.uniform(0.0f, static_cast<float>(std::numbers::pi));
    e.intensity = kTissueIntensities[static_cast<std::size_t>(rng.uniform_int(0, 1))];
    shapes.push_back(e);
  }
  if (rng.bernoulli(spec.lesion_probability)) {
    Ellipsoid lesion;
    lesion.cu = brain.cu + rng.uniform(-0.4f, 0.4f) * brain.au;
    lesion.cv = brain.cv + rng.uniform(-0.4f, 0.4f) * brain.av;
    lesion.cz = rng.uniform(-0.3f, 0.3f);
    lesion.au = rng.uniform(0.08f, 0.16f);
    lesion.av = rng.uniform(0.08f, 0.16f);
    lesion.az = rng.uniform(0.3f, 0.6f);
    lesion.angle = rng.uniform(0.0f, static_cast<float>(std::numbers::pi));
    lesion.intensity = spec.lesion_intensity;
    shapes.push_back(lesion);
  }

  const std::array<std::size_t, 3> dims{spec.depth, spec.image_size, spec.image_size};
  Volume a = Volume::zeros(dims, subject_id, "A");
  for (std::size_t d = 0; d < dims[0]; ++d) {
    const double z = coord(d, dims[0]);
    for (std::size_t h = 0; h < dims[1]; ++h) {
      const double v = coord(h, dims[1]);
      for (std::size_t w = 0; w < dims[2]; ++w) {
        const double u = coord(w, dims[2]);
        float value = 0.0f;
        for (const auto& e : shapes) {
          if (e.contains(u, v, z)) value = e.intensity;
        }
        a.at(d, h, w) = value;
      }
    }
  }
  Volume b = apply_modality_b(spec, a);
  return {std::move(a), std::move(b)};
}

Volume apply_modality_b(const PhantomSpec& spec, const Volume& a) {
  Volume b = Volume::zeros(a.dims, a.subject_id, "B");
  for (std::size_t d = 0; d < a.depth(); ++d) {
    for (std::size_t h = 0; h < a.height(); ++h) {
      for (std::size_t w = 0; w < a.width(); ++w) {
        const float x = a.at(d, h, w);
        if (x > 0.0f) b.at(d, h, w) = spec.inversion_gain * (spec.inversion_offset - x) * bias_field(spec, d, h, w);
      }
    }
  }
  return b;
}

Volume invert_modality_b(const PhantomSpec& spec, const Volume& b) {
  Volume a = Volume::zeros(b.dims, b.subject_id, "A");
  for (std::size_t d = 0; d < b.depth(); ++d) {
    for (std::size_t h = 0; h < b.height(); ++h) {
      for (std::size_t w = 0; w < b.width(); ++w) {
        const float y = b.at(d, h, w);
        if (y > 0.0f) a.at(d, h, w) = spec.inversion_offset - y / (spec.inversion_gain * bias_field(spec, d, h, w));
      }
    }
  }
  return a;
}

// ---------------------------------------------------------------------------
// Slices, augmentation, noise
// ---------------------------------------------------------------------------

Image2d slice_of(const Volume& v, std::size_t index) {
  if (index >= v.depth()) throw std::out_of_range("slice index out of range");
  Image2d out{v.height(), v.width(), {}};
  const auto first = v.voxels.begin() + static_cast<std::ptrdiff_t>(index * v.slice_size());
  out.pixels.assign(first, first + static_cast<std::ptrdiff_t>(v.slice_size()));
  return out;
}

double foreground_fraction(const Image2d& slice, float background) {
  if (slice.pixels.empty()) return 0.0;
  const auto n = std::count_if(slice.pixels.begin(), slice.pixels.end(), [&](float p) { return p > background; });
  return static_cast<double>(n) / static_cast<double>(slice.pixels.size());
}

std::vector<std::size_t> usable_slices(const Volume& v, double min_fraction) {
  if (v.voxels.empty()) return {};
  const float background = *std::min_element(v.voxels.begin(), v.voxels.end());
  std::vector<std::size_t> keep;
  for (std::size_t d = 0; d < v.depth(); ++d) {
    if (foreground_fraction(slice_of(v, d), background) >= min_fraction) keep.push_back(d);
  }
  return keep;
}

Image2d shift_image(const Image2d& image, ShiftOffset offset, float fill) {
  Image2d out{image.height, image.width, std::vector<float>(image.pixels.size(), fill)};
  const auto rows = static_cast<std::ptrdiff_t>(image.height);
  const auto cols = static_cast<std::ptrdiff_t>(image.width);
  for (std::ptrdiff_t h = 0; h < rows; ++h) {
    const std::ptrdiff_t src_h = h - offset.rows;
    if (src_h < 0 || src_h >= rows) continue;
    for (std::ptrdiff_t w = 0; w < cols; ++w) {
      const std::ptrdiff_t src_w = w - offset.cols;
      if (src_w < 0 || src_w >= cols) continue;
      out.pixels[static_cast<std::size_t>(h * cols + w)] = image.pixels[static_cast<std::size_t>(src_h * cols + src_w)];
    }
  }
  return out;
}

ShiftedPair random_shift(const Image2d& x, const Image2d* y, int max_shift, Rng& rng, float fill) {
  if (max_shift < 0) throw std::invalid_argument("max_shift must be non-negative");
  if (static_cast<std::size_t>(max_shift) >= std::min(x.height, x.width)) {
    throw std::invalid_argument("max_shift must be smaller than the slice extent");
  }
  if (y && (y->height != x.height || y->width != x.width)) {
    throw std::invalid_argument("paired slices differ in shape");
  }
  ShiftOffset offset;
  if (max_shift > 0) {
    offset.rows = static_cast<int>(rng.uniform_int(-max_shift, max_shift));
    offset.cols = static_cast<int>(rng.uniform_int(-max_shift, max_shift));
  }
  ShiftedPair out{shift_image(x, offset, fill), std::nullopt, offset};
  if (y) out.y = shift_image(*y, offset, fill);
  return out;
}

int default_max_shift(std::size_t height, std::size_t width) {
  return static_cast<int>(std::min(height, width) / 20);
}

Volume add_gaussian_noise(const Volume& v, float sigma, Rng& rng) {
  if (!(sigma >= 0.0f) || !std::isfinite(sigma)) throw std::invalid_argument("noise sigma must be finite and >= 0");
  Volume out = v;
  if (sigma == 0.0f) return out;
  std::normal_distribution<float> dist(0.0f, sigma);
  for (float& x : out.voxels) x += dist(rng.engine());
  return out;
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

const SubjectVolumes& Dataset::at(const std::string& id) const {
  const auto it = subjects.find(id);
  if (it == subjects.end()) throw DataError("unknown subject '" + id + "'");
  return it->second;
}

std::vector<std::string> Dataset::ids() const {
  std::vector<std::string> out;
  out.reserve(subjects.size());
  for (const auto& [id, _] : subjects) out.push_back(id);
  return out;
}

std::string subject_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sub%03zu", index);
  return buf;
}

std::vector<std::string> write_phantom_dataset(const PhantomSpec& spec, std::size_t subjects,
                                               const std::filesystem::path& dir) {
  validate(spec);
  std::filesystem::create_directories(dir);
  json files = json::object();
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < subjects; ++i) {
    const std::string id = subject_name(i);
    const auto [a, b] = synth_phantom_pair(spec, id);
    save_volume(a, dir / (id + "_A.ssav"));
    save_volume(b, dir / (id + "_B.ssav"));
    files[id] = {{"x", id + "_A.ssav"}, {"y", id + "_B.ssav"}};
    ids.push_back(id);
  }
  json manifest{{"subjects", ids}, {"modalities", {{"x", "A"}, {"y", "B"}}}, {"files", files},
                {"phantom", spec_to_json(spec)}};
  write_json(manifest, dir / "manifest.json");
  return ids;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const json manifest = read_json(dir / "manifest.json");
  Dataset ds;
  std::vector<std::string> ids;
  try {
    ids = manifest.at("subjects").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw DataError((dir / "manifest.json").string() + ": malformed manifest: " + e.what());
  }
  for (const auto& id : ids) {
    std::string fx = id + "_A.ssav", fy = id + "_B.ssav";
    if (manifest.contains("files") && manifest["files"].contains(id)) {
      fx = manifest["files"][id].value("x", fx);
      fy = manifest["files"][id].value("y", fy);
    }
    Volume x = load_volume(dir / fx);
    Volume y = load_volume(dir / fy);
    if (x.dims != y.dims) throw DataError("subject " + id + ": modalities differ in dims");
    x.subject_id = y.subject_id = id;
    x.modality = "A";
    y.modality = "B";
    ds.subjects.emplace(id, SubjectVolumes{normalize_volume(x), normalize_volume(y)});
  }
  return ds;
}

Dataset make_phantom_dataset(const PhantomSpec& spec, std::size_t subjects) {
  Dataset ds;
  for (std::size_t i = 0; i < subjects; ++i) {
    const std::string id = subject_name(i);
    auto [a, b] = synth_phantom_pair(spec, id);
    ds.subjects.emplace(id, SubjectVolumes{normalize_volume(a), normalize_volume(b)});
  }
  return ds;
}

}  // namespace ssacgan
