#include "ssacgan/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include "ssacgan/ops.hpp"

namespace ssacgan {

std::string to_string(Regime r) {
  switch (r) {
    case Regime::cycle: return "cycle";
    case Regime::paired_only: return "paired_only";
    case Regime::semi: return "semi";
  }
  return "unknown";
}

Regime parse_regime(const std::string& name) {
  if (name == "cycle") return Regime::cycle;
  if (name == "paired_only") return Regime::paired_only;
  if (name == "semi") return Regime::semi;
  throw std::invalid_argument("unknown regime '" + name + "' (expected cycle, paired_only or semi)");
}

void validate(const TrainConfig& cfg) {
  if (cfg.epochs == 0) throw std::invalid_argument("epochs must be positive");
  if (cfg.lr_constant_epochs >= cfg.epochs) throw std::invalid_argument("epochs must exceed lr_constant_epochs");
  if (!(cfg.lr_end > 0.0) || !(cfg.lr_start >= cfg.lr_end) || !std::isfinite(cfg.lr_start)) {
    throw std::invalid_argument("learning rates must satisfy lr_start >= lr_end > 0");
  }
  if (cfg.batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (cfg.max_shift < -1) throw std::invalid_argument("max_shift must be >= 0 (or -1 for the default)");
  if (!(cfg.min_foreground >= 0.0 && cfg.min_foreground <= 1.0)) {
    throw std::invalid_argument("min_foreground must lie in [0, 1]");
  }
  validate(cfg.weights);
}

std::string canonical_string(const TrainConfig& cfg) {
  std::ostringstream s;
  s.precision(17);
  s << "regime=" << to_string(cfg.regime) << ";epochs=" << cfg.epochs << ";lr_start=" << cfg.lr_start
    << ";lr_end=" << cfg.lr_end << ";lr_constant_epochs=" << cfg.lr_constant_epochs
    << ";lambda=" << cfg.weights.lambda << ";alpha=" << cfg.weights.alpha
    << ";normalize_pair=" << cfg.weights.normalize_pair << ";batch_size=" << cfg.batch_size << ";seed=" << cfg.seed
    << ";max_shift=" << cfg.max_shift << ";shift_fill=" << cfg.shift_fill
    << ";min_foreground=" << cfg.min_foreground << ";checkpoint_every=" << cfg.checkpoint_every;
  const auto& g = cfg.layout.generator;
  s << ";generator=" << g.front_width << ',' << g.down1_width << ',' << g.down2_width << ',' << g.residual_blocks
    << ',' << g.wide_kernel << ";discriminator=";
  for (auto w : cfg.layout.discriminator.widths) s << w << ',';
  s << cfg.layout.discriminator.leaky_slope << ";paired=" << cfg.layout.paired.width1 << ','
    << cfg.layout.paired.width2;
  return s.str();
}

std::uint64_t config_hash(const TrainConfig& cfg) { return fnv1a64(canonical_string(cfg)); }

double lr_at_epoch(std::size_t epoch, const TrainConfig& cfg) {
  if (epoch >= cfg.epochs) {
    throw std::out_of_range("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.epochs) + ")");
  }
  if (epoch < cfg.lr_constant_epochs) return cfg.lr_start;
  if (epoch + 1 == cfg.epochs) return cfg.lr_end;
  const double into = static_cast<double>(epoch) - (static_cast<double>(cfg.lr_constant_epochs) - 1.0);
  const double span = static_cast<double>(cfg.epochs - cfg.lr_constant_epochs);
  return cfg.lr_start + into * (cfg.lr_end - cfg.lr_start) / span;
}

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

TrainingData make_training_data(const Dataset& dataset, const DatasetSplit& split, double min_foreground) {
  TrainingData data;
  auto sorted = [](std::vector<std::string> ids) {
    std::sort(ids.begin(), ids.end());
    return ids;
  };
  for (const auto& id : sorted(split.unpaired_x)) {
    const Volume& v = dataset.at(id).x;
    for (auto d : usable_slices(v, min_foreground)) data.x.push_back(slice_of(v, d));
  }
  for (const auto& id : sorted(split.unpaired_y)) {
    const Volume& v = dataset.at(id).y;
    for (auto d : usable_slices(v, min_foreground)) data.y.push_back(slice_of(v, d));
  }
  for (const auto& id : sorted(split.paired)) {
    const auto& s = dataset.at(id);
    for (auto d : usable_slices(s.x, min_foreground)) data.paired.emplace_back(slice_of(s.x, d), slice_of(s.y, d));
  }
  return data;
}

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

namespace {

struct ParameterGroup {
  const char* name;
  ParameterList params;
};

// The five update groups in a fixed order; shared by optimizers and checkpoints.
std::vector<ParameterGroup> parameter_groups(const ModelBundle& b) {
  ParameterList pair = b.d_pair.parameters("D_pair.");
  for (auto& p : b.d_x.trunk_parameters("D_X.")) pair.push_back(std::move(p));
  for (auto& p : b.d_y.trunk_parameters("D_Y.")) pair.push_back(std::move(p));
  return {{"G", b.g.parameters("G.")},
          {"F", b.f.parameters("F.")},
          {"D_X", b.d_x.parameters("D_X.")},
          {"D_Y", b.d_y.parameters("D_Y.")},
          {"D_pair", std::move(pair)}};
}

std::array<Adam*, 5> optimizers(TrainingState& s) {
  return {&s.opt_g, &s.opt_f, &s.opt_dx, &s.opt_dy, &s.opt_dpair};
}

std::array<const Adam*, 5> optimizers(const TrainingState& s) {
  return {&s.opt_g, &s.opt_f, &s.opt_dx, &s.opt_dy, &s.opt_dpair};
}

// Clears requires_grad on a set of leaves for its lifetime.
class Freeze {
 public:
  explicit Freeze(std::vector<Tensor> params) : params_(std::move(params)) {
    for (auto& p : params_) p.set_requires_grad(false);
  }
  ~Freeze() {
    for (auto& p : params_) p.set_requires_grad(true);
  }
  Freeze(const Freeze&) = delete;
  Freeze& operator=(const Freeze&) = delete;

 private:
  std::vector<Tensor> params_;
};

float finite_value(const Tensor& loss, const char* what) {
  const float v = loss.item();
  if (!std::isfinite(v)) throw DivergenceError(std::string(what) + " is not finite (" + std::to_string(v) + ")");
  return v;
}

}  // namespace

TrainingState TrainingState::create(const TrainConfig& cfg) {
  TrainingState s;
  s.bundle = ModelBundle::create(cfg.layout, Rng(cfg.seed).child("init"));
  s.bind_optimizers();
  return s;
}

void TrainingState::bind_optimizers() {
  auto groups = parameter_groups(bundle);
  auto opts = optimizers(*this);
  for (std::size_t i = 0; i < groups.size(); ++i) *opts[i] = Adam(tensors_of(groups[i].params));
}

// ---------------------------------------------------------------------------
// One step
// ---------------------------------------------------------------------------

LossBreakdown train_step(TrainingState& state, const Batch& batch, const TrainConfig& cfg, float lr,
                         const std::function<void()>& after_critics) {
  ModelBundle& m = state.bundle;
  const bool use_pair = batch.is_paired && cfg.regime != Regime::cycle;
  const Tensor& x = batch.x;
  const Tensor& y = batch.y;
  LossBreakdown out;

  const Tensor fake_y = m.g(x);
  const Tensor fake_x = m.f(y);
  const Tensor rec_x = m.f(fake_y);
  const Tensor rec_y = m.g(fake_x);
  const Tensor fake_y_fixed = fake_y.detach();
  const Tensor fake_x_fixed = fake_x.detach();

  // (1) D_X, (2) D_Y
  {
    state.opt_dx.zero_grad();
    const Tensor loss = loss_disc_single(m.d_x.forward(x).patch_map, m.d_x.forward(fake_x_fixed).patch_map);
    out.d_x = finite_value(loss, "loss_dx");
    backward(loss);
    state.opt_dx.step(lr);
  }
  {
    state.opt_dy.zero_grad();
    const Tensor loss = loss_disc_single(m.d_y.forward(y).patch_map, m.d_y.forward(fake_y_fixed).patch_map);
    out.d_y = finite_value(loss, "loss_dy");
    backward(loss);
    state.opt_dy.step(lr);
  }

  // (3) D_pair with the trunks that feed it
  if (use_pair) {
    state.opt_dpair.zero_grad();
    const Tensor fx = m.d_x.features(x);
    const Tensor fy = m.d_y.features(y);
    const Tensor ffx = m.d_x.features(fake_x_fixed);
    const Tensor ffy = m.d_y.features(fake_y_fixed);
    const Tensor loss = loss_disc_pair(m.d_pair.forward(fx, fy), m.d_pair.forward(fx, ffy),
                                       m.d_pair.forward(ffx, fy), m.d_pair.forward(ffx, ffy));
    out.d_pair = finite_value(loss, "loss_dpair");
    backward(loss);
    state.opt_dpair.step(lr);
  }

  if (after_critics) after_critics();

  // (4) G and F jointly
  {
    std::vector<Tensor> critics = tensors_of(m.d_x.parameters());
    for (auto& t : tensors_of(m.d_y.parameters())) critics.push_back(t);
    for (auto& t : tensors_of(m.d_pair.parameters())) critics.push_back(t);
    Freeze frozen(std::move(critics));

    state.opt_g.zero_grad();
    state.opt_f.zero_grad();
    const DiscriminatorOutput judged_y = m.d_y.forward(fake_y);
    const DiscriminatorOutput judged_x = m.d_x.forward(fake_x);
    const Tensor adv_g = loss_gen_adv(judged_y.patch_map);
    const Tensor adv_f = loss_gen_adv(judged_x.patch_map);
    const Tensor cyc = loss_cycle(x, rec_x, y, rec_y);
    Tensor objective = add(add(adv_g, adv_f), mul_scalar(cyc, cfg.weights.lambda));
    if (use_pair) {
      const Tensor fx = m.d_x.features(x);
      const Tensor fy = m.d_y.features(y);
      const Tensor pair = loss_gen_pair(m.d_pair.forward(fx, judged_y.features), m.d_pair.forward(judged_x.features, fy),
                                        m.d_pair.forward(judged_x.features, judged_y.features),
                                        cfg.weights.normalize_pair);
      out.pair = finite_value(pair, "pair");
      objective = add(objective, mul_scalar(pair, cfg.weights.alpha));
    }
    out.adv_g = finite_value(adv_g, "adv_g");
    out.adv_f = finite_value(adv_f, "adv_f");
    out.cyc = finite_value(cyc, "cyc");
    finite_value(objective, "generator objective");
    backward(objective);
    state.opt_g.step(lr);
    state.opt_f.step(lr);
  }
  out.total_g = loss_gen_total(out.adv_g, out.cyc, out.pair, cfg.weights);
  out.total_f = loss_gen_total(out.adv_f, out.cyc, out.pair, cfg.weights);
  return out;
}

// ---------------------------------------------------------------------------
// Loop
// ---------------------------------------------------------------------------

std::string loss_log_header() { return "epoch,step,loss_dx,loss_dy,loss_dpair,loss_g_total,loss_f_total,adv_f,cyc,pair_f,lr"; }

std::string format_log_row(const LogRow& r) {
  char buf[512];
  const auto& l = r.losses;
  std::snprintf(buf, sizeof buf, "%llu,%llu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g",
                static_cast<unsigned long long>(r.epoch), static_cast<unsigned long long>(r.step), l.d_x, l.d_y,
                l.d_pair, l.total_g, l.total_f, l.adv_f, l.cyc, l.pair, r.lr);
  return buf;
}

std::size_t steps_per_epoch(const TrainConfig& cfg, const TrainingData& data) {
  const std::size_t n = cfg.regime == Regime::paired_only ? data.paired.size() : data.x.size();
  return std::max<std::size_t>(1, n / cfg.batch_size);
}

std::size_t paired_interval(const TrainConfig& cfg, const TrainingData& data) {
  if (cfg.regime != Regime::semi || data.paired.empty()) return 0;
  return (data.x.size() + data.paired.size() - 1) / data.paired.size();
}

namespace {

std::vector<std::size_t> permutation(std::size_t n, Rng rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  std::shuffle(p.begin(), p.end(), rng.engine());
  return p;
}

Tensor stack(const std::vector<Image2d>& images) {
  const std::size_t h = images.front().height, w = images.front().width;
  std::vector<float> data;
  data.reserve(images.size() * h * w);
  for (const auto& im : images) data.insert(data.end(), im.pixels.begin(), im.pixels.end());
  return Tensor::from_data({images.size(), 1, h, w}, std::move(data));
}

Batch assemble(const StepPlan& plan, const TrainingData& data, const TrainConfig& cfg, std::uint64_t global_step) {
  Rng rng = Rng(cfg.seed).child("data").child("augment", global_step);
  std::vector<Image2d> xs, ys;
  for (std::size_t j = 0; j < plan.x.size(); ++j) {
    if (plan.is_paired) {
      const auto& [px, py] = data.paired[plan.x[j]];
      const int shift = cfg.max_shift >= 0 ? cfg.max_shift : default_max_shift(px.height, px.width);
      auto shifted = random_shift(px, &py, shift, rng, cfg.shift_fill);
      xs.push_back(std::move(shifted.x));
      ys.push_back(std::move(*shifted.y));
    } else {
      const auto& sx = data.x[plan.x[j]];
      const auto& sy = data.y[plan.y[j]];
      const int shift_x = cfg.max_shift >= 0 ? cfg.max_shift : default_max_shift(sx.height, sx.width);
      const int shift_y = cfg.max_shift >= 0 ? cfg.max_shift : default_max_shift(sy.height, sy.width);
      xs.push_back(random_shift(sx, nullptr, shift_x, rng, cfg.shift_fill).x);
      ys.push_back(random_shift(sy, nullptr, shift_y, rng, cfg.shift_fill).x);
    }
  }
  return {stack(xs), stack(ys), plan.is_paired};
}

void train_epoch(const TrainConfig& cfg, const TrainingData& data, TrainingState& state, std::size_t epoch,
                 std::vector<LogRow>& log, const RunOptions& options) {
  const double lr = lr_at_epoch(epoch, cfg);
  const auto plan = plan_epoch(cfg, data, epoch);
  for (const auto& step : plan) {
    const Batch batch = assemble(step, data, cfg, state.global_step);
    LogRow row;
    row.epoch = epoch;
    row.step = state.global_step;
    row.lr = lr;
    try {
      row.losses = train_step(state, batch, cfg, static_cast<float>(lr));
    } catch (const NumericalError& e) {
      throw DivergenceError("diverged at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(state.global_step) + ": " + e.what());
    } catch (const DivergenceError& e) {
      throw DivergenceError("diverged at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(state.global_step) + ": " + e.what());
    }
    ++state.global_step;
    if (options.on_step) options.on_step(row);
    log.push_back(row);
  }
  state.epochs_completed = epoch + 1;
}

}  // namespace

std::vector<StepPlan> plan_epoch(const TrainConfig& cfg, const TrainingData& data, std::size_t epoch) {
  const Rng epoch_rng = Rng(cfg.seed).child("data").child("epoch", epoch);
  const auto perm_x = permutation(data.x.size(), epoch_rng.child("shuffle_x"));
  const auto perm_y = permutation(data.y.size(), epoch_rng.child("shuffle_y"));
  const auto perm_p = permutation(data.paired.size(), epoch_rng.child("shuffle_paired"));
  const std::size_t steps = steps_per_epoch(cfg, data);
  const std::size_t k = paired_interval(cfg, data);
  const std::size_t b = cfg.batch_size;

  std::vector<StepPlan> plan(steps);
  std::size_t unpaired_cursor = 0, paired_cursor = 0;
  for (std::size_t s = 0; s < steps; ++s) {
    StepPlan& p = plan[s];
    p.is_paired = cfg.regime == Regime::paired_only || (k > 0 && s % k == k - 1);
    for (std::size_t j = 0; j < b; ++j) {
      if (p.is_paired) {
        const std::size_t i = perm_p[paired_cursor++ % perm_p.size()];
        p.x.push_back(i);
        p.y.push_back(i);
      } else {
        p.x.push_back(perm_x[unpaired_cursor % perm_x.size()]);
        p.y.push_back(perm_y[unpaired_cursor % perm_y.size()]);
        ++unpaired_cursor;
      }
    }
  }
  return plan;
}

std::vector<LogRow> run_training(const TrainConfig& cfg, const TrainingData& data, TrainingState& state,
                                 const RunOptions& options) {
  validate(cfg);
  if (cfg.regime == Regime::paired_only || cfg.regime == Regime::semi) {
    if (data.paired.empty()) throw DataError("regime " + to_string(cfg.regime) + " needs paired slices; none found");
  }
  if (cfg.regime != Regime::paired_only && (data.x.empty() || data.y.empty())) {
    throw DataError("regime " + to_string(cfg.regime) + " needs unpaired X and Y slices");
  }
  std::vector<LogRow> log;
  for (std::size_t e = state.epochs_completed; e < cfg.epochs; ++e) {
    train_epoch(cfg, data, state, e, log, options);
    const std::size_t done = e + 1;
    const bool cadence = cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0;
    if (!options.checkpoint_path.empty() && (cadence || done == cfg.epochs)) {
      save_checkpoint(state, cfg, options.checkpoint_path);
    }
  }
  return log;
}

std::vector<LogRow> train_epochs(const TrainConfig& cfg, const TrainingData& data, TrainingState& state,
                                 std::size_t epochs) {
  std::vector<LogRow> log;
  for (std::size_t i = 0; i < epochs; ++i) train_epoch(cfg, data, state, state.epochs_completed, log, {});
  return log;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

struct Record {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

class ArchiveWriter {
 public:
  ArchiveWriter() {
    bytes_.insert(bytes_.end(), kCheckpointMagic.begin(), kCheckpointMagic.end());
    put_u16(kCheckpointVersion);
  }

  void add(const std::string& name, const Shape& shape, std::span<const float> values) {
    put_u32(static_cast<std::uint32_t>(name.size()));
    bytes_.insert(bytes_.end(), name.begin(), name.end());
    bytes_.push_back(static_cast<std::uint8_t>(shape.size()));
    for (auto d : shape) put_u32(static_cast<std::uint32_t>(d));
    for (float v : values) put_u32(std::bit_cast<std::uint32_t>(v));
  }
  void add(const std::string& name, const std::vector<float>& values) { add(name, {values.size()}, values); }
  // 64-bit integers as four exact 16-bit chunks, least significant first.
  void add_u64(const std::string& name, std::uint64_t v) {
    add(name, {static_cast<float>(v & 0xffff), static_cast<float>((v >> 16) & 0xffff),
               static_cast<float>((v >> 32) & 0xffff), static_cast<float>(v >> 48)});
  }

  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  void put_u16(std::uint16_t v) {
    bytes_.push_back(static_cast<std::uint8_t>(v & 0xff));
    bytes_.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void put_u32(std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) bytes_.push_back(static_cast<std::uint8_t>((v >> s) & 0xff));
  }
  std::vector<std::uint8_t> bytes_;
};

class ArchiveReader {
 public:
  explicit ArchiveReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::map<std::string, Record> read_all() {
    if (bytes_.size() < 6 || !std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), bytes_.begin())) {
      throw CheckpointError("corrupt archive: bad magic");
    }
    pos_ = 4;
    const std::uint16_t version = static_cast<std::uint16_t>(bytes_[4] | (bytes_[5] << 8));
    pos_ = 6;
    if (version != kCheckpointVersion) {
      throw CheckpointError("checkpoint version mismatch: file has " + std::to_string(version) + ", expected " +
                            std::to_string(kCheckpointVersion));
    }
    std::map<std::string, Record> records;
    bool ended = false;
    while (pos_ < bytes_.size()) {
      if (ended) throw CheckpointError("corrupt archive: data after end record");
      const std::uint32_t name_len = get_u32();
      need(name_len);
      std::string name(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                       bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + name_len));
      pos_ += name_len;
      need(1);
      const std::uint8_t rank = bytes_[pos_++];
      Record r;
      std::size_t count = 1;
      for (std::uint8_t i = 0; i < rank; ++i) {
        r.dims.push_back(get_u32());
        count *= r.dims.back();
      }
      need(4 * count);
      r.values.resize(count);
      for (auto& v : r.values) v = std::bit_cast<float>(get_u32());
      if (name == "meta.end") ended = true;
      if (!records.emplace(std::move(name), std::move(r)).second) {
        throw CheckpointError("corrupt archive: duplicate record");
      }
    }
    if (!ended) throw CheckpointError("corrupt archive: truncated (end record missing)");
    return records;
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw CheckpointError("corrupt archive: truncated record");
  }
  std::uint32_t get_u32() {
    need(4);
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += 4;
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

const Record& find(const std::map<std::string, Record>& records, const std::string& name) {
  const auto it = records.find(name);
  if (it == records.end()) throw CheckpointError("corrupt archive: missing record '" + name + "'");
  return it->second;
}

const std::vector<float>& values_of(const std::map<std::string, Record>& records, const std::string& name,
                                    std::size_t expected_count) {
  const Record& r = find(records, name);
  if (expected_count != 0 && r.values.size() != expected_count) {
    throw CheckpointError("corrupt archive: record '" + name + "' has " + std::to_string(r.values.size()) +
                          " values, expected " + std::to_string(expected_count));
  }
  return r.values;
}

std::uint64_t read_u64(const std::map<std::string, Record>& records, const std::string& name) {
  const auto& v = values_of(records, name, 4);
  std::uint64_t out = 0;
  for (int i = 3; i >= 0; --i) {
    const float c = v[static_cast<std::size_t>(i)];
    if (!(c >= 0.0f && c <= 65535.0f) || c != std::floor(c)) {
      throw CheckpointError("corrupt archive: bad integer record '" + name + "'");
    }
    out = (out << 16) | static_cast<std::uint64_t>(c);
  }
  return out;
}

std::size_t as_count(float v, const std::string& name) {
  if (!(v >= 0.0f && v < 1e7f) || v != std::floor(v)) throw CheckpointError("corrupt archive: bad value in " + name);
  return static_cast<std::size_t>(v);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const TrainingState& state, const TrainConfig& cfg) {
  ArchiveWriter w;
  const ModelLayout& layout = state.bundle.layout;
  const auto& g = layout.generator;
  w.add("arch.generator", {static_cast<float>(g.front_width), static_cast<float>(g.down1_width),
                           static_cast<float>(g.down2_width), static_cast<float>(g.residual_blocks),
                           static_cast<float>(g.wide_kernel)});
  std::vector<float> disc;
  for (auto v : layout.discriminator.widths) disc.push_back(static_cast<float>(v));
  w.add("arch.discriminator", disc);
  w.add("arch.leaky_slope", {layout.discriminator.leaky_slope});
  w.add("arch.paired", {static_cast<float>(layout.paired.width1), static_cast<float>(layout.paired.width2)});
  w.add_u64("meta.seed", cfg.seed);
  w.add_u64("meta.config_hash", config_hash(cfg));
  w.add("meta.regime", {static_cast<float>(static_cast<int>(cfg.regime))});
  w.add_u64("meta.epochs_completed", state.epochs_completed);
  w.add_u64("meta.global_step", state.global_step);

  for (const auto& p : state.bundle.parameters()) w.add("param." + p.name, p.tensor.shape(), p.tensor.data());

  const auto groups = parameter_groups(state.bundle);
  const auto opts = optimizers(state);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const AdamState& s = opts[i]->state();
    const std::string prefix = std::string("adam.") + groups[i].name + ".";
    w.add_u64(prefix + "step", s.step_count);
    w.add(prefix + "hyper", {s.beta1, s.beta2, s.epsilon});
    for (std::size_t j = 0; j < groups[i].params.size(); ++j) {
      const auto& shape = groups[i].params[j].tensor.shape();
      w.add(prefix + "m." + groups[i].params[j].name, shape, s.first_moment[j]);
      w.add(prefix + "v." + groups[i].params[j].name, shape, s.second_moment[j]);
    }
  }
  w.add("meta.end", {0.0f});
  return w.take();
}

LoadedCheckpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  const auto records = ArchiveReader(bytes).read_all();

  ModelLayout layout;
  const auto& g = values_of(records, "arch.generator", 5);
  layout.generator = {as_count(g[0], "arch.generator"), as_count(g[1], "arch.generator"),
                      as_count(g[2], "arch.generator"), as_count(g[3], "arch.generator"),
                      as_count(g[4], "arch.generator")};
  layout.discriminator.widths.clear();
  for (float v : values_of(records, "arch.discriminator", 0)) {
    layout.discriminator.widths.push_back(as_count(v, "arch.discriminator"));
  }
  layout.discriminator.leaky_slope = values_of(records, "arch.leaky_slope", 1)[0];
  const auto& pw = values_of(records, "arch.paired", 2);
  layout.paired = {as_count(pw[0], "arch.paired"), as_count(pw[1], "arch.paired")};

  LoadedCheckpoint out;
  out.info.seed = read_u64(records, "meta.seed");
  out.info.config_hash = read_u64(records, "meta.config_hash");
  const float regime = values_of(records, "meta.regime", 1)[0];
  if (regime != 0.0f && regime != 1.0f && regime != 2.0f) throw CheckpointError("corrupt archive: bad regime");
  out.info.regime = static_cast<Regime>(static_cast<int>(regime));

  TrainingState& state = out.state;
  try {
    state.bundle = ModelBundle::create(layout, Rng(0));
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("corrupt archive: invalid architecture: ") + e.what());
  }
  state.bind_optimizers();
  state.epochs_completed = read_u64(records, "meta.epochs_completed");
  state.global_step = read_u64(records, "meta.global_step");

  std::size_t expected_records = 10;  // arch x4, meta x5, end
  for (auto& p : state.bundle.parameters()) {
    const Record& r = find(records, "param." + p.name);
    if (!std::equal(r.dims.begin(), r.dims.end(), p.tensor.shape().begin(), p.tensor.shape().end())) {
      throw CheckpointError("corrupt archive: shape mismatch for '" + p.name + "'");
    }
    std::copy(r.values.begin(), r.values.end(), p.tensor.mutable_data().begin());
    ++expected_records;
  }
  const auto groups = parameter_groups(state.bundle);
  auto opts = optimizers(state);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    AdamState& s = opts[i]->state();
    const std::string prefix = std::string("adam.") + groups[i].name + ".";
    s.step_count = read_u64(records, prefix + "step");
    const auto& hyper = values_of(records, prefix + "hyper", 3);
    s.beta1 = hyper[0];
    s.beta2 = hyper[1];
    s.epsilon = hyper[2];
    expected_records += 2;
    for (std::size_t j = 0; j < groups[i].params.size(); ++j) {
      const std::size_t n = groups[i].params[j].tensor.numel();
      s.first_moment[j] = values_of(records, prefix + "m." + groups[i].params[j].name, n);
      s.second_moment[j] = values_of(records, prefix + "v." + groups[i].params[j].name, n);
      expected_records += 2;
    }
  }
  if (records.size() != expected_records) throw CheckpointError("corrupt archive: unexpected extra records");
  return out;
}

void save_checkpoint(const TrainingState& state, const TrainConfig& cfg, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(state, cfg);
  // Write-then-rename so an interrupted save never leaves a half file behind.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

std::optional<std::string> check_resume(const CheckpointInfo& info, const TrainConfig& cfg, bool allow_mismatch) {
  if (info.seed != cfg.seed) {
    throw CheckpointError("checkpoint seed " + std::to_string(info.seed) + " differs from requested seed " +
                          std::to_string(cfg.seed));
  }
  if (info.config_hash == config_hash(cfg)) return std::nullopt;
  const std::string msg = "checkpoint config hash differs from the current configuration";
  if (!allow_mismatch) throw CheckpointError(msg + " (pass the allow-mismatch option to resume anyway)");
  return "warning: " + msg + "; resuming anyway";
}

}  // namespace ssacgan
