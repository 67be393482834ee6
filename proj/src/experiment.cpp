#include "ssacgan/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace ssacgan {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(what + ": invalid JSON: " + e.what());
  }
}

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  require_object(j, where);
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

// Reads j[key] into `out` when present.
template <typename T>
void get(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

void read_phantom(const json& j, PhantomSpec& s, const std::string& where) {
  check_keys(j,
             {"image_size", "depth", "min_ellipses", "max_ellipses", "lesion_probability", "lesion_intensity",
              "lesion_threshold", "inversion_gain", "inversion_offset", "bias_amplitude", "seed"},
             where);
  get(j, "image_size", s.image_size, where);
  get(j, "depth", s.depth, where);
  get(j, "min_ellipses", s.min_ellipses, where);
  get(j, "max_ellipses", s.max_ellipses, where);
  get(j, "lesion_probability", s.lesion_probability, where);
  get(j, "lesion_intensity", s.lesion_intensity, where);
  get(j, "lesion_threshold", s.lesion_threshold, where);
  get(j, "inversion_gain", s.inversion_gain, where);
  get(j, "inversion_offset", s.inversion_offset, where);
  get(j, "bias_amplitude", s.bias_amplitude, where);
  get(j, "seed", s.seed, where);
  try {
    validate(s);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

json phantom_json(const PhantomSpec& s) {
  return {{"image_size", s.image_size},
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

void read_layout(const json& j, ModelLayout& l) {
  check_keys(j, {"generator", "discriminator", "paired"}, "train.layout");
  if (j.contains("generator")) {
    const json& g = j["generator"];
    const std::string where = "train.layout.generator";
    check_keys(g, {"front_width", "down1_width", "down2_width", "residual_blocks", "wide_kernel"}, where);
    get(g, "front_width", l.generator.front_width, where);
    get(g, "down1_width", l.generator.down1_width, where);
    get(g, "down2_width", l.generator.down2_width, where);
    get(g, "residual_blocks", l.generator.residual_blocks, where);
    get(g, "wide_kernel", l.generator.wide_kernel, where);
  }
  if (j.contains("discriminator")) {
    const json& d = j["discriminator"];
    const std::string where = "train.layout.discriminator";
    check_keys(d, {"widths", "leaky_slope"}, where);
    get(d, "widths", l.discriminator.widths, where);
    get(d, "leaky_slope", l.discriminator.leaky_slope, where);
  }
  if (j.contains("paired")) {
    const json& p = j["paired"];
    const std::string where = "train.layout.paired";
    check_keys(p, {"width1", "width2"}, where);
    get(p, "width1", l.paired.width1, where);
    get(p, "width2", l.paired.width2, where);
  }
}

void read_train(const json& j, TrainConfig& t) {
  const std::string where = "train";
  check_keys(j,
             {"regime", "epochs", "lr_start", "lr_end", "lr_constant_epochs", "lambda", "alpha", "normalize_pair",
              "batch_size", "seed", "max_shift", "shift_fill", "min_foreground", "checkpoint_every", "layout"},
             where);
  if (j.contains("regime")) {
    try {
      t.regime = parse_regime(j["regime"].get<std::string>());
    } catch (const std::exception& e) {
      throw ConfigError("train.regime: " + std::string(e.what()));
    }
  }
  get(j, "epochs", t.epochs, where);
  get(j, "lr_start", t.lr_start, where);
  get(j, "lr_end", t.lr_end, where);
  get(j, "lr_constant_epochs", t.lr_constant_epochs, where);
  get(j, "lambda", t.weights.lambda, where);
  get(j, "alpha", t.weights.alpha, where);
  get(j, "normalize_pair", t.weights.normalize_pair, where);
  get(j, "batch_size", t.batch_size, where);
  get(j, "seed", t.seed, where);
  get(j, "max_shift", t.max_shift, where);
  get(j, "shift_fill", t.shift_fill, where);
  get(j, "min_foreground", t.min_foreground, where);
  get(j, "checkpoint_every", t.checkpoint_every, where);
  if (j.contains("layout")) read_layout(j["layout"], t.layout);
}

json train_json(const TrainConfig& t) {
  const auto& l = t.layout;
  return {{"regime", to_string(t.regime)},
          {"epochs", t.epochs},
          {"lr_start", t.lr_start},
          {"lr_end", t.lr_end},
          {"lr_constant_epochs", t.lr_constant_epochs},
          {"lambda", t.weights.lambda},
          {"alpha", t.weights.alpha},
          {"normalize_pair", t.weights.normalize_pair},
          {"batch_size", t.batch_size},
          {"seed", t.seed},
          {"max_shift", t.max_shift},
          {"shift_fill", t.shift_fill},
          {"min_foreground", t.min_foreground},
          {"checkpoint_every", t.checkpoint_every},
          {"layout",
           {{"generator",
             {{"front_width", l.generator.front_width},
              {"down1_width", l.generator.down1_width},
              {"down2_width", l.generator.down2_width},
              {"residual_blocks", l.generator.residual_blocks},
              {"wide_kernel", l.generator.wide_kernel}}},
            {"discriminator", {{"widths", l.discriminator.widths}, {"leaky_slope", l.discriminator.leaky_slope}}},
            {"paired", {{"width1", l.paired.width1}, {"width2", l.paired.width2}}}}}};
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  const json j = parse_json(json_text, "experiment config");
  check_keys(j, {"data", "train", "eval"}, "experiment config");
  ExperimentConfig cfg;
  if (j.contains("data")) {
    const json& d = j["data"];
    check_keys(d, {"dir", "split", "phantom", "subjects", "split_seed", "ratios"}, "data");
    std::string dir, split;
    get(d, "dir", dir, "data");
    get(d, "split", split, "data");
    cfg.data.dir = dir;
    cfg.data.split = split;
    if (d.contains("phantom")) read_phantom(d["phantom"], cfg.data.phantom, "data.phantom");
    get(d, "subjects", cfg.data.subjects, "data");
    get(d, "split_seed", cfg.data.split_seed, "data");
    get(d, "ratios", cfg.data.ratios, "data");
  }
  if (j.contains("train")) read_train(j["train"], cfg.train);
  if (j.contains("eval")) {
    const json& e = j["eval"];
    check_keys(e, {"sigmas", "noise_seed", "seeds"}, "eval");
    get(e, "sigmas", cfg.eval.sigmas, "eval");
    get(e, "noise_seed", cfg.eval.noise_seed, "eval");
    get(e, "seeds", cfg.eval.seeds, "eval");
    for (std::size_t i = 0; i < cfg.eval.sigmas.size(); ++i) {
      if (cfg.eval.sigmas[i] < 0.0 || (i > 0 && cfg.eval.sigmas[i] <= cfg.eval.sigmas[i - 1])) {
        throw ConfigError("eval.sigmas must be non-negative and strictly increasing");
      }
    }
  }
  try {
    validate(cfg.train);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  return parse_experiment_config(read_text(path));
}

std::string experiment_config_json(const ExperimentConfig& cfg) {
  const json j{{"data",
                {{"dir", cfg.data.dir.string()},
                 {"split", cfg.data.split.string()},
                 {"phantom", phantom_json(cfg.data.phantom)},
                 {"subjects", cfg.data.subjects},
                 {"split_seed", cfg.data.split_seed},
                 {"ratios", cfg.data.ratios}}},
               {"train", train_json(cfg.train)},
               {"eval", {{"sigmas", cfg.eval.sigmas}, {"noise_seed", cfg.eval.noise_seed}, {"seeds", cfg.eval.seeds}}}};
  return j.dump(2) + "\n";
}

PhantomSpec parse_phantom_spec(const std::string& json_text) {
  PhantomSpec spec;
  read_phantom(parse_json(json_text, "phantom spec"), spec, "phantom spec");
  return spec;
}

PhantomSpec load_phantom_spec(const fs::path& path) { return parse_phantom_spec(read_text(path)); }

PreparedData prepare_data(const DataSection& data) {
  PreparedData out;
  out.dataset = data.dir.empty() ? make_phantom_dataset(data.phantom, data.subjects) : load_dataset(data.dir);
  if (!data.split.empty()) {
    out.split = load_split(data.split);
    for (const auto* bucket : {&out.split.unpaired_x, &out.split.unpaired_y, &out.split.paired,
                               &out.split.validation, &out.split.test}) {
      for (const auto& id : *bucket) out.dataset.at(id);  // throws DataError for unknown subjects
    }
  } else {
    Rng rng(data.split_seed);
    out.split = split_dataset(out.dataset.ids(), data.ratios, rng);
  }
  return out;
}

namespace {

// Keeps the header and the rows of completed epochs.
void trim_log(const fs::path& path, std::uint64_t epochs_completed) {
  std::vector<std::string> kept;
  {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      if (kept.empty()) {
        kept.push_back(line);
        continue;
      }
      if (line.empty()) continue;
      if (std::stoull(line.substr(0, line.find(','))) < epochs_completed) kept.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  if (kept.empty()) kept.push_back(loss_log_header());
  for (const auto& l : kept) out << l << '\n';
}

}  // namespace

TrainingState train_seed(const ExperimentConfig& cfg, const TrainingData& data, const fs::path& run_dir,
                         const SeedRunOptions& options) {
  std::error_code ec;
  fs::create_directories(run_dir, ec);
  if (ec) throw std::runtime_error("cannot create " + run_dir.string() + ": " + ec.message());
  const fs::path checkpoint = run_dir / kCheckpointFile;
  const fs::path log_path = run_dir / kLossLogFile;

  TrainingState state;
  if (options.resume && fs::exists(checkpoint)) {
    LoadedCheckpoint loaded = load_checkpoint(checkpoint);
    const auto warning = check_resume(loaded.info, cfg.train, options.allow_config_mismatch);
    if (warning && options.warn) options.warn(*warning);
    state = std::move(loaded.state);
    trim_log(log_path, state.epochs_completed);
  } else {
    state = TrainingState::create(cfg.train);
    std::ofstream(log_path, std::ios::trunc) << loss_log_header() << '\n';
  }
  {
    std::ofstream out(run_dir / kEffectiveConfigFile, std::ios::trunc);
    out << experiment_config_json(cfg);
    if (!out) throw std::runtime_error("cannot write " + (run_dir / kEffectiveConfigFile).string());
  }

  std::ofstream log(log_path, std::ios::app);
  if (!log) throw std::runtime_error("cannot write " + log_path.string());
  RunOptions run;
  run.checkpoint_path = checkpoint;
  run.on_step = [&log](const LogRow& row) { log << format_log_row(row) << '\n'; };
  run_training(cfg.train, data, state, run);
  log.flush();
  return state;
}

}  // namespace ssacgan
