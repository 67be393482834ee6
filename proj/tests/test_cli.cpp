#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ssacgan/experiment.hpp"

using namespace ssacgan;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ssacgan_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

struct Result {
  int code = -1;
  std::string err;
};

// Runs the CLI with `args` inside `cwd`.
Result cli(const fs::path& cwd, const std::string& args) {
  const fs::path err = cwd / "stderr.txt";
  const std::string cmd = "cd '" + cwd.string() + "' && '" SSACGAN_CLI "' " + args + " >/dev/null 2>'" +
                          err.string() + "'";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err);
  return r;
}

std::size_t count_lines(const fs::path& p) {
  const std::string text = slurp(p);
  return std::count(text.begin(), text.end(), '\n');
}

const char* kTinyConfig = R"({
  "data": {"phantom": {"image_size": 32, "depth": 4, "seed": 5}, "subjects": 10, "split_seed": 2},
  "train": {"epochs": 2, "lr_constant_epochs": 1,
    "layout": {"generator": {"front_width": 4, "down1_width": 8, "down2_width": 8, "residual_blocks": 1},
               "discriminator": {"widths": [4, 8]}, "paired": {"width1": 8, "width2": 8}}},
  "eval": {"sigmas": [0, 0.1, 0.4], "noise_seed": 9}
})";

fs::path tiny_setup(const std::string& name) {
  const fs::path dir = scratch(name);
  write_file(dir / "cfg.json", kTinyConfig);
  return dir;
}

std::vector<fs::path> checkpoints_under(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.path().extension() == ".ssck") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("experiment config: defaults, overrides and unknown keys") {
  const ExperimentConfig def = parse_experiment_config("{}");
  CHECK(def.train.epochs == 200);
  CHECK(def.train.lr_constant_epochs == 100);
  CHECK(def.train.lr_start == 2e-4);
  CHECK(def.train.weights.lambda == 10.0);
  CHECK(def.data.subjects == 40);
  CHECK(def.eval.seeds.size() == 5);

  const ExperimentConfig tiny = parse_experiment_config(kTinyConfig);
  CHECK(tiny.train.epochs == 2);
  CHECK(tiny.train.layout.discriminator.widths == std::vector<std::size_t>{4, 8});
  CHECK(tiny.train.layout.generator.wide_kernel == 7);
  CHECK(tiny.data.phantom.image_size == 32);
  CHECK(tiny.eval.sigmas == std::vector<double>{0, 0.1, 0.4});

  // echo then re-parse reproduces the same document
  const std::string echoed = experiment_config_json(tiny);
  CHECK(experiment_config_json(parse_experiment_config(echoed)) == echoed);
  CHECK(config_hash(parse_experiment_config(echoed).train) == config_hash(tiny.train));

  for (const char* bad : {R"({"trian": {}})", R"({"train": {"epoch": 3}})", R"({"data": {"phantom": {"size": 3}}})",
                          R"({"train": {"layout": {"generator": {"width": 3}}}})", R"({"eval": {"sigma": [0.1]}})",
                          R"({"train": {"layout": {"critic": {}}}})"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(parse_experiment_config(bad), ConfigError);
  }
  CHECK_THROWS_AS(parse_experiment_config("{not json"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"train": {"epochs": "many"}})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"train": {"regime": "both"}})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"train": {"epochs": 10, "lr_constant_epochs": 10}})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"eval": {"sigmas": [0.2, 0.1]}})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"data": {"phantom": {"image_size": 30}}})"), ConfigError);
  CHECK_THROWS_AS(parse_phantom_spec(R"({"lesion_prob": 1})"), ConfigError);
}

TEST_CASE("synth: file count, byte-identical reruns, lesions") {
  const fs::path dir = scratch("synth");
  write_file(dir / "spec.json", R"({"image_size": 32, "depth": 4, "seed": 11})");
  REQUIRE(cli(dir, "synth --spec spec.json --out a --subjects 10").code == 0);
  REQUIRE(cli(dir, "synth --spec spec.json --out b --subjects 10").code == 0);

  std::size_t volumes = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    if (e.path().extension() == ".ssav") ++volumes;
    CHECK(slurp(e.path()) == slurp(dir / "b" / e.path().filename()));
  }
  CHECK(volumes == 20);
  CHECK(fs::exists(dir / "a" / "manifest.json"));

  // every A volume holds voxels above the lesion threshold, scanned directly
  auto lesion_count = [&](const std::string& out, double p) {
    write_file(dir / "lesion.json", R"({"image_size": 32, "depth": 6, "lesion_probability": )" + std::to_string(p) +
                                        "}");
    REQUIRE(cli(dir, "synth --spec lesion.json --out " + out + " --subjects 6").code == 0);
    std::size_t with_lesion = 0;
    for (std::size_t i = 0; i < 6; ++i) {
      const Volume a = load_volume(dir / out / (subject_name(i) + "_A.ssav"));
      const bool hit = std::any_of(a.voxels.begin(), a.voxels.end(), [](float v) { return v > 0.9f; });
      with_lesion += hit;
    }
    return with_lesion;
  };
  CHECK(lesion_count("always", 1.0) == 6);
  CHECK(lesion_count("never", 0.0) == 0);

  write_file(dir / "bad.json", R"({"image_size": 30})");
  CHECK(cli(dir, "synth --spec bad.json --out c --subjects 3").code == 1);
  CHECK(cli(dir, "synth --subjects 3").code == 1);
}

TEST_CASE("split command writes a manifest matching the apportionment") {
  const fs::path dir = scratch("split");
  write_file(dir / "spec.json", R"({"image_size": 16, "depth": 2})");
  REQUIRE(cli(dir, "synth --spec spec.json --out ds --subjects 20").code == 0);
  REQUIRE(cli(dir, "split --data ds --out split.json --seed 4").code == 0);
  const DatasetSplit s = load_split(dir / "split.json");
  CHECK(s.sizes() == std::array<std::size_t, 5>{6, 6, 2, 2, 4});
  CHECK(cli(dir, "split --data missing --out s.json").code == 2);
  CHECK(cli(dir, "split --data ds --out s.json --ratios 1 2 3").code == 1);
}

TEST_CASE("train: seeds are mandatory, errors map to exit codes") {
  const fs::path dir = tiny_setup("train_errors");
  const Result no_seed = cli(dir, "train --config cfg.json --out runs");
  CHECK(no_seed.code == 1);
  CHECK(no_seed.err.find("--seed") != std::string::npos);
  CHECK(cli(dir, "train --config cfg.json --seed 0 --regime both --out runs").code == 1);
  CHECK(cli(dir, "train --config cfg.json --seed 0 --data nowhere --out runs").code == 2);

  std::string diverging = kTinyConfig;
  diverging.replace(diverging.find("\"epochs\""), 0, "\"lr_start\": 1e30, ");
  write_file(dir / "diverge.json", diverging);
  CHECK(cli(dir, "train --config diverge.json --seed 0 --out boom").code == 3);
}

TEST_CASE("train: five seeds give five independent checkpoints") {
  const fs::path dir = tiny_setup("five");
  REQUIRE(cli(dir, "train --config cfg.json --seed 0 --seed 1 --seed 2 --seed 3 --seed 4 --jobs 2 --out runs").code ==
          0);
  const auto found = checkpoints_under(dir / "runs");
  REQUIRE(found.size() == 5);
  for (std::size_t s = 0; s < 5; ++s) {
    const fs::path run = dir / "runs" / ("seed_" + std::to_string(s));
    CHECK(fs::exists(run / kEffectiveConfigFile));
    CHECK(load_checkpoint(run / kCheckpointFile).info.seed == s);
    // header + one row per step
    CHECK(count_lines(run / kLossLogFile) > 1);
  }
  CHECK(slurp(found[0]) != slurp(found[1]));

  // a sequential rerun of one seed is byte-identical to its parallel run
  REQUIRE(cli(dir, "train --config cfg.json --seed 3 --out again").code == 0);
  CHECK(slurp(dir / "again/seed_3" / kCheckpointFile) == slurp(dir / "runs/seed_3" / kCheckpointFile));
  CHECK(slurp(dir / "again/seed_3" / kLossLogFile) == slurp(dir / "runs/seed_3" / kLossLogFile));
}

TEST_CASE("train: cycle regime ignores the paired subset") {
  const fs::path dir = tiny_setup("cycle");
  REQUIRE(cli(dir, "train --config cfg.json --regime cycle --seed 0 --out runs").code == 0);
  std::istringstream log(slurp(dir / "runs/seed_0" / kLossLogFile));
  std::string line;
  std::getline(log, line);
  std::size_t rows = 0;
  while (std::getline(log, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    REQUIRE(cells.size() == 11);
    CHECK(cells[4] == "0");  // loss_dpair
    CHECK(cells[9] == "0");  // pair_f
    ++rows;
  }
  CHECK(rows > 0);
  CHECK(load_checkpoint(dir / "runs/seed_0" / kCheckpointFile).info.regime == Regime::cycle);
}

TEST_CASE("train: resume policy") {
  const fs::path dir = tiny_setup("resume");
  REQUIRE(cli(dir, "train --config cfg.json --seed 1 --out runs").code == 0);
  const std::string log = slurp(dir / "runs/seed_1" / kLossLogFile);
  const std::string ck = slurp(dir / "runs/seed_1" / kCheckpointFile);

  // finished run: resuming is a no-op
  REQUIRE(cli(dir, "train --config cfg.json --seed 1 --out runs --resume").code == 0);
  CHECK(slurp(dir / "runs/seed_1" / kLossLogFile) == log);
  CHECK(slurp(dir / "runs/seed_1" / kCheckpointFile) == ck);

  // changed config: refused unless explicitly allowed
  const Result refused = cli(dir, "train --config cfg.json --seed 1 --epochs 3 --out runs --resume");
  CHECK(refused.code == 2);
  const Result allowed =
      cli(dir, "train --config cfg.json --seed 1 --epochs 3 --out runs --resume --allow-config-mismatch");
  CHECK(allowed.code == 0);
  CHECK(allowed.err.find("warning") != std::string::npos);
  CHECK(load_checkpoint(dir / "runs/seed_1" / kCheckpointFile).state.epochs_completed == 3);
  CHECK(slurp(dir / "runs/seed_1" / kLossLogFile).rfind(log, 0) == 0);
}

TEST_CASE("eval: rows, sweep files and corrupted checkpoints") {
  const fs::path dir = tiny_setup("eval");
  REQUIRE(cli(dir, "train --config cfg.json --seed 0 --seed 1 --out runs").code == 0);

  REQUIRE(cli(dir, "eval --checkpoints runs/seed_0 --config cfg.json --out rep1").code == 0);
  CHECK(count_lines(dir / "rep1/metrics.csv") == 3);  // header + both directions
  CHECK(fs::exists(dir / "rep1/metrics_summary.csv"));
  CHECK_FALSE(fs::exists(dir / "rep1/noise_sweep.csv"));
  CHECK_FALSE(fs::exists(dir / "rep1/noise_sweep.svg"));

  REQUIRE(cli(dir, "eval --checkpoints runs --config cfg.json --out rep2 --noise-sweep").code == 0);
  CHECK(count_lines(dir / "rep2/metrics.csv") == 5);
  CHECK(fs::exists(dir / "rep2/noise_sweep.csv"));
  CHECK(fs::exists(dir / "rep2/noise_sweep.svg"));

  // without --config the run directory's echoed config supplies the data
  REQUIRE(cli(dir, "eval --checkpoints runs --out rep3").code == 0);
  CHECK(slurp(dir / "rep3/metrics.csv") == slurp(dir / "rep2/metrics.csv"));

  fs::copy(dir / "runs", dir / "broken", fs::copy_options::recursive);
  const fs::path bad = dir / "broken/seed_1" / kCheckpointFile;
  const std::string bytes = slurp(bad);
  write_file(bad, bytes.substr(0, bytes.size() / 2));
  const Result r = cli(dir, "eval --checkpoints broken --config cfg.json --out rep4");
  CHECK(r.code == 2);
  CHECK(r.err.find(bad.lexically_relative(dir).string()) != std::string::npos);
  const auto rows = read_metrics_csv(dir / "rep4/metrics.csv");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].seed == 0);

  scratch("eval_empty");
  CHECK(cli(dir, "eval --checkpoints " + (fs::temp_directory_path() / "ssacgan_test_cli_eval_empty").string() +
                     " --config cfg.json --out rep5")
            .code == 2);
}

TEST_CASE("infer translates one volume file") {
  const fs::path dir = tiny_setup("infer");
  write_file(dir / "spec.json", R"({"image_size": 32, "depth": 4})");
  REQUIRE(cli(dir, "synth --spec spec.json --out ds --subjects 5").code == 0);
  REQUIRE(cli(dir, "train --config cfg.json --seed 0 --out runs").code == 0);
  REQUIRE(cli(dir, "infer --checkpoint runs/seed_0/checkpoint.ssck --input ds/" + subject_name(0) +
                       "_A.ssav --output out.ssav")
              .code == 0);
  const Volume out = load_volume(dir / "out.ssav");
  const Volume in = load_volume(dir / "ds" / (subject_name(0) + "_A.ssav"));
  CHECK(out.dims == in.dims);
  CHECK(std::all_of(out.voxels.begin(), out.voxels.end(), [](float v) { return v >= -1.0f && v <= 1.0f; }));
  CHECK(cli(dir, "infer --checkpoint runs/seed_0/checkpoint.ssck --input ds/" + subject_name(0) +
                     "_A.ssav --output o.ssav --direction sideways")
            .code == 1);
}
