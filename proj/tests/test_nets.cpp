#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>

#include "ssacgan/nets.hpp"
#include "ssacgan/rng.hpp"
#include "support/oracles.hpp"

using namespace ssacgan;

namespace {

std::size_t count(const ParameterList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

void fill(const ParameterList& params, float value) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    for (auto& v : t.mutable_data()) v = value;
  }
}

bool all_finite(std::span<const float> values) {
  for (float v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

// Hash of a fresh generator's output; used by the restart harness below.
std::uint64_t generator_digest() {
  Rng rng(77);
  const Generator g(GeneratorLayout{}, rng);
  Rng input_rng(5);
  const Tensor x = oracle::random_tensor({1, 1, 32, 32}, input_rng);
  const Tensor y = g(x);
  std::uint64_t h = 1469598103934665603ull;
  for (float v : y.data()) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    h = (h ^ bits) * 1099511628211ull;
  }
  return h;
}

std::string self_path;

}  // namespace

TEST_CASE("generator shape and range") {
  Rng rng(1);
  const Generator g(GeneratorLayout{}, rng);
  Rng input_rng(2);
  const Tensor x = oracle::random_tensor({1, 1, 64, 64}, input_rng);
  const Tensor y = g(x);
  CHECK(y.shape() == Shape{1, 1, 64, 64});
  for (float v : y.data()) {
    CHECK(v > -1.0f);
    CHECK(v < 1.0f);
  }
  CHECK_THROWS_AS(g(Tensor::zeros({1, 1, 30, 32})), ShapeError);
  CHECK_THROWS_AS(g(Tensor::zeros({1, 2, 32, 32})), ShapeError);
}

TEST_CASE("generator is not the identity after initialization") {
  Rng rng(3);
  const Generator g(GeneratorLayout{}, rng);
  Rng input_rng(4);
  const Tensor x = oracle::random_tensor({1, 1, 16, 16}, input_rng);
  const Tensor y = g(x);
  double diff = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) diff += std::fabs(y.at(i) - x.at(i));
  CHECK(diff / x.numel() > 1e-3);
}

TEST_CASE("generator output is reproducible across process restarts") {
  REQUIRE(!self_path.empty());
  auto run = [] {
    const std::string cmd = "SSACGAN_NETS_DIGEST=1 '" + self_path + "'";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[64] = {};
    const bool got = std::fgets(buf, sizeof buf, pipe) != nullptr;
    pclose(pipe);
    return got ? std::string(buf) : std::string();
  };
  const std::string first = run();
  const std::string second = run();
  CHECK(!first.empty());
  CHECK(first == second);
  CHECK(first == std::to_string(generator_digest()) + "\n");
}

TEST_CASE("patch discriminator shapes") {
  Rng rng(6);
  const PatchDiscriminator d(DiscriminatorLayout{}, rng);
  const auto out = d.forward(Tensor::zeros({1, 1, 64, 64}));
  CHECK(out.patch_map.shape() == Shape{1, 1, 8, 8});
  // Golden value from the layer table: three stride-2 blocks, last width 128.
  CHECK(out.features.shape() == Shape{1, 128, 8, 8});
  // Head 3x3, then each 4x4 stride-2 block: r -> 2(r - 1) + 4. 3 -> 8 -> 18 -> 38.
  CHECK(d.receptive_field() == 38);
  CHECK_THROWS_AS(d.forward(Tensor::zeros({1, 1, 32, 32})), ShapeError);
}

TEST_CASE("zero weights give a constant patch map") {
  Rng rng(7);
  const PatchDiscriminator d(DiscriminatorLayout{}, rng);
  fill(d.parameters(), 0.0f);
  Tensor bias = d.parameters().back().tensor;
  REQUIRE(bias.numel() == 1);
  bias.mutable_data()[0] = 0.3f;
  Rng input_rng(8);
  const Tensor map = d.forward(oracle::random_tensor({1, 1, 64, 64}, input_rng)).patch_map;
  for (float v : map.data()) CHECK(v == 0.3f);

  const PairedDiscriminator p(16, 16, PairedLayout{}, 0.2f, rng);
  fill(p.parameters(), 0.0f);
  const Tensor pm = p.forward(oracle::random_tensor({1, 16, 16, 16}, input_rng),
                              oracle::random_tensor({1, 16, 16, 16}, input_rng));
  for (float v : pm.data()) CHECK(v == pm.at(0));
}

TEST_CASE("paired discriminator shapes") {
  Rng rng(9);
  const PairedDiscriminator p(8, 8, PairedLayout{32, 32}, 0.2f, rng);
  CHECK(p.forward(Tensor::zeros({1, 8, 16, 16}), Tensor::zeros({1, 8, 16, 16})).shape() == Shape{1, 1, 4, 4});
  CHECK_THROWS_AS(p.forward(Tensor::zeros({1, 8, 16, 16}), Tensor::zeros({1, 8, 8, 8})), ShapeError);
}

TEST_CASE("bundle: four paired combinations are finite and share trunks") {
  ModelLayout layout;
  layout.generator = {8, 16, 32, 2, 7};
  layout.discriminator.widths = {8, 16, 32};
  layout.paired = {16, 16};
  const ModelBundle m = ModelBundle::create(layout, Rng(11).child("init"));
  CHECK(count(m.g.parameters()) == count(m.f.parameters()));

  Rng rng(12);
  const Tensor x = oracle::random_tensor({1, 1, 64, 64}, rng);
  const Tensor y = oracle::random_tensor({1, 1, 64, 64}, rng);
  const Tensor gx = m.g(x), fy = m.f(y);
  for (const auto& [a, b] : {std::pair{x, y}, std::pair{x, gx}, std::pair{fy, y}, std::pair{fy, gx}}) {
    const Tensor map = m.paired_map(a, b);
    CHECK(map.shape() == Shape{1, 1, 2, 2});
    CHECK(all_finite(map.data()));
  }

  // Parameter identity: the trunk handles seen by D_X are the same nodes D_pair reads.
  const auto single = m.d_x.trunk_parameters();
  const auto again = m.d_x.parameters();
  for (std::size_t i = 0; i < single.size(); ++i) CHECK(single[i].tensor.same_node(again[i].tensor));
  for (const auto& p : m.d_x.trunk_parameters()) p.tensor.node().grad.clear();
  Tensor probe = x.clone();
  backward(sum(m.paired_map(probe, y)));
  for (const auto& p : m.d_x.trunk_parameters()) CHECK(p.tensor.has_grad());
  for (const auto& p : m.d_y.trunk_parameters()) CHECK(p.tensor.has_grad());
}

TEST_CASE("bundle: names are unique and networks differ") {
  ModelLayout layout;
  layout.generator = {4, 8, 8, 1, 7};
  layout.discriminator.widths = {4, 8, 8};
  layout.paired = {8, 8};
  const ModelBundle m = ModelBundle::create(layout, Rng(13));
  std::set<std::string> names;
  for (const auto& p : m.parameters()) CHECK(names.insert(p.name).second);
  // Independent child streams: G and F start from different weights.
  const auto gp = m.g.parameters(), fp = m.f.parameters();
  CHECK(gp.front().tensor.at(0) != fp.front().tensor.at(0));
}

TEST_CASE("forward and backward are finite for inputs in [-1,1]") {
  ModelLayout layout;
  layout.generator = {8, 16, 32, 2, 7};
  layout.discriminator.widths = {8, 16, 32};
  layout.paired = {16, 16};
  const ModelBundle m = ModelBundle::create(layout, Rng(14));
  for (int trial = 0; trial < 3; ++trial) {
    Rng rng(static_cast<std::uint64_t>(100 + trial));
    const Tensor x = oracle::random_tensor({1, 1, 64, 64}, rng);
    const Tensor loss = add(mean(m.d_y.forward(m.g(x)).patch_map), mean(m.paired_map(x, m.g(x))));
    CHECK(std::isfinite(loss.item()));
    backward(loss);
    for (const auto& p : m.parameters())
      if (p.tensor.has_grad()) CHECK(all_finite(p.tensor.grad()));
  }
}

int main(int argc, char** argv) {
  if (std::getenv("SSACGAN_NETS_DIGEST")) {
    std::cout << generator_digest() << "\n";
    return 0;
  }
  self_path = std::filesystem::read_symlink("/proc/self/exe").string();
  doctest::Context ctx(argc, argv);
  return ctx.run();
}
