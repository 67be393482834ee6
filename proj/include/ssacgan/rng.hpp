#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ssacgan {

/// Seeded random stream. Child streams are a pure function of
/// (parent seed, label), never of how many draws the parent has made.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  Rng child(std::string_view label) const;
  Rng child(std::string_view label, std::uint64_t index) const;

  float uniform(float low, float high);
  float normal(float mean = 0.0f, float stddev = 1.0f);
  /// Uniform integer in the closed range [low, high].
  std::int64_t uniform_int(std::int64_t low, std::int64_t high);
  bool bernoulli(double p);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace ssacgan
