#include "ssacgan/rng.hpp"

namespace ssacgan {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng Rng::child(std::string_view label) const { return Rng(splitmix64(seed_ ^ fnv1a64(label))); }

Rng Rng::child(std::string_view label, std::uint64_t index) const {
  return Rng(splitmix64(child(label).seed() + splitmix64(index)));
}

float Rng::uniform(float low, float high) {
  std::uniform_real_distribution<float> dist(low, high);
  return dist(engine_);
}

float Rng::normal(float mean, float stddev) {
  std::normal_distribution<float> dist(mean, stddev);
  return dist(engine_);
}

std::int64_t Rng::uniform_int(std::int64_t low, std::int64_t high) {
  std::uniform_int_distribution<std::int64_t> dist(low, high);
  return dist(engine_);
}

bool Rng::bernoulli(double p) {
  std::bernoulli_distribution dist(p);
  return dist(engine_);
}

}  // namespace ssacgan
