#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ssacgan/rng.hpp"
#include "ssacgan/tensor.hpp"

namespace ssacgan {

/// Glorot-uniform draw: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)),
/// i.e. variance 2 / (fan_in + fan_out). Rank-4 conv weights [K,C,kh,kw] use
/// fan_in = C*kh*kw and fan_out = K*kh*kw; rank 2 [out,in] is dense; rank 1
/// treats the single extent as both fans.
Tensor glorot_init(const Shape& shape, Rng& rng, bool requires_grad = true);

struct FanPair {
  std::size_t fan_in;
  std::size_t fan_out;
};
FanPair glorot_fans(const Shape& shape);

struct AdamState {
  std::vector<std::vector<float>> first_moment;
  std::vector<std::vector<float>> second_moment;
  std::uint64_t step_count = 0;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
};

/// Fresh state with zeroed moments matching each parameter.
AdamState make_adam_state(std::span<const Tensor> params);

/// One bias-corrected Adam update using each parameter's accumulated grad
/// (parameters that never received a gradient count as zero gradient).
void adam_step(std::span<Tensor> params, AdamState& state, float lr);

/// Parameter list plus its Adam state.
class Adam {
 public:
  Adam() = default;
  explicit Adam(std::vector<Tensor> params);

  void step(float lr) { adam_step(params_, state_, lr); }
  void zero_grad();

  std::span<Tensor> params() { return params_; }
  std::span<const Tensor> params() const { return params_; }
  AdamState& state() { return state_; }
  const AdamState& state() const { return state_; }

 private:
  std::vector<Tensor> params_;
  AdamState state_;
};

}  // namespace ssacgan
