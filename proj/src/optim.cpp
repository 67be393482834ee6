#include "ssacgan/optim.hpp"

#include <cmath>

namespace ssacgan {

FanPair glorot_fans(const Shape& shape) {
  switch (shape.size()) {
    case 1:
      return {shape[0], shape[0]};
    case 2:
      return {shape[1], shape[0]};
    case 4: {
      const std::size_t receptive = shape[2] * shape[3];
      return {shape[1] * receptive, shape[0] * receptive};
    }
    default:
      throw ShapeError("glorot_init: no fan convention for shape " + shape_to_string(shape));
  }
}

Tensor glorot_init(const Shape& shape, Rng& rng, bool requires_grad) {
  const auto fans = glorot_fans(shape);
  const float limit = std::sqrt(6.0f / static_cast<float>(fans.fan_in + fans.fan_out));
  std::vector<float> values(shape_numel(shape));
  for (auto& v : values) v = rng.uniform(-limit, limit);
  return Tensor::from_data(shape, std::move(values), requires_grad);
}

AdamState make_adam_state(std::span<const Tensor> params) {
  AdamState state;
  state.first_moment.reserve(params.size());
  state.second_moment.reserve(params.size());
  for (const auto& p : params) {
    state.first_moment.emplace_back(p.numel(), 0.0f);
    state.second_moment.emplace_back(p.numel(), 0.0f);
  }
  return state;
}

void adam_step(std::span<Tensor> params, AdamState& state, float lr) {
  if (!(lr > 0.0f)) throw std::invalid_argument("adam_step: learning rate must be positive");
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].size() != params[i].numel() || state.second_moment[i].size() != params[i].numel()) {
      throw ShapeError("adam_step: moment buffer does not match parameter " + std::to_string(i));
    }
    if (params[i].has_grad()) check_finite(params[i].grad(), "gradient of parameter " + std::to_string(i));
  }

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const float correction1 = static_cast<float>(1.0 - std::pow(static_cast<double>(state.beta1), t));
  const float correction2 = static_cast<float>(1.0 - std::pow(static_cast<double>(state.beta2), t));
  const float b1 = state.beta1, b2 = state.beta2, eps = state.epsilon;

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params[i].mutable_data();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const bool has_grad = params[i].has_grad();
    const float* g = has_grad ? params[i].grad().data() : nullptr;
    for (std::size_t j = 0; j < value.size(); ++j) {
      const float grad = has_grad ? g[j] : 0.0f;
      m[j] = b1 * m[j] + (1.0f - b1) * grad;
      v[j] = b2 * v[j] + (1.0f - b2) * grad * grad;
      const float m_hat = m[j] / correction1;
      const float v_hat = v[j] / correction2;
      value[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

Adam::Adam(std::vector<Tensor> params) : params_(std::move(params)), state_(make_adam_state(params_)) {}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace ssacgan
