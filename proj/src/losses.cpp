#include "ssacgan/losses.hpp"

#include <cmath>

#include "ssacgan/ops.hpp"

namespace ssacgan {

void validate(const LossWeights& weights) {
  if (!(weights.lambda >= 0.0f) || !(weights.alpha >= 0.0f) || !std::isfinite(weights.lambda) ||
      !std::isfinite(weights.alpha)) {
    throw std::invalid_argument("loss weights must be finite and non-negative");
  }
}

Tensor least_squares(const Tensor& map, float target) { return mean(square(add_scalar(map, -target))); }

Tensor loss_disc_single(const Tensor& d_real, const Tensor& d_fake) {
  return add(least_squares(d_real, 1.0f), least_squares(d_fake, 0.0f));
}

Tensor loss_gen_adv(const Tensor& d_fake) { return least_squares(d_fake, 1.0f); }

Tensor loss_cycle(const Tensor& x, const Tensor& x_reconstructed, const Tensor& y, const Tensor& y_reconstructed) {
  return add(mean(abs(sub(x_reconstructed, x))), mean(abs(sub(y_reconstructed, y))));
}

Tensor loss_disc_pair(const Tensor& d_real_pair, const Tensor& d_fake_xy, const Tensor& d_fake_fy,
                      const Tensor& d_fake_ff) {
  Tensor fakes = add(add(least_squares(d_fake_xy, 0.0f), least_squares(d_fake_fy, 0.0f)),
                     least_squares(d_fake_ff, 0.0f));
  return add(least_squares(d_real_pair, 1.0f), mul_scalar(fakes, 1.0f / 3.0f));
}

Tensor loss_gen_pair(const Tensor& d_fake_xy, const Tensor& d_fake_fy, const Tensor& d_fake_ff, bool normalize) {
  Tensor total = add(add(least_squares(d_fake_xy, 1.0f), least_squares(d_fake_fy, 1.0f)),
                     least_squares(d_fake_ff, 1.0f));
  return normalize ? mul_scalar(total, 1.0f / 3.0f) : total;
}

Tensor loss_gen_total(const Tensor& adv, const Tensor& cyc, const Tensor& pair, const LossWeights& weights) {
  return add(add(adv, mul_scalar(cyc, weights.lambda)), mul_scalar(pair, weights.alpha));
}

float loss_gen_total(float adv, float cyc, float pair, const LossWeights& weights) {
  return adv + weights.lambda * cyc + weights.alpha * pair;
}

}  // namespace ssacgan
