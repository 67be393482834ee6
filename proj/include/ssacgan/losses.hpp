#pragma once

#include "ssacgan/tensor.hpp"

namespace ssacgan {

/// Relative weights of the generator objective terms.
struct LossWeights {
  float lambda = 10.0f;  // cycle consistency
  float alpha = 2.0f;    // paired adversarial term
  /// Scale the paired generator term by 1/3, matching the discriminator-side
  /// normalization. Off by default: the generator term carries no factor.
  bool normalize_pair = false;
};

void validate(const LossWeights& weights);

/// Per-step loss values. `pair` is shared by both generators, as is `cyc`.
struct LossBreakdown {
  float adv_g = 0.0f;  // G's adversarial term (judged by D_Y)
  float adv_f = 0.0f;  // F's adversarial term (judged by D_X)
  float cyc = 0.0f;
  float pair = 0.0f;
  float total_g = 0.0f;
  float total_f = 0.0f;
  float d_x = 0.0f;
  float d_y = 0.0f;
  float d_pair = 0.0f;
};

/// mean((map - target)^2)
Tensor least_squares(const Tensor& map, float target);

/// Single-domain critic: mean((D(real) - 1)^2) + mean(D(fake)^2).
Tensor loss_disc_single(const Tensor& d_real, const Tensor& d_fake);

/// Generator adversarial term: mean((D(fake) - 1)^2).
Tensor loss_gen_adv(const Tensor& d_fake);

/// L1 cycle term: mean|x_rec - x| + mean|y_rec - y|.
Tensor loss_cycle(const Tensor& x, const Tensor& x_reconstructed, const Tensor& y, const Tensor& y_reconstructed);

/// Paired critic. Maps are D_pair on (x, y), (x, G(x)), (F(y), y), (F(y), G(x)).
/// The three fake terms share a 1/3 weight.
Tensor loss_disc_pair(const Tensor& d_real_pair, const Tensor& d_fake_xy, const Tensor& d_fake_fy,
                      const Tensor& d_fake_ff);

/// Paired generator term: sum of the three fake pairs' distances to 1,
/// without the 1/3 factor unless `normalize` is set.
Tensor loss_gen_pair(const Tensor& d_fake_xy, const Tensor& d_fake_fy, const Tensor& d_fake_ff,
                     bool normalize = false);

/// adv + lambda*cyc + alpha*pair
Tensor loss_gen_total(const Tensor& adv, const Tensor& cyc, const Tensor& pair, const LossWeights& weights);
float loss_gen_total(float adv, float cyc, float pair, const LossWeights& weights);

}  // namespace ssacgan
