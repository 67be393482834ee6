#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace oracle {

Array4 to_array(const Tensor& t) {
  Array4 a{t.dim(0), t.dim(1), t.dim(2), t.dim(3), {}};
  a.v.assign(t.data().begin(), t.data().end());
  return a;
}

Array4 conv2d(const Array4& x, const Array4& w, const std::vector<double>& bias, std::size_t stride,
              const Padding2d& pad) {
  const long oh = (static_cast<long>(x.h + pad.rows()) - static_cast<long>(w.h)) / static_cast<long>(stride) + 1;
  const long ow = (static_cast<long>(x.w + pad.cols()) - static_cast<long>(w.w)) / static_cast<long>(stride) + 1;
  Array4 out{x.n, w.n, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), {}};
  out.v.assign(out.n * out.c * out.h * out.w, 0.0);
  for (std::size_t i = 0; i < x.n; ++i)
    for (std::size_t k = 0; k < w.n; ++k)
      for (long oy = 0; oy < oh; ++oy)
        for (long ox = 0; ox < ow; ++ox) {
          double acc = bias.empty() ? 0.0 : bias[k];
          for (std::size_t c = 0; c < x.c; ++c)
            for (std::size_t ky = 0; ky < w.h; ++ky)
              for (std::size_t kx = 0; kx < w.w; ++kx) {
                const long iy = oy * static_cast<long>(stride) + static_cast<long>(ky) - static_cast<long>(pad.top);
                const long ix = ox * static_cast<long>(stride) + static_cast<long>(kx) - static_cast<long>(pad.left);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(x.h) || ix >= static_cast<long>(x.w)) continue;
                acc += x.at(i, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) * w.at(k, c, ky, kx);
              }
          out.at(i, k, static_cast<std::size_t>(oy), static_cast<std::size_t>(ox)) = acc;
        }
  return out;
}

Array4 conv_transpose2d(const Array4& x, const Array4& w, const std::vector<double>& bias, std::size_t stride,
                        const Padding2d& pad, std::size_t output_padding) {
  // Full (uncropped) canvas, then crop top/left padding.
  const std::size_t full_h = (x.h - 1) * stride + w.h + output_padding;
  const std::size_t full_w = (x.w - 1) * stride + w.w + output_padding;
  const std::size_t kout = w.c;
  Array4 full{x.n, kout, full_h, full_w, {}};
  full.v.assign(full.n * full.c * full.h * full.w, 0.0);
  for (std::size_t i = 0; i < x.n; ++i)
    for (std::size_t c = 0; c < x.c; ++c)
      for (std::size_t y = 0; y < x.h; ++y)
        for (std::size_t xx = 0; xx < x.w; ++xx)
          for (std::size_t k = 0; k < kout; ++k)
            for (std::size_t ky = 0; ky < w.h; ++ky)
              for (std::size_t kx = 0; kx < w.w; ++kx)
                full.at(i, k, y * stride + ky, xx * stride + kx) += x.at(i, c, y, xx) * w.at(c, k, ky, kx);
  const std::size_t oh = full_h - pad.rows();
  const std::size_t ow = full_w - pad.cols();
  Array4 out{x.n, kout, oh, ow, {}};
  out.v.assign(out.n * out.c * out.h * out.w, 0.0);
  for (std::size_t i = 0; i < x.n; ++i)
    for (std::size_t k = 0; k < kout; ++k)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx)
          out.at(i, k, y, xx) = full.at(i, k, y + pad.top, xx + pad.left) + (bias.empty() ? 0.0 : bias[k]);
  return out;
}

double max_abs_diff(const Array4& a, const Tensor& b) {
  if (a.v.size() != b.numel()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::fabs(a.v[i] - static_cast<double>(b.at(i))));
  return m;
}

Tensor random_tensor(const Shape& shape, Rng& rng, float lo, float hi, bool requires_grad, float min_magnitude) {
  std::vector<float> data(ssacgan::shape_numel(shape));
  for (auto& v : data) {
    v = rng.uniform(lo, hi);
    if (min_magnitude > 0.0f && std::fabs(v) < min_magnitude) v = v < 0.0f ? v - min_magnitude : v + min_magnitude;
  }
  return Tensor::from_data(shape, std::move(data), requires_grad);
}

std::vector<float> output_weights(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> w(n);
  for (auto& v : w) v = rng.uniform(-1.0f, 1.0f);
  return w;
}

GradCheck check_gradients(const std::function<Tensor(const std::vector<Tensor>&)>& f, std::vector<Tensor> inputs,
                          std::uint64_t weight_seed, bool unit_weights, float eps) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  const Tensor out = f(inputs);
  const std::vector<float> r = unit_weights ? std::vector<float>(out.numel(), 1.0f) : output_weights(out.numel(), weight_seed);
  ssacgan::backward(ssacgan::sum(ssacgan::mul(out, Tensor::from_data(out.shape(), r))));

  auto reduce = [&r](const Tensor& t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < t.numel(); ++i) acc += static_cast<double>(r[i]) * static_cast<double>(t.at(i));
    return acc;
  };

  GradCheck result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::vector<float> analytic(inputs[i].grad().begin(), inputs[i].grad().end());
    std::vector<double> numeric(analytic.size());
    {
      ssacgan::NoGradGuard no_grad;
      auto values = inputs[i].mutable_data();
      for (std::size_t j = 0; j < values.size(); ++j) {
        const float original = values[j];
        values[j] = original + eps;
        const float up_arg = values[j];
        const double up = reduce(f(inputs));
        values[j] = original - eps;
        const float down_arg = values[j];
        const double down = reduce(f(inputs));
        values[j] = original;
        // Divide by the step actually taken in float.
        numeric[j] = (up - down) / (static_cast<double>(up_arg) - static_cast<double>(down_arg));
      }
    }
    double scale = 1e-6, worst = 0.0;
    std::size_t worst_j = 0;
    for (std::size_t j = 0; j < analytic.size(); ++j) {
      scale = std::max({scale, std::fabs(static_cast<double>(analytic[j])), std::fabs(numeric[j])});
      const double d = std::fabs(static_cast<double>(analytic[j]) - numeric[j]);
      if (d > worst) {
        worst = d;
        worst_j = j;
      }
    }
    const double rel = worst / scale;
    if (rel >= result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst = "input " + std::to_string(i) + " element " + std::to_string(worst_j) +
                     ": analytic " + std::to_string(analytic[worst_j]) + " numeric " + std::to_string(numeric[worst_j]);
    }
  }
  return result;
}

void ScalarAdam::step(std::vector<double>& params, const std::vector<double>& grads, double lr) {
  if (m.empty()) {
    m.assign(params.size(), 0.0);
    v.assign(params.size(), 0.0);
  }
  ++t;
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
    const double mhat = m[i] / (1.0 - std::pow(beta1, static_cast<double>(t)));
    const double vhat = v[i] / (1.0 - std::pow(beta2, static_cast<double>(t)));
    params[i] -= lr * mhat / (std::sqrt(vhat) + epsilon);
  }
}

void mean_std(const std::vector<double>& values, double& mean, double& std) {
  double s = 0.0;
  for (double x : values) s += x;
  mean = s / static_cast<double>(values.size());
  double ss = 0.0;
  for (double x : values) ss += (x - mean) * (x - mean);
  std = std::sqrt(ss / static_cast<double>(values.size() - 1));
}

}  // namespace oracle
