#pragma once

#include "ssacgan/tensor.hpp"

namespace ssacgan {

/// Zero-padding amounts for the two spatial axes of an NCHW tensor.
struct Padding2d {
  std::size_t top = 0;
  std::size_t bottom = 0;
  std::size_t left = 0;
  std::size_t right = 0;

  static constexpr Padding2d uniform(std::size_t p) { return {p, p, p, p}; }
  std::size_t rows() const { return top + bottom; }
  std::size_t cols() const { return left + right; }
};

struct ConvOptions {
  std::size_t stride = 1;
  Padding2d padding{};
};

struct ConvTransposeOptions {
  std::size_t stride = 1;
  Padding2d padding{};
  std::size_t output_padding = 0;  // extra rows/cols on the bottom/right edge
};

enum class ActivationKind { relu, leaky_relu, tanh };

struct Activation {
  ActivationKind kind = ActivationKind::relu;
  float slope = 0.2f;  // leaky_relu only, must lie in (0, 1)

  static constexpr Activation relu() { return {ActivationKind::relu, 0.0f}; }
  static constexpr Activation leaky(float slope) { return {ActivationKind::leaky_relu, slope}; }
  static constexpr Activation tanh() { return {ActivationKind::tanh, 0.0f}; }
};

// Elementwise arithmetic (operands must have identical shapes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, float value);
Tensor mul_scalar(const Tensor& a, float value);
Tensor square(const Tensor& a);
Tensor abs(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, float slope);
Tensor tanh(const Tensor& a);
Tensor activation(const Tensor& a, Activation kind);

// Reductions to a one-element tensor.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Concatenates two NCHW tensors along the channel axis.
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Mirror padding without repeating the edge pixel; pad must be < H and < W.
Tensor reflection_pad2d(const Tensor& input, std::size_t pad);

/// input [N,C,H,W], weight [K,C,kh,kw], bias [K] (may be undefined).
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, ConvOptions options);

/// Adjoint of conv2d w.r.t. its input. input [N,C,H,W], weight [C,K,kh,kw]
/// (the layout of the conv2d it transposes), bias [K].
/// H' = (H-1)*stride - pad_rows + kh + output_padding.
Tensor conv_transpose2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
                        ConvTransposeOptions options);

/// Per-sample, per-channel standardization without affine parameters.
Tensor instance_norm(const Tensor& input, float epsilon = 1e-5f);

std::size_t conv_output_extent(std::size_t in, std::size_t pad_total, std::size_t kernel,
                               std::size_t stride);

}  // namespace ssacgan
