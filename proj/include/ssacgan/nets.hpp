#pragma once

#include <string>
#include <vector>

#include "ssacgan/ops.hpp"
#include "ssacgan/rng.hpp"
#include "ssacgan/tensor.hpp"

namespace ssacgan {

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

using ParameterList = std::vector<NamedParameter>;

std::vector<Tensor> tensors_of(const ParameterList& params);

/// Generator widths: front conv, the two stride-2 stages (the residual core
/// runs at the second), mirrored on the way up.
struct GeneratorLayout {
  std::size_t front_width = 32;
  std::size_t down1_width = 64;
  std::size_t down2_width = 128;
  std::size_t residual_blocks = 6;
  std::size_t wide_kernel = 7;
};

struct DiscriminatorLayout {
  std::vector<std::size_t> widths{32, 64, 128};  // one stride-2 block per entry
  float leaky_slope = 0.2f;
};

struct PairedLayout {
  std::size_t width1 = 128;
  std::size_t width2 = 128;
};

struct ModelLayout {
  GeneratorLayout generator;
  DiscriminatorLayout discriminator;
  PairedLayout paired;
};

struct Conv2dLayer {
  Tensor weight;  // [K,C,kh,kw]
  Tensor bias;    // [K]
  ConvOptions options;

  static Conv2dLayer create(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                            std::size_t padding, Rng& rng);
  Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, options); }
  void collect(ParameterList& out, const std::string& prefix) const;
};

struct ConvTranspose2dLayer {
  Tensor weight;  // [C,K,kh,kw]
  Tensor bias;    // [K]
  ConvTransposeOptions options;

  static ConvTranspose2dLayer create(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                                     std::size_t padding, std::size_t output_padding, Rng& rng);
  Tensor operator()(const Tensor& x) const { return conv_transpose2d(x, weight, bias, options); }
  void collect(ParameterList& out, const std::string& prefix) const;
};

struct ResidualBlock {
  Conv2dLayer first;
  Conv2dLayer second;

  Tensor operator()(const Tensor& x) const;
};

/// Image-to-image ResNet generator: wide conv, two stride-2 convs, residual
/// core, two fractionally-strided convs, wide conv + tanh.
class Generator {
 public:
  Generator() = default;
  Generator(const GeneratorLayout& layout, Rng& rng);

  /// image [N,1,H,W] with H and W divisible by 4; output has the same shape.
  Tensor forward(const Tensor& image) const;
  Tensor operator()(const Tensor& image) const { return forward(image); }

  ParameterList parameters(const std::string& prefix = "") const;
  const GeneratorLayout& layout() const { return layout_; }

 private:
  GeneratorLayout layout_;
  Conv2dLayer front_;
  std::vector<Conv2dLayer> down_;
  std::vector<ResidualBlock> core_;
  std::vector<ConvTranspose2dLayer> up_;
  Conv2dLayer head_;
};

struct DiscriminatorOutput {
  Tensor patch_map;
  Tensor features;  // second-last layer: last trunk block's activations
};

/// PatchGAN: stride-2 conv + leaky-relu trunk, then a 1-channel 3x3 head
/// that keeps the trunk's spatial size.
class PatchDiscriminator {
 public:
  PatchDiscriminator() = default;
  PatchDiscriminator(const DiscriminatorLayout& layout, Rng& rng);

  DiscriminatorOutput forward(const Tensor& image) const;
  Tensor features(const Tensor& image) const;
  Tensor head(const Tensor& features) const { return head_(features); }

  /// Smallest square input whose every patch score sees a full receptive field.
  std::size_t receptive_field() const;
  std::size_t feature_channels() const { return layout_.widths.back(); }

  ParameterList parameters(const std::string& prefix = "") const;
  ParameterList trunk_parameters(const std::string& prefix = "") const;
  const DiscriminatorLayout& layout() const { return layout_; }

 private:
  DiscriminatorLayout layout_;
  std::vector<Conv2dLayer> trunk_;
  Conv2dLayer head_;
};

/// Two stride-2 conv blocks over the channel concatenation of the X-side and
/// Y-side trunk features, then a 1-channel patch head.
class PairedDiscriminator {
 public:
  PairedDiscriminator() = default;
  PairedDiscriminator(std::size_t feature_channels_x, std::size_t feature_channels_y, const PairedLayout& layout,
                      float leaky_slope, Rng& rng);

  Tensor forward(const Tensor& x_features, const Tensor& y_features) const;

  ParameterList parameters(const std::string& prefix = "") const;

 private:
  float slope_ = 0.2f;
  std::vector<Conv2dLayer> blocks_;
  Conv2dLayer head_;
};

/// The five networks of one run. D_pair reads the trunks of D_X and D_Y, so
/// those trunk tensors are shared between the single and paired critics.
struct ModelBundle {
  ModelLayout layout;
  Generator g;  // X -> Y
  Generator f;  // Y -> X
  PatchDiscriminator d_x;
  PatchDiscriminator d_y;
  PairedDiscriminator d_pair;

  static ModelBundle create(const ModelLayout& layout, const Rng& run_rng);

  /// D_pair applied to an (X-side, Y-side) image pair.
  Tensor paired_map(const Tensor& x_side, const Tensor& y_side) const;

  /// Every parameter under a unique, stable name ("G.", "F.", "D_X.", ...).
  ParameterList parameters() const;
};

}  // namespace ssacgan
