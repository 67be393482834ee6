#include "ssacgan/nets.hpp"

#include "ssacgan/optim.hpp"

namespace ssacgan {

std::vector<Tensor> tensors_of(const ParameterList& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

Conv2dLayer Conv2dLayer::create(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                                std::size_t padding, Rng& rng) {
  Conv2dLayer layer;
  layer.weight = glorot_init({out, in, kernel, kernel}, rng);
  layer.bias = Tensor::zeros({out}, true);
  layer.options = {stride, Padding2d::uniform(padding)};
  return layer;
}

void Conv2dLayer::collect(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

ConvTranspose2dLayer ConvTranspose2dLayer::create(std::size_t in, std::size_t out, std::size_t kernel,
                                                  std::size_t stride, std::size_t padding,
                                                  std::size_t output_padding, Rng& rng) {
  ConvTranspose2dLayer layer;
  // Stored as [in, out, k, k]; fan_in + fan_out is the same either way round.
  layer.weight = glorot_init({in, out, kernel, kernel}, rng);
  layer.bias = Tensor::zeros({out}, true);
  layer.options = {stride, Padding2d::uniform(padding), output_padding};
  return layer;
}

void ConvTranspose2dLayer::collect(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

Tensor ResidualBlock::operator()(const Tensor& x) const {
  Tensor h = relu(instance_norm(first(x)));
  h = instance_norm(second(h));
  return add(x, h);
}

Generator::Generator(const GeneratorLayout& layout, Rng& rng) : layout_(layout) {
  const std::size_t wide = layout.wide_kernel;
  front_ = Conv2dLayer::create(1, layout.front_width, wide, 1, 0, rng);
  down_.push_back(Conv2dLayer::create(layout.front_width, layout.down1_width, 3, 2, 1, rng));
  down_.push_back(Conv2dLayer::create(layout.down1_width, layout.down2_width, 3, 2, 1, rng));
  for (std::size_t i = 0; i < layout.residual_blocks; ++i) {
    ResidualBlock block;
    block.first = Conv2dLayer::create(layout.down2_width, layout.down2_width, 3, 1, 1, rng);
    block.second = Conv2dLayer::create(layout.down2_width, layout.down2_width, 3, 1, 1, rng);
    core_.push_back(std::move(block));
  }
  up_.push_back(ConvTranspose2dLayer::create(layout.down2_width, layout.down1_width, 3, 2, 1, 1, rng));
  up_.push_back(ConvTranspose2dLayer::create(layout.down1_width, layout.front_width, 3, 2, 1, 1, rng));
  head_ = Conv2dLayer::create(layout.front_width, 1, wide, 1, 0, rng);
}

Tensor Generator::forward(const Tensor& image) const {
  if (image.rank() != 4 || image.dim(1) != 1) {
    throw ShapeError("generator expects [N,1,H,W], got " + shape_to_string(image.shape()));
  }
  if (image.dim(2) % 4 != 0 || image.dim(3) % 4 != 0) {
    throw ShapeError("generator input spatial dims must be divisible by 4, got " + shape_to_string(image.shape()));
  }
  const std::size_t pad = layout_.wide_kernel / 2;
  Tensor h = relu(instance_norm(front_(reflection_pad2d(image, pad))));
  for (const auto& layer : down_) h = relu(instance_norm(layer(h)));
  for (const auto& block : core_) h = block(h);
  for (const auto& layer : up_) h = relu(instance_norm(layer(h)));
  return tanh(head_(reflection_pad2d(h, pad)));
}

ParameterList Generator::parameters(const std::string& prefix) const {
  ParameterList out;
  front_.collect(out, prefix + "front");
  for (std::size_t i = 0; i < down_.size(); ++i) down_[i].collect(out, prefix + "down." + std::to_string(i));
  for (std::size_t i = 0; i < core_.size(); ++i) {
    const auto name = prefix + "res." + std::to_string(i);
    core_[i].first.collect(out, name + ".conv1");
    core_[i].second.collect(out, name + ".conv2");
  }
  for (std::size_t i = 0; i < up_.size(); ++i) up_[i].collect(out, prefix + "up." + std::to_string(i));
  head_.collect(out, prefix + "head");
  return out;
}

PatchDiscriminator::PatchDiscriminator(const DiscriminatorLayout& layout, Rng& rng) : layout_(layout) {
  if (layout.widths.empty()) throw std::invalid_argument("discriminator needs at least one trunk block");
  std::size_t in = 1;
  for (auto width : layout.widths) {
    trunk_.push_back(Conv2dLayer::create(in, width, 4, 2, 1, rng));
    in = width;
  }
  head_ = Conv2dLayer::create(in, 1, 3, 1, 1, rng);
}

std::size_t PatchDiscriminator::receptive_field() const {
  std::size_t field = 3;  // head
  for (std::size_t i = 0; i < trunk_.size(); ++i) field = (field - 1) * 2 + 4;
  return field;
}

Tensor PatchDiscriminator::features(const Tensor& image) const {
  if (image.rank() != 4 || image.dim(1) != 1) {
    throw ShapeError("discriminator expects [N,1,H,W], got " + shape_to_string(image.shape()));
  }
  const std::size_t field = receptive_field();
  if (image.dim(2) < field || image.dim(3) < field) {
    throw ShapeError("discriminator input " + shape_to_string(image.shape()) + " smaller than receptive field " +
                     std::to_string(field));
  }
  Tensor h = image;
  for (std::size_t i = 0; i < trunk_.size(); ++i) {
    h = trunk_[i](h);
    if (i > 0) h = instance_norm(h);
    h = leaky_relu(h, layout_.leaky_slope);
  }
  return h;
}

DiscriminatorOutput PatchDiscriminator::forward(const Tensor& image) const {
  Tensor feats = features(image);
  return {head_(feats), feats};
}

ParameterList PatchDiscriminator::trunk_parameters(const std::string& prefix) const {
  ParameterList out;
  for (std::size_t i = 0; i < trunk_.size(); ++i) trunk_[i].collect(out, prefix + "trunk." + std::to_string(i));
  return out;
}

ParameterList PatchDiscriminator::parameters(const std::string& prefix) const {
  ParameterList out = trunk_parameters(prefix);
  head_.collect(out, prefix + "head");
  return out;
}

PairedDiscriminator::PairedDiscriminator(std::size_t feature_channels_x, std::size_t feature_channels_y,
                                         const PairedLayout& layout, float leaky_slope, Rng& rng)
    : slope_(leaky_slope) {
  blocks_.push_back(Conv2dLayer::create(feature_channels_x + feature_channels_y, layout.width1, 4, 2, 1, rng));
  blocks_.push_back(Conv2dLayer::create(layout.width1, layout.width2, 4, 2, 1, rng));
  head_ = Conv2dLayer::create(layout.width2, 1, 3, 1, 1, rng);
}

Tensor PairedDiscriminator::forward(const Tensor& x_features, const Tensor& y_features) const {
  if (x_features.rank() != 4 || y_features.rank() != 4 || x_features.dim(2) != y_features.dim(2) ||
      x_features.dim(3) != y_features.dim(3)) {
    throw ShapeError("paired discriminator: feature maps differ spatially: " + shape_to_string(x_features.shape()) +
                     " vs " + shape_to_string(y_features.shape()));
  }
  if (x_features.dim(2) < 4 || x_features.dim(3) < 4) {
    throw ShapeError("paired discriminator: feature maps smaller than 4x4: " + shape_to_string(x_features.shape()));
  }
  Tensor h = concat_channels(x_features, y_features);
  for (const auto& block : blocks_) h = leaky_relu(block(h), slope_);
  return head_(h);
}

ParameterList PairedDiscriminator::parameters(const std::string& prefix) const {
  ParameterList out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(out, prefix + "block." + std::to_string(i));
  head_.collect(out, prefix + "head");
  return out;
}

ModelBundle ModelBundle::create(const ModelLayout& layout, const Rng& run_rng) {
  ModelBundle bundle;
  bundle.layout = layout;
  Rng g_rng = run_rng.child("G");
  Rng f_rng = run_rng.child("F");
  Rng dx_rng = run_rng.child("D_X");
  Rng dy_rng = run_rng.child("D_Y");
  Rng pair_rng = run_rng.child("D_pair");
  bundle.g = Generator(layout.generator, g_rng);
  bundle.f = Generator(layout.generator, f_rng);
  bundle.d_x = PatchDiscriminator(layout.discriminator, dx_rng);
  bundle.d_y = PatchDiscriminator(layout.discriminator, dy_rng);
  bundle.d_pair = PairedDiscriminator(bundle.d_x.feature_channels(), bundle.d_y.feature_channels(), layout.paired,
                                      layout.discriminator.leaky_slope, pair_rng);
  return bundle;
}

Tensor ModelBundle::paired_map(const Tensor& x_side, const Tensor& y_side) const {
  return d_pair.forward(d_x.features(x_side), d_y.features(y_side));
}

ParameterList ModelBundle::parameters() const {
  ParameterList out = g.parameters("G.");
  auto append = [&out](ParameterList more) {
    for (auto& p : more) out.push_back(std::move(p));
  };
  append(f.parameters("F."));
  append(d_x.parameters("D_X."));
  append(d_y.parameters("D_Y."));
  append(d_pair.parameters("D_pair."));
  return out;
}

}  // namespace ssacgan
