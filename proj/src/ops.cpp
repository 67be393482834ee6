#include "ssacgan/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "ssacgan/parallel.hpp"

namespace ssacgan {

namespace {

using detail::Node;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

void require_rank4(const Tensor& t, const char* op, const char* what) {
  if (t.rank() != 4) {
    throw ShapeError(std::string(op) + ": " + what + " must be rank 4, got " + shape_to_string(t.shape()));
  }
}

template <typename Forward, typename Derivative>
Tensor unary(const Tensor& a, Forward forward, Derivative derivative) {
  const auto in = a.data();
  std::vector<float> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
  return Tensor::make_result(a.shape(), std::move(out), {a}, [derivative](Node& self) {
    Node& parent = *self.parents[0];
    if (!parent.requires_grad) return;
    float* g = parent.grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      g[i] += self.grad[i] * derivative(parent.data[i], self.data[i]);
    }
  });
}

struct ConvGeometry {
  std::size_t channels, height, width;      // image side
  std::size_t kernel_h, kernel_w, stride;
  Padding2d padding;
  std::size_t out_h, out_w;                  // column grid side
};

// Output columns [begin, end) whose input column ow*stride + j - left lies
// inside the image.
struct ColumnRange {
  std::size_t begin, end;
  std::int64_t offset;  // input column = ow*stride + offset
};

ColumnRange column_range(const ConvGeometry& g, std::size_t j) {
  const std::int64_t offset = static_cast<std::int64_t>(j) - static_cast<std::int64_t>(g.padding.left);
  const auto s = static_cast<std::int64_t>(g.stride);
  std::int64_t lo = 0;
  if (offset < 0) lo = (-offset + s - 1) / s;
  std::int64_t hi = (static_cast<std::int64_t>(g.width) - offset + s - 1) / s;
  hi = std::min<std::int64_t>(hi, static_cast<std::int64_t>(g.out_w));
  if (hi < lo) hi = lo;
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi), offset};
}

// cols[(c*kh + i)*kw + j][oh*out_w + ow] = image[c][oh*s + i - top][ow*s + j - left]
void im2col(const float* image, const ConvGeometry& g, float* cols) {
  const std::size_t plane = g.out_h * g.out_w;
  const auto top = static_cast<std::int64_t>(g.padding.top);
  const auto h = static_cast<std::int64_t>(g.height);
  const auto w = static_cast<std::int64_t>(g.width);
  const std::size_t s = g.stride;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const float* src = image + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kernel_h; ++i) {
      for (std::size_t j = 0; j < g.kernel_w; ++j) {
        float* dst = cols + ((c * g.kernel_h + i) * g.kernel_w + j) * plane;
        const ColumnRange range = column_range(g, j);
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const std::int64_t ih = static_cast<std::int64_t>(oh * s + i) - top;
          float* row = dst + oh * g.out_w;
          if (ih < 0 || ih >= h) {
            std::fill(row, row + g.out_w, 0.0f);
            continue;
          }
          const float* src_row = src + ih * w + range.offset;
          std::fill(row, row + range.begin, 0.0f);
          if (s == 1) {
            std::copy(src_row + range.begin, src_row + range.end, row + range.begin);
          } else {
            for (std::size_t ow = range.begin; ow < range.end; ++ow) row[ow] = src_row[ow * s];
          }
          std::fill(row + range.end, row + g.out_w, 0.0f);
        }
      }
    }
  }
}

// Scatter-add inverse of im2col.
void col2im(const float* cols, const ConvGeometry& g, float* image) {
  const std::size_t plane = g.out_h * g.out_w;
  const auto top = static_cast<std::int64_t>(g.padding.top);
  const auto h = static_cast<std::int64_t>(g.height);
  const auto w = static_cast<std::int64_t>(g.width);
  const std::size_t s = g.stride;
  for (std::size_t c = 0; c < g.channels; ++c) {
    float* dst = image + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kernel_h; ++i) {
      for (std::size_t j = 0; j < g.kernel_w; ++j) {
        const float* src = cols + ((c * g.kernel_h + i) * g.kernel_w + j) * plane;
        const ColumnRange range = column_range(g, j);
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const std::int64_t ih = static_cast<std::int64_t>(oh * s + i) - top;
          if (ih < 0 || ih >= h) continue;
          const float* row = src + oh * g.out_w;
          float* dst_row = dst + ih * w + range.offset;
          if (s == 1) {
            for (std::size_t ow = range.begin; ow < range.end; ++ow) dst_row[ow] += row[ow];
          } else {
            for (std::size_t ow = range.begin; ow < range.end; ++ow) dst_row[ow * s] += row[ow];
          }
        }
      }
    }
  }
}

// Direct stride-1 kernels for layers with few output channels, where the
// im2col buffer would be far larger than the arithmetic it feeds.
constexpr std::size_t kDirectMaxOutChannels = 4;
constexpr std::size_t kLanes = 16;

struct RowSpan {
  std::size_t begin, end;  // valid output columns for one kernel column
  std::int64_t shift;      // input column = output column + shift
};

RowSpan valid_columns(const ConvGeometry& g, std::size_t j) {
  const std::int64_t shift = static_cast<std::int64_t>(j) - static_cast<std::int64_t>(g.padding.left);
  const std::int64_t lo = std::max<std::int64_t>(0, -shift);
  const std::int64_t hi = std::min<std::int64_t>(static_cast<std::int64_t>(g.out_w),
                                                 static_cast<std::int64_t>(g.width) - shift);
  if (hi <= lo) return {0, 0, shift};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi), shift};
}

// out[k] += sum_{c,i,j} w[k,c,i,j] * image[c, oh+i-top, ow+j-left]
void direct_forward(const float* image, const float* weight, std::size_t out_channels, const ConvGeometry& g,
                    float* out) {
  const std::size_t plane = g.out_h * g.out_w;
  for (std::size_t k = 0; k < out_channels; ++k) {
    float* dst = out + k * plane;
    for (std::size_t c = 0; c < g.channels; ++c) {
      const float* src = image + c * g.height * g.width;
      for (std::size_t i = 0; i < g.kernel_h; ++i) {
        for (std::size_t j = 0; j < g.kernel_w; ++j) {
          const float wv = weight[((k * g.channels + c) * g.kernel_h + i) * g.kernel_w + j];
          const RowSpan span = valid_columns(g, j);
          for (std::size_t oh = 0; oh < g.out_h; ++oh) {
            const std::int64_t ih = static_cast<std::int64_t>(oh + i) - static_cast<std::int64_t>(g.padding.top);
            if (ih < 0 || ih >= static_cast<std::int64_t>(g.height)) continue;
            const float* in_row = src + ih * static_cast<std::int64_t>(g.width) + span.shift;
            float* out_row = dst + oh * g.out_w;
            for (std::size_t ow = span.begin; ow < span.end; ++ow) out_row[ow] += wv * in_row[ow];
          }
        }
      }
    }
  }
}

void direct_backward(const float* image, const float* weight, const float* grad, std::size_t out_channels,
                     const ConvGeometry& g, float* image_grad, float* weight_grad) {
  const std::size_t plane = g.out_h * g.out_w;
  for (std::size_t k = 0; k < out_channels; ++k) {
    const float* gk = grad + k * plane;
    for (std::size_t c = 0; c < g.channels; ++c) {
      const float* src = image + c * g.height * g.width;
      float* src_grad = image_grad ? image_grad + c * g.height * g.width : nullptr;
      for (std::size_t i = 0; i < g.kernel_h; ++i) {
        for (std::size_t j = 0; j < g.kernel_w; ++j) {
          const std::size_t widx = ((k * g.channels + c) * g.kernel_h + i) * g.kernel_w + j;
          const float wv = weight[widx];
          const RowSpan span = valid_columns(g, j);
          // Fixed lane layout keeps the reduction order independent of the
          // compiler's vectorization choices.
          float lanes[kLanes] = {};
          float tail = 0.0f;
          for (std::size_t oh = 0; oh < g.out_h; ++oh) {
            const std::int64_t ih = static_cast<std::int64_t>(oh + i) - static_cast<std::int64_t>(g.padding.top);
            if (ih < 0 || ih >= static_cast<std::int64_t>(g.height)) continue;
            const std::int64_t offset = ih * static_cast<std::int64_t>(g.width) + span.shift;
            const float* g_row = gk + oh * g.out_w;
            if (weight_grad) {
              const float* in_row = src + offset;
              std::size_t ow = span.begin;
              for (; ow + kLanes <= span.end; ow += kLanes) {
                for (std::size_t l = 0; l < kLanes; ++l) lanes[l] += g_row[ow + l] * in_row[ow + l];
              }
              for (; ow < span.end; ++ow) tail += g_row[ow] * in_row[ow];
            }
            if (src_grad) {
              float* in_grad_row = src_grad + offset;
              for (std::size_t ow = span.begin; ow < span.end; ++ow) in_grad_row[ow] += wv * g_row[ow];
            }
          }
          if (weight_grad) {
            float acc = tail;
            for (std::size_t l = 0; l < kLanes; ++l) acc += lanes[l];
            weight_grad[widx] += acc;
          }
        }
      }
    }
  }
}

void add_bias(float* out, const float* bias, std::size_t channels, std::size_t plane) {
  for (std::size_t k = 0; k < channels; ++k) {
    const float b = bias[k];
    float* row = out + k * plane;
    for (std::size_t p = 0; p < plane; ++p) row[p] += b;
  }
}

void accumulate_bias_grad(const float* grad, std::size_t channels, std::size_t plane, float* bias_grad) {
  for (std::size_t k = 0; k < channels; ++k) {
    const float* row = grad + k * plane;
    float acc = 0.0f;
    for (std::size_t p = 0; p < plane; ++p) acc += row[p];
    bias_grad[k] += acc;
  }
}

void check_bias(const Tensor& bias, std::size_t channels, const char* op) {
  if (!bias.defined()) return;
  if (bias.rank() != 1 || bias.dim(0) != channels) {
    throw ShapeError(std::string(op) + ": bias shape " + shape_to_string(bias.shape()) +
                     " does not match " + std::to_string(channels) + " output channels");
  }
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t pad_total, std::size_t kernel, std::size_t stride) {
  return (in + pad_total - kernel) / stride + 1;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto x = a.data(), y = b.data();
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (int p = 0; p < 2; ++p) {
      Node& parent = *self.parents[p];
      if (!parent.requires_grad) continue;
      float* g = parent.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto x = a.data(), y = b.data();
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const float sign[2] = {1.0f, -1.0f};
    for (int p = 0; p < 2; ++p) {
      Node& parent = *self.parents[p];
      if (!parent.requires_grad) continue;
      float* g = parent.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += sign[p] * self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto x = a.data(), y = b.data();
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& lhs = *self.parents[0];
    Node& rhs = *self.parents[1];
    if (lhs.requires_grad) {
      float* g = lhs.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * rhs.data[i];
    }
    if (rhs.requires_grad) {
      float* g = rhs.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * lhs.data[i];
    }
  });
}

Tensor add_scalar(const Tensor& a, float value) {
  return unary(a, [value](float x) { return x + value; }, [](float, float) { return 1.0f; });
}

Tensor mul_scalar(const Tensor& a, float value) {
  return unary(a, [value](float x) { return x * value; }, [value](float, float) { return value; });
}

Tensor square(const Tensor& a) {
  return unary(a, [](float x) { return x * x; }, [](float x, float) { return 2.0f * x; });
}

Tensor abs(const Tensor& a) {
  // Subgradient 0 at the kink.
  return unary(
      a, [](float x) { return std::fabs(x); },
      [](float x, float) { return x > 0.0f ? 1.0f : (x < 0.0f ? -1.0f : 0.0f); });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](float x) { return x > 0.0f ? x : 0.0f; }, [](float x, float) { return x > 0.0f ? 1.0f : 0.0f; });
}

Tensor leaky_relu(const Tensor& a, float slope) {
  if (!(slope > 0.0f && slope < 1.0f)) throw std::invalid_argument("leaky_relu slope must lie in (0,1)");
  return unary(
      a, [slope](float x) { return x > 0.0f ? x : slope * x; },
      [slope](float x, float) { return x > 0.0f ? 1.0f : slope; });
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](float x) { return std::tanh(x); }, [](float, float y) { return 1.0f - y * y; });
}

Tensor activation(const Tensor& a, Activation kind) {
  switch (kind.kind) {
    case ActivationKind::relu:
      return relu(a);
    case ActivationKind::leaky_relu:
      return leaky_relu(a, kind.slope);
    case ActivationKind::tanh:
      return tanh(a);
  }
  throw std::invalid_argument("unknown activation");
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (float v : a.data()) acc += v;
  return Tensor::make_result({1}, {static_cast<float>(acc)}, {a}, [](Node& self) {
    Node& parent = *self.parents[0];
    if (!parent.requires_grad) return;
    float* g = parent.grad_buffer();
    const float upstream = self.grad[0];
    for (std::size_t i = 0; i < parent.data.size(); ++i) g[i] += upstream;
  });
}

Tensor mean(const Tensor& a) {
  double acc = 0.0;
  for (float v : a.data()) acc += v;
  const double n = static_cast<double>(a.numel());
  return Tensor::make_result({1}, {static_cast<float>(acc / n)}, {a}, [](Node& self) {
    Node& parent = *self.parents[0];
    if (!parent.requires_grad) return;
    float* g = parent.grad_buffer();
    const float upstream = self.grad[0] / static_cast<float>(parent.data.size());
    for (std::size_t i = 0; i < parent.data.size(); ++i) g[i] += upstream;
  });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank4(a, "concat_channels", "lhs");
  require_rank4(b, "concat_channels", "rhs");
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3]) {
    throw ShapeError("concat_channels: incompatible shapes " + shape_to_string(sa) + " and " + shape_to_string(sb));
  }
  const std::size_t n = sa[0], ca = sa[1], cb = sb[1], plane = sa[2] * sa[3];
  std::vector<float> out(n * (ca + cb) * plane);
  const auto x = a.data(), y = b.data();
  for (std::size_t s = 0; s < n; ++s) {
    std::copy_n(x.data() + s * ca * plane, ca * plane, out.data() + s * (ca + cb) * plane);
    std::copy_n(y.data() + s * cb * plane, cb * plane, out.data() + (s * (ca + cb) + ca) * plane);
  }
  return Tensor::make_result({n, ca + cb, sa[2], sa[3]}, std::move(out), {a, b}, [n, ca, cb, plane](Node& self) {
    Node& lhs = *self.parents[0];
    Node& rhs = *self.parents[1];
    for (std::size_t s = 0; s < n; ++s) {
      const float* g = self.grad.data() + s * (ca + cb) * plane;
      if (lhs.requires_grad) {
        float* dst = lhs.grad_buffer() + s * ca * plane;
        for (std::size_t i = 0; i < ca * plane; ++i) dst[i] += g[i];
      }
      if (rhs.requires_grad) {
        float* dst = rhs.grad_buffer() + s * cb * plane;
        for (std::size_t i = 0; i < cb * plane; ++i) dst[i] += g[ca * plane + i];
      }
    }
  });
}

Tensor reflection_pad2d(const Tensor& input, std::size_t pad) {
  require_rank4(input, "reflection_pad2d", "input");
  const auto& s = input.shape();
  const std::size_t planes = s[0] * s[1], h = s[2], w = s[3];
  if (pad >= h || pad >= w) {
    throw ShapeError("reflection_pad2d: pad " + std::to_string(pad) + " too large for " + shape_to_string(s));
  }
  const std::size_t oh = h + 2 * pad, ow = w + 2 * pad;
  // Source index for each padded row/column.
  auto reflect = [pad](std::size_t i, std::size_t extent) {
    const auto p = static_cast<std::int64_t>(i) - static_cast<std::int64_t>(pad);
    const auto e = static_cast<std::int64_t>(extent);
    if (p < 0) return static_cast<std::size_t>(-p);
    if (p >= e) return static_cast<std::size_t>(2 * e - 2 - p);
    return static_cast<std::size_t>(p);
  };
  std::vector<std::size_t> rows(oh), cols(ow);
  for (std::size_t i = 0; i < oh; ++i) rows[i] = reflect(i, h);
  for (std::size_t j = 0; j < ow; ++j) cols[j] = reflect(j, w);

  const auto x = input.data();
  std::vector<float> out(planes * oh * ow);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < oh; ++i) {
      const float* src = x.data() + (p * h + rows[i]) * w;
      float* dst = out.data() + (p * oh + i) * ow;
      for (std::size_t j = 0; j < ow; ++j) dst[j] = src[cols[j]];
    }
  }
  return Tensor::make_result({s[0], s[1], oh, ow}, std::move(out), {input},
                             [planes, h, w, oh, ow, rows, cols](Node& self) {
                               Node& parent = *self.parents[0];
                               if (!parent.requires_grad) return;
                               float* g = parent.grad_buffer();
                               for (std::size_t p = 0; p < planes; ++p) {
                                 for (std::size_t i = 0; i < oh; ++i) {
                                   const float* src = self.grad.data() + (p * oh + i) * ow;
                                   float* dst = g + (p * h + rows[i]) * w;
                                   for (std::size_t j = 0; j < ow; ++j) dst[cols[j]] += src[j];
                                 }
                               }
                             });
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, ConvOptions options) {
  require_rank4(input, "conv2d", "input");
  require_rank4(weight, "conv2d", "weight");
  const auto& xs = input.shape();
  const auto& ws = weight.shape();
  if (ws[1] != xs[1]) {
    throw ShapeError("conv2d: weight " + shape_to_string(ws) + " expects " + std::to_string(ws[1]) +
                     " input channels, input is " + shape_to_string(xs));
  }
  if (options.stride == 0) throw ShapeError("conv2d: stride must be >= 1");
  if (ws[2] > xs[2] + options.padding.rows() || ws[3] > xs[3] + options.padding.cols()) {
    throw ShapeError("conv2d: kernel " + shape_to_string(ws) + " larger than padded input " + shape_to_string(xs));
  }
  check_bias(bias, ws[0], "conv2d");
  check_finite(input, "conv2d input");
  check_finite(weight, "conv2d weight");

  const std::size_t batch = xs[0], out_channels = ws[0];
  ConvGeometry geo{xs[1], xs[2], xs[3], ws[2], ws[3], options.stride, options.padding,
                   conv_output_extent(xs[2], options.padding.rows(), ws[2], options.stride),
                   conv_output_extent(xs[3], options.padding.cols(), ws[3], options.stride)};
  const std::size_t patch = geo.channels * geo.kernel_h * geo.kernel_w;
  const std::size_t plane = geo.out_h * geo.out_w;
  const std::size_t in_size = geo.channels * geo.height * geo.width;

  const bool direct = options.stride == 1 && out_channels <= kDirectMaxOutChannels;
  std::vector<float> out(batch * out_channels * plane, 0.0f);
  std::vector<float> cols(direct ? 0 : patch * plane);
  const float* x = input.data().data();
  const float* w = weight.data().data();
  for (std::size_t n = 0; n < batch; ++n) {
    float* dst = out.data() + n * out_channels * plane;
    if (direct) {
      direct_forward(x + n * in_size, w, out_channels, geo, dst);
    } else {
      im2col(x + n * in_size, geo, cols.data());
      gemm(false, false, out_channels, plane, patch, w, cols.data(), dst, false);
    }
    if (bias.defined()) add_bias(dst, bias.data().data(), out_channels, plane);
  }

  std::vector<Tensor> parents{input, weight};
  if (bias.defined()) parents.push_back(bias);
  return Tensor::make_result(
      {batch, out_channels, geo.out_h, geo.out_w}, std::move(out), std::move(parents),
      [geo, batch, out_channels, patch, plane, in_size, direct](Node& self) {
        Node& in = *self.parents[0];
        Node& wt = *self.parents[1];
        Node* b = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
        std::vector<float> cols(direct ? 0 : patch * plane);
        for (std::size_t n = 0; n < batch; ++n) {
          const float* g = self.grad.data() + n * out_channels * plane;
          if (direct) {
            if (b != nullptr && b->requires_grad) accumulate_bias_grad(g, out_channels, plane, b->grad_buffer());
            if (in.requires_grad || wt.requires_grad) {
              direct_backward(in.data.data() + n * in_size, wt.data.data(), g, out_channels, geo,
                              in.requires_grad ? in.grad_buffer() + n * in_size : nullptr,
                              wt.requires_grad ? wt.grad_buffer() : nullptr);
            }
            continue;
          }
          if (wt.requires_grad) {
            im2col(in.data.data() + n * in_size, geo, cols.data());
            gemm(false, true, out_channels, patch, plane, g, cols.data(), wt.grad_buffer(), true);
          }
          if (b != nullptr && b->requires_grad) accumulate_bias_grad(g, out_channels, plane, b->grad_buffer());
          if (in.requires_grad) {
            gemm(true, false, patch, plane, out_channels, wt.data.data(), g, cols.data(), false);
            col2im(cols.data(), geo, in.grad_buffer() + n * in_size);
          }
        }
      });
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
                        ConvTransposeOptions options) {
  require_rank4(input, "conv_transpose2d", "input");
  require_rank4(weight, "conv_transpose2d", "weight");
  const auto& xs = input.shape();
  const auto& ws = weight.shape();
  if (ws[0] != xs[1]) {
    throw ShapeError("conv_transpose2d: weight " + shape_to_string(ws) + " expects " + std::to_string(ws[0]) +
                     " input channels, input is " + shape_to_string(xs));
  }
  if (options.stride == 0) throw ShapeError("conv_transpose2d: stride must be >= 1");
  if (options.output_padding >= options.stride) {
    throw ShapeError("conv_transpose2d: output_padding must be smaller than stride");
  }
  const auto full_h = (xs[2] - 1) * options.stride + ws[2] + options.output_padding;
  const auto full_w = (xs[3] - 1) * options.stride + ws[3] + options.output_padding;
  if (full_h <= options.padding.rows() || full_w <= options.padding.cols()) {
    throw ShapeError("conv_transpose2d: padding consumes the whole output");
  }
  check_bias(bias, ws[1], "conv_transpose2d");
  check_finite(input, "conv_transpose2d input");
  check_finite(weight, "conv_transpose2d weight");

  const std::size_t batch = xs[0], in_channels = xs[1], out_channels = ws[1];
  // Geometry of the forward convolution this operator transposes: the image
  // is the output of conv_transpose2d, the column grid is its input.
  ConvGeometry geo{out_channels, full_h - options.padding.rows(), full_w - options.padding.cols(),
                   ws[2], ws[3], options.stride, options.padding, xs[2], xs[3]};
  const std::size_t patch = out_channels * geo.kernel_h * geo.kernel_w;
  const std::size_t in_plane = xs[2] * xs[3];
  const std::size_t out_size = out_channels * geo.height * geo.width;

  std::vector<float> out(batch * out_size, 0.0f);
  std::vector<float> cols(patch * in_plane);
  const float* x = input.data().data();
  const float* w = weight.data().data();
  for (std::size_t n = 0; n < batch; ++n) {
    gemm(true, false, patch, in_plane, in_channels, w, x + n * in_channels * in_plane, cols.data(), false);
    float* dst = out.data() + n * out_size;
    col2im(cols.data(), geo, dst);
    if (bias.defined()) add_bias(dst, bias.data().data(), out_channels, geo.height * geo.width);
  }

  std::vector<Tensor> parents{input, weight};
  if (bias.defined()) parents.push_back(bias);
  return Tensor::make_result(
      {batch, out_channels, geo.height, geo.width}, std::move(out), std::move(parents),
      [geo, batch, in_channels, out_channels, patch, in_plane, out_size](Node& self) {
        Node& in = *self.parents[0];
        Node& wt = *self.parents[1];
        Node* b = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
        std::vector<float> cols(patch * in_plane);
        for (std::size_t n = 0; n < batch; ++n) {
          const float* g = self.grad.data() + n * out_size;
          if (b != nullptr && b->requires_grad) {
            accumulate_bias_grad(g, out_channels, geo.height * geo.width, b->grad_buffer());
          }
          if (!in.requires_grad && !wt.requires_grad) continue;
          im2col(g, geo, cols.data());
          if (in.requires_grad) {
            gemm(false, false, in_channels, in_plane, patch, wt.data.data(), cols.data(),
                 in.grad_buffer() + n * in_channels * in_plane, true);
          }
          if (wt.requires_grad) {
            gemm(false, true, in_channels, patch, in_plane, in.data.data() + n * in_channels * in_plane,
                 cols.data(), wt.grad_buffer(), true);
          }
        }
      });
}

Tensor instance_norm(const Tensor& input, float epsilon) {
  require_rank4(input, "instance_norm", "input");
  const auto& s = input.shape();
  const std::size_t planes = s[0] * s[1], plane = s[2] * s[3];
  const auto x = input.data();
  std::vector<float> out(x.size());
  std::vector<float> inv_std(planes);
  for (std::size_t p = 0; p < planes; ++p) {
    const float* src = x.data() + p * plane;
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += src[i];
    const double mu = acc / static_cast<double>(plane);
    double var = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double d = src[i] - mu;
      var += d * d;
    }
    var /= static_cast<double>(plane);
    const double r = 1.0 / std::sqrt(var + static_cast<double>(epsilon));
    inv_std[p] = static_cast<float>(r);
    float* dst = out.data() + p * plane;
    for (std::size_t i = 0; i < plane; ++i) dst[i] = static_cast<float>((src[i] - mu) * r);
  }
  return Tensor::make_result(s, std::move(out), {input}, [planes, plane, inv_std](Node& self) {
    Node& parent = *self.parents[0];
    if (!parent.requires_grad) return;
    float* gx = parent.grad_buffer();
    for (std::size_t p = 0; p < planes; ++p) {
      const float* g = self.grad.data() + p * plane;
      const float* y = self.data.data() + p * plane;
      double g_mean = 0.0, gy_mean = 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        g_mean += g[i];
        gy_mean += static_cast<double>(g[i]) * y[i];
      }
      g_mean /= static_cast<double>(plane);
      gy_mean /= static_cast<double>(plane);
      const double r = inv_std[p];
      float* dst = gx + p * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        dst[i] += static_cast<float>(r * (g[i] - g_mean - y[i] * gy_mean));
      }
    }
  });
}

}  // namespace ssacgan
