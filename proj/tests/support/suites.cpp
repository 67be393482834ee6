#include "suites.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "oracles.hpp"

namespace oracle {

namespace {

using namespace ssacgan;

using Loss = std::function<Tensor(const std::vector<Tensor>&)>;  // returns the op output

struct GradCase {
  std::vector<Tensor> inputs;
  Loss f;
};

Shape small_shape(Rng& rng) {
  return {static_cast<std::size_t>(rng.uniform_int(1, 2)), static_cast<std::size_t>(rng.uniform_int(1, 3)),
          static_cast<std::size_t>(rng.uniform_int(2, 8)), static_cast<std::size_t>(rng.uniform_int(2, 8))};
}

// Each builder draws its shapes and values from `rng`.
using Builder = std::function<GradCase(Rng&, std::uint64_t)>;

GradCase unary(Rng& rng, std::uint64_t seed, std::function<Tensor(const Tensor&)> op, float min_magnitude = 0.0f) {
  const Shape s = small_shape(rng);
  return {{random_tensor(s, rng, -1.0f, 1.0f, true, min_magnitude)},
          [op](const std::vector<Tensor>& in) { return op(in[0]); }};
}

GradCase binary(Rng& rng, std::uint64_t seed, std::function<Tensor(const Tensor&, const Tensor&)> op) {
  const Shape s = small_shape(rng);
  return {{random_tensor(s, rng, -1.0f, 1.0f, true), random_tensor(s, rng, -1.0f, 1.0f, true)},
          [op](const std::vector<Tensor>& in) { return op(in[0], in[1]); }};
}

std::vector<std::pair<std::string, Builder>> gradient_cases() {
  std::vector<std::pair<std::string, Builder>> cases;
  cases.emplace_back("add", [](Rng& r, std::uint64_t s) { return binary(r, s, ssacgan::add); });
  cases.emplace_back("sub", [](Rng& r, std::uint64_t s) { return binary(r, s, ssacgan::sub); });
  cases.emplace_back("mul", [](Rng& r, std::uint64_t s) { return binary(r, s, ssacgan::mul); });
  cases.emplace_back("add_scalar", [](Rng& r, std::uint64_t s) {
    const float c = r.uniform(-2.0f, 2.0f);
    return unary(r, s, [c](const Tensor& t) { return add_scalar(t, c); });
  });
  cases.emplace_back("mul_scalar", [](Rng& r, std::uint64_t s) {
    const float c = r.uniform(-2.0f, 2.0f);
    return unary(r, s, [c](const Tensor& t) { return mul_scalar(t, c); });
  });
  cases.emplace_back("square", [](Rng& r, std::uint64_t s) { return unary(r, s, ssacgan::square); });
  cases.emplace_back("abs", [](Rng& r, std::uint64_t s) { return unary(r, s, ssacgan::abs, 0.01f); });
  cases.emplace_back("relu", [](Rng& r, std::uint64_t s) { return unary(r, s, ssacgan::relu, 0.01f); });
  cases.emplace_back("leaky_relu", [](Rng& r, std::uint64_t s) {
    return unary(r, s, [](const Tensor& t) { return leaky_relu(t, 0.2f); }, 0.01f);
  });
  cases.emplace_back("tanh", [](Rng& r, std::uint64_t s) { return unary(r, s, ssacgan::tanh); });
  cases.emplace_back("sum", [](Rng& r, std::uint64_t) {
    const Shape s = small_shape(r);
    return GradCase{{random_tensor(s, r, -0.1f, 0.1f, true)},
                    [](const std::vector<Tensor>& in) { return sum(in[0]); }};
  });
  cases.emplace_back("mean", [](Rng& r, std::uint64_t) {
    const Shape s = small_shape(r);
    return GradCase{{random_tensor(s, r, -0.1f, 0.1f, true)},
                    [](const std::vector<Tensor>& in) { return mean(in[0]); }};
  });
  cases.emplace_back("concat_channels", [](Rng& r, std::uint64_t seed) {
    Shape a = small_shape(r), b = a;
    b[1] = static_cast<std::size_t>(r.uniform_int(1, 3));
    return GradCase{{random_tensor(a, r, -1.0f, 1.0f, true), random_tensor(b, r, -1.0f, 1.0f, true)},
                    [](const std::vector<Tensor>& in) { return concat_channels(in[0], in[1]); }};
  });
  cases.emplace_back("reflection_pad2d", [](Rng& r, std::uint64_t seed) {
    const Shape s = small_shape(r);
    const std::size_t pad = static_cast<std::size_t>(r.uniform_int(1, static_cast<std::int64_t>(std::min(s[2], s[3]) - 1)));
    return GradCase{{random_tensor(s, r, -1.0f, 1.0f, true)},
                    [pad](const std::vector<Tensor>& in) { return reflection_pad2d(in[0], pad); }};
  });
  cases.emplace_back("instance_norm", [](Rng& r, std::uint64_t s) {
    return unary(r, s, [](const Tensor& t) { return instance_norm(t); });
  });
  cases.emplace_back("conv2d", [](Rng& r, std::uint64_t seed) {
    const std::size_t n = r.uniform_int(1, 2), c = r.uniform_int(1, 3), k = r.uniform_int(1, 6);
    const std::size_t h = r.uniform_int(3, 8), w = r.uniform_int(3, 8);
    ConvOptions opt;
    opt.stride = r.uniform_int(1, 2);
    opt.padding = {static_cast<std::size_t>(r.uniform_int(0, 1)), static_cast<std::size_t>(r.uniform_int(0, 1)),
                   static_cast<std::size_t>(r.uniform_int(0, 1)), static_cast<std::size_t>(r.uniform_int(0, 1))};
    const std::size_t kh = r.uniform_int(1, 3), kw = r.uniform_int(1, 3);
    return GradCase{{random_tensor({n, c, h, w}, r, -1.0f, 1.0f, true), random_tensor({k, c, kh, kw}, r, -1.0f, 1.0f, true),
                     random_tensor({k}, r, -1.0f, 1.0f, true)},
                    [opt](const std::vector<Tensor>& in) {
                      return conv2d(in[0], in[1], in[2], opt);
                    }};
  });
  cases.emplace_back("conv_transpose2d", [](Rng& r, std::uint64_t seed) {
    const std::size_t n = r.uniform_int(1, 2), c = r.uniform_int(1, 3), k = r.uniform_int(1, 4);
    const std::size_t h = r.uniform_int(2, 5), w = r.uniform_int(2, 5);
    const std::size_t kernel = r.uniform_int(1, 4);
    ConvTransposeOptions opt;
    opt.stride = r.uniform_int(1, 2);
    opt.padding = Padding2d::uniform(static_cast<std::size_t>(r.uniform_int(0, static_cast<std::int64_t>((kernel - 1) / 2))));
    opt.output_padding = r.uniform_int(0, static_cast<std::int64_t>(opt.stride) - 1);
    return GradCase{{random_tensor({n, c, h, w}, r, -1.0f, 1.0f, true),
                     random_tensor({c, k, kernel, kernel}, r, -1.0f, 1.0f, true), random_tensor({k}, r, -1.0f, 1.0f, true)},
                    [opt](const std::vector<Tensor>& in) {
                      return conv_transpose2d(in[0], in[1], in[2], opt);
                    }};
  });
  return cases;
}

}  // namespace

std::vector<SuiteResult> run_gradient_suite(int seeds, double tolerance) {
  std::vector<SuiteResult> out;
  for (const auto& [name, build] : gradient_cases()) {
    SuiteResult res{name, 0.0, true, {}};
    for (int s = 0; s < seeds; ++s) {
      Rng rng = Rng(static_cast<std::uint64_t>(s)).child("grad", fnv1a64(name) & 0xffff);
      GradCase c = build(rng, static_cast<std::uint64_t>(1000 + s));
      const GradCheck check = check_gradients(c.f, c.inputs, static_cast<std::uint64_t>(1000 + s));
      if (check.max_relative_error >= res.worst) {
        res.worst = check.max_relative_error;
        res.detail = "seed " + std::to_string(s) + ", " + check.worst;
      }
    }
    res.passed = res.worst < tolerance;
    out.push_back(std::move(res));
  }
  return out;
}

std::vector<SuiteResult> run_kernel_suite(int configs) {
  SuiteResult conv{"conv2d vs nested-loop oracle", 0.0, true, {}};
  SuiteResult convt{"conv_transpose2d vs scatter oracle", 0.0, true, {}};
  SuiteResult adjoint{"adjoint identity <conv(x,w),y> = <x,convT(y,w)>", 0.0, true, {}};
  for (int i = 0; i < configs; ++i) {
    Rng r = Rng(static_cast<std::uint64_t>(i)).child("kernel-config");
    const std::size_t n = r.uniform_int(1, 2), c = r.uniform_int(1, 4), k = r.uniform_int(1, 6);
    const std::size_t h = r.uniform_int(3, 10), w = r.uniform_int(3, 10);
    ConvOptions opt;
    opt.stride = r.uniform_int(1, 3);
    opt.padding = {static_cast<std::size_t>(r.uniform_int(0, 2)), static_cast<std::size_t>(r.uniform_int(0, 2)),
                   static_cast<std::size_t>(r.uniform_int(0, 2)), static_cast<std::size_t>(r.uniform_int(0, 2))};
    const std::size_t kh = r.uniform_int(1, static_cast<std::int64_t>(std::min<std::size_t>(5, h + opt.padding.rows())));
    const std::size_t kw = r.uniform_int(1, static_cast<std::int64_t>(std::min<std::size_t>(5, w + opt.padding.cols())));
    const Tensor x = random_tensor({n, c, h, w}, r);
    const Tensor wt = random_tensor({k, c, kh, kw}, r);
    const Tensor b = random_tensor({k}, r);
    const Tensor y = conv2d(x, wt, b, opt);
    const std::vector<double> bias(b.data().begin(), b.data().end());
    const double d = max_abs_diff(oracle::conv2d(to_array(x), to_array(wt), bias, opt.stride, opt.padding), y);
    conv.worst = std::max(conv.worst, d);
    if (d >= 1e-4 && conv.passed) {
      conv.passed = false;
      conv.detail = "config " + std::to_string(i);
    }

    // Transposed conv with the same weight: input has K channels, output C.
    ConvTransposeOptions topt;
    topt.stride = opt.stride;
    topt.padding = Padding2d::uniform(static_cast<std::size_t>(r.uniform_int(0, static_cast<std::int64_t>((std::min(kh, kw) - 1) / 2))));
    topt.output_padding = r.uniform_int(0, static_cast<std::int64_t>(topt.stride) - 1);
    const std::size_t th = r.uniform_int(2, 7), tw = r.uniform_int(2, 7);
    const Tensor tx = random_tensor({n, k, th, tw}, r);
    const Tensor tb = random_tensor({c}, r);
    const Tensor ty = conv_transpose2d(tx, wt, tb, topt);
    const std::vector<double> tbias(tb.data().begin(), tb.data().end());
    const double dt = max_abs_diff(
        oracle::conv_transpose2d(to_array(tx), to_array(wt), tbias, topt.stride, topt.padding, topt.output_padding), ty);
    convt.worst = std::max(convt.worst, dt);
    if (dt >= 1e-4 && convt.passed) {
      convt.passed = false;
      convt.detail = "config " + std::to_string(i);
    }

    // <conv(x,w), g> = <x, convT(g,w)> on square geometry, where the rows
    // and columns a strided conv leaves unread coincide.
    const std::size_t ah = r.uniform_int(3, 10), ap = r.uniform_int(0, 2);
    const std::size_t ak = r.uniform_int(1, static_cast<std::int64_t>(std::min<std::size_t>(5, ah + 2 * ap)));
    ConvOptions aopt;
    aopt.stride = r.uniform_int(1, 3);
    aopt.padding = Padding2d::uniform(ap);
    const Tensor ax = random_tensor({n, c, ah, ah}, r);
    const Tensor aw = random_tensor({k, c, ak, ak}, r);
    const Tensor lhs = conv2d(ax, aw, Tensor(), aopt);
    const Tensor g = random_tensor(lhs.shape(), r);
    ConvTransposeOptions match;
    match.stride = aopt.stride;
    match.padding = aopt.padding;
    match.output_padding = (ah + 2 * ap - ak) % aopt.stride;
    const Tensor rhs = conv_transpose2d(g, aw, Tensor(), match);
    double a = 0.0, bsum = 0.0;
    for (std::size_t j = 0; j < lhs.numel(); ++j) a += static_cast<double>(lhs.at(j)) * g.at(j);
    for (std::size_t j = 0; j < rhs.numel(); ++j) bsum += static_cast<double>(rhs.at(j)) * ax.at(j);
    const double rel = std::fabs(a - bsum) / std::max({std::fabs(a), std::fabs(bsum), 1e-6});
    adjoint.worst = std::max(adjoint.worst, rel);
    if (rel >= 1e-3 && adjoint.passed) {
      adjoint.passed = false;
      adjoint.detail = "config " + std::to_string(i);
    }
  }
  return {conv, convt, adjoint};
}

}  // namespace oracle
