#include "dropblock/tooling/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "dropblock/error.hpp"
#include "dropblock/nn/layers.hpp"
#include "dropblock/nn/network.hpp"
#include "dropblock/regularizers.hpp"
#include "dropblock/rng.hpp"

namespace dropblock::tooling {

using namespace dropblock::nn;

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

std::vector<double> central_differences(const std::function<double()>& f, std::span<double> x,
                                        double eps) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double up = f();
    x[i] = saved - eps;
    const double down = f();
    x[i] = saved;
    out[i] = (up - down) / (2.0 * eps);
  }
  return out;
}

GradCheckResult compare_gradients(std::string name, std::span<const double> analytic,
                                  std::span<const double> numeric, double tolerance) {
  if (analytic.size() != numeric.size()) {
    throw ShapeError("compare_gradients: " + name + " length mismatch");
  }
  GradCheckResult r{std::move(name), 0.0, tolerance, analytic.size()};
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    r.max_relative_error = std::max(r.max_relative_error, relative_error(analytic[i], numeric[i]));
  }
  return r;
}

namespace {

constexpr double kLayerTolerance = 1e-6;
constexpr double kNetworkTolerance = 1e-5;

Tensor4 random_tensor(Shape s, RngStream& rng, double lo = -1.0, double hi = 1.0) {
  Tensor4 t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = lo + (hi - lo) * rng.next_uniform();
  return t;
}

// Keeps inputs away from the kink at 0 so +-eps never crosses it.
Tensor4 away_from_zero(Shape s, RngStream& rng) {
  Tensor4 t(s);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double mag = 0.05 + 0.95 * rng.next_uniform();
    t[i] = rng.next_uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

// Distinct values spaced far beyond eps so max-pool winners are stable.
Tensor4 well_separated(Shape s, RngStream& rng) {
  std::vector<double> vals(s.size());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.01 * static_cast<double>(i);
  for (std::size_t i = vals.size(); i > 1; --i) {
    std::swap(vals[i - 1], vals[rng.next_below(i)]);
  }
  return Tensor4(s, std::move(vals));
}

double dot(const Tensor4& a, const Tensor4& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> as_vector(const Tensor4& t) { return t.vector(); }

void check_conv(std::vector<GradCheckResult>& out, RngStream& rng, int stride, int pad) {
  const std::string tag = "conv2d(stride=" + std::to_string(stride) + ",pad=" + std::to_string(pad) + ")";
  Tensor4 x = random_tensor(Shape{2, 3, 5, 5}, rng);
  Tensor4 wt = random_tensor(Shape{4, 3, 3, 3}, rng);
  Tensor4 b = random_tensor(Shape{1, 4, 1, 1}, rng);
  const Tensor4 probe0 = conv2d_forward(x, wt, b, stride, pad);
  const Tensor4 r = random_tensor(probe0.shape(), rng);
  auto loss = [&] { return dot(conv2d_forward(x, wt, b, stride, pad), r); };
  const Conv2dGrads g = conv2d_backward(x, wt, r, stride, pad);
  out.push_back(compare_gradients(tag + " input", g.input.values(),
                                  central_differences(loss, x.values()), kLayerTolerance));
  out.push_back(compare_gradients(tag + " weights", g.weights.values(),
                                  central_differences(loss, wt.values()), kLayerTolerance));
  out.push_back(compare_gradients(tag + " bias", g.bias.values(),
                                  central_differences(loss, b.values()), kLayerTolerance));
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed) {
  RngStream rng(seed, 0x6C);
  std::vector<GradCheckResult> out;

  check_conv(out, rng, 1, 1);
  check_conv(out, rng, 2, 0);

  {
    Tensor4 x = away_from_zero(Shape{2, 3, 4, 4}, rng);
    const Tensor4 r = random_tensor(x.shape(), rng);
    auto loss = [&] { return dot(relu_forward(x), r); };
    out.push_back(compare_gradients("relu input", relu_backward(x, r).values(),
                                    central_differences(loss, x.values()), kLayerTolerance));
  }
  {
    Tensor4 x = well_separated(Shape{2, 2, 6, 6}, rng);
    const MaxPoolResult fwd = maxpool_forward(x, 2, 2);
    const Tensor4 r = random_tensor(fwd.output.shape(), rng);
    auto loss = [&] { return dot(maxpool_forward(x, 2, 2).output, r); };
    out.push_back(compare_gradients("maxpool input",
                                    maxpool_backward(x.shape(), fwd.argmax, r).values(),
                                    central_differences(loss, x.values()), kLayerTolerance));
  }
  {
    Tensor4 x = random_tensor(Shape{3, 2, 3, 3}, rng);
    Tensor4 wt = random_tensor(Shape{5, 2, 3, 3}, rng);
    Tensor4 b = random_tensor(Shape{1, 5, 1, 1}, rng);
    const Tensor4 r = random_tensor(Shape{3, 5, 1, 1}, rng);
    auto loss = [&] { return dot(dense_forward(x, wt, b), r); };
    const DenseGrads g = dense_backward(x, wt, r);
    out.push_back(compare_gradients("dense input", g.input.values(),
                                    central_differences(loss, x.values()), kLayerTolerance));
    out.push_back(compare_gradients("dense weights", g.weights.values(),
                                    central_differences(loss, wt.values()), kLayerTolerance));
    out.push_back(compare_gradients("dense bias", g.bias.values(),
                                    central_differences(loss, b.values()), kLayerTolerance));
  }
  {
    Tensor4 logits = random_tensor(Shape{4, 5, 1, 1}, rng, -2.0, 2.0);
    const std::vector<int> labels{0, 3, 1, 4};
    auto loss = [&] { return softmax_xent(logits, labels).loss; };
    out.push_back(compare_gradients("softmax_xent logits", softmax_xent(logits, labels).grad.values(),
                                    central_differences(loss, logits.values()), kLayerTolerance));
  }
  {
    Tensor4 x = random_tensor(Shape{1, 2, 6, 6}, rng);
    const DropBlockConfig cfg{3, 0.8, true, 1.0};
    RngStream mask_rng = rng.split(0xDB);
    const ApplyResult fixed = dropblock_apply(x, cfg, Mode::Train, mask_rng);
    const Tensor4 r = random_tensor(x.shape(), rng);
    // Mask and scale are held fixed; the forward is x * mask * scale.
    auto loss = [&] {
      double s = 0.0;
      const std::size_t plane = x.shape().plane();
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (fixed.mask.mask[i]) s += x[i] * fixed.scale[i / plane] * r[i];
      }
      return s;
    };
    out.push_back(compare_gradients("dropblock_grad input", dropblock_grad(r, fixed).values(),
                                    central_differences(loss, x.values()), kLayerTolerance));
  }
  {
    NetworkSpec spec;
    spec.input_channels = 2;
    spec.input_height = 6;
    spec.input_width = 6;
    spec.layers = {Conv2dSpec{3, 3, 1, 1}, ReluSpec{}, Conv2dSpec{4, 3, 1, 0}, ReluSpec{},
                   DenseSpec{3}};
    Network net(spec, seed);
    const Tensor4 x = random_tensor(Shape{4, 2, 6, 6}, rng);
    const std::vector<int> labels{0, 1, 2, 1};
    ForwardContext ctx{Mode::Train, 1.0, nullptr, std::nullopt};
    auto loss = [&] { return softmax_xent(net.forward(x, ctx), labels).loss; };
    const XentResult fwd = softmax_xent(net.forward(x, ctx), labels);
    net.backward(fwd.grad);
    const auto params = net.parameters();
    std::vector<std::vector<double>> analytic;
    for (Param* p : params) analytic.push_back(as_vector(p->grad));
    for (std::size_t i = 0; i < params.size(); ++i) {
      out.push_back(compare_gradients("network param " + std::to_string(i), analytic[i],
                                      central_differences(loss, params[i]->value.values()),
                                      kNetworkTolerance));
    }
  }
  return out;
}

}  // namespace dropblock::tooling
