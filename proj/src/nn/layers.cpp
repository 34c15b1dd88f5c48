#include "dropblock/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "dropblock/error.hpp"

namespace dropblock::nn {

namespace {

void check_conv(const Tensor4& x, const Tensor4& weights, int stride, int pad) {
  const Shape& ws = weights.shape();
  if (ws.c != x.shape().c) {
    throw ShapeError("conv2d weights expect " + std::to_string(ws.c) +
                     " input channels, got " + std::to_string(x.shape().c));
  }
  if (ws.h != ws.w) throw ShapeError("conv2d kernels must be square");
  if (stride < 1 || pad < 0) throw ShapeError("conv2d needs stride >= 1, pad >= 0");
  if (x.shape().h + 2 * pad < ws.h || x.shape().w + 2 * pad < ws.w) {
    throw ShapeError("conv2d kernel does not fit the padded input");
  }
}

struct ConvGeometry {
  int channels, h, w, k, stride, pad, oh, ow;
  std::size_t patch() const { return static_cast<std::size_t>(channels) * k * k; }
  std::size_t pixels() const { return static_cast<std::size_t>(oh) * ow; }
};

// col[(ci*k + ky)*k + kx][y*ow + x] = input at (y*stride - pad + ky,
// x*stride - pad + kx), zero outside the image.
void im2col(const double* src, const ConvGeometry& g, double* col) {
  const std::size_t pixels = g.pixels();
  for (int ci = 0; ci < g.channels; ++ci) {
    const double* plane = src + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        double* dst = col + ((static_cast<std::size_t>(ci) * g.k + ky) * g.k + kx) * pixels;
        for (int y = 0; y < g.oh; ++y) {
          const int iy = y * g.stride - g.pad + ky;
          double* drow = dst + static_cast<std::size_t>(y) * g.ow;
          if (iy < 0 || iy >= g.h) {
            std::fill(drow, drow + g.ow, 0.0);
            continue;
          }
          const double* row = plane + static_cast<std::size_t>(iy) * g.w;
          for (int x = 0; x < g.ow; ++x) {
            const int ix = x * g.stride - g.pad + kx;
            drow[x] = ix >= 0 && ix < g.w ? row[ix] : 0.0;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters column gradients back onto the image.
void col2im(const double* col, const ConvGeometry& g, double* dst) {
  const std::size_t pixels = g.pixels();
  for (int ci = 0; ci < g.channels; ++ci) {
    double* plane = dst + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const double* src = col + ((static_cast<std::size_t>(ci) * g.k + ky) * g.k + kx) * pixels;
        for (int y = 0; y < g.oh; ++y) {
          const int iy = y * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          double* row = plane + static_cast<std::size_t>(iy) * g.w;
          const double* srow = src + static_cast<std::size_t>(y) * g.ow;
          for (int x = 0; x < g.ow; ++x) {
            const int ix = x * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) row[ix] += srow[x];
          }
        }
      }
    }
  }
}

ConvGeometry conv_geometry(const Tensor4& x, const Tensor4& weights, int stride, int pad) {
  const Shape& xs = x.shape();
  const int k = weights.shape().h;
  return {xs.c, xs.h, xs.w, k, stride, pad, conv_output_extent(xs.h, k, stride, pad),
          conv_output_extent(xs.w, k, stride, pad)};
}

}  // namespace

int conv_output_extent(int in, int kernel, int stride, int pad) {
  if (kernel < 1 || stride < 1 || pad < 0) {
    throw ShapeError("conv kernel and stride must be >= 1 and pad >= 0");
  }
  if (in + 2 * pad < kernel) {
    throw ShapeError("conv kernel " + std::to_string(kernel) + " exceeds padded extent " +
                     std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

Tensor4 conv2d_forward(const Tensor4& x, const Tensor4& weights,
                       const Tensor4& bias, int stride, int pad) {
  check_conv(x, weights, stride, pad);
  const Shape& xs = x.shape();
  const int out_ch = weights.shape().n;
  if (bias.size() != static_cast<std::size_t>(out_ch)) {
    throw ShapeError("conv2d bias length must equal output channels");
  }
  const ConvGeometry g = conv_geometry(x, weights, stride, pad);
  const std::size_t patch = g.patch(), pixels = g.pixels();
  Tensor4 out(Shape{xs.n, out_ch, g.oh, g.ow});
  std::vector<double> col(patch * pixels);
  const double* wv = weights.values().data();
  for (int n = 0; n < xs.n; ++n) {
    im2col(&x.values()[xs.index(n, 0, 0, 0)], g, col.data());
    for (int o = 0; o < out_ch; ++o) {
      double* dst = &out.values()[out.shape().index(n, o, 0, 0)];
      std::fill(dst, dst + pixels, bias[o]);
      const double* wrow = wv + static_cast<std::size_t>(o) * patch;
      std::size_t j = 0;
      for (; j + 4 <= patch; j += 4) {
        const double w0 = wrow[j], w1 = wrow[j + 1], w2 = wrow[j + 2], w3 = wrow[j + 3];
        const double* c0 = col.data() + j * pixels;
        const double* c1 = c0 + pixels;
        const double* c2 = c1 + pixels;
        const double* c3 = c2 + pixels;
        for (std::size_t p = 0; p < pixels; ++p) {
          dst[p] += w0 * c0[p] + w1 * c1[p] + w2 * c2[p] + w3 * c3[p];
        }
      }
      for (; j < patch; ++j) {
        const double wk = wrow[j];
        const double* crow = col.data() + j * pixels;
        for (std::size_t p = 0; p < pixels; ++p) dst[p] += wk * crow[p];
      }
    }
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor4& x, const Tensor4& weights,
                            const Tensor4& grad_out, int stride, int pad) {
  check_conv(x, weights, stride, pad);
  const Shape& xs = x.shape();
  const Shape& ws = weights.shape();
  const ConvGeometry g = conv_geometry(x, weights, stride, pad);
  if (grad_out.shape() != Shape{xs.n, ws.n, g.oh, g.ow}) {
    throw ShapeError("conv2d_backward gradient shape " + grad_out.shape().str() +
                     " does not match output");
  }
  const std::size_t patch = g.patch(), pixels = g.pixels();
  Conv2dGrads grads{Tensor4(xs), Tensor4(ws), Tensor4(Shape{1, ws.n, 1, 1})};
  std::vector<double> col(patch * pixels), gcol(patch * pixels);
  const double* wv = weights.values().data();
  double* gw = grads.weights.values().data();
  const Shape& os = grad_out.shape();
  for (int n = 0; n < xs.n; ++n) {
    im2col(&x.values()[xs.index(n, 0, 0, 0)], g, col.data());
    std::fill(gcol.begin(), gcol.end(), 0.0);
    for (int o = 0; o < ws.n; ++o) {
      const double* go = &grad_out.values()[os.index(n, o, 0, 0)];
      double bsum = 0.0;
      for (std::size_t p = 0; p < pixels; ++p) bsum += go[p];
      grads.bias[o] += bsum;
      const double* wrow = wv + static_cast<std::size_t>(o) * patch;
      double* gwrow = gw + static_cast<std::size_t>(o) * patch;
      for (std::size_t j = 0; j < patch; ++j) {
        const double* crow = col.data() + j * pixels;
        double* grow = gcol.data() + j * pixels;
        const double wk = wrow[j];
        double acc = 0.0;
        for (std::size_t p = 0; p < pixels; ++p) {
          acc += go[p] * crow[p];
          grow[p] += wk * go[p];
        }
        gwrow[j] += acc;
      }
    }
    col2im(gcol.data(), g, &grads.input.values()[xs.index(n, 0, 0, 0)]);
  }
  return grads;
}

Tensor4 relu_forward(const Tensor4& x) {
  Tensor4 out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return out;
}

Tensor4 relu_backward(const Tensor4& x, const Tensor4& grad_out) {
  if (x.shape() != grad_out.shape()) throw ShapeError("relu_backward shape mismatch");
  Tensor4 out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = x[i] > 0.0 ? grad_out[i] : 0.0;
  }
  return out;
}

MaxPoolResult maxpool_forward(const Tensor4& x, int size, int stride) {
  const Shape& xs = x.shape();
  if (size < 1 || stride < 1) throw ShapeError("maxpool needs size, stride >= 1");
  if (size > xs.h || size > xs.w) throw ShapeError("maxpool window exceeds input");
  const int oh = (xs.h - size) / stride + 1;
  const int ow = (xs.w - size) / stride + 1;
  MaxPoolResult r{Tensor4(Shape{xs.n, xs.c, oh, ow}), {}};
  r.argmax.resize(r.output.size());
  std::size_t o = 0;
  for (int n = 0; n < xs.n; ++n) {
    for (int c = 0; c < xs.c; ++c) {
      for (int y = 0; y < oh; ++y) {
        for (int xo = 0; xo < ow; ++xo, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t arg = 0;
          for (int dy = 0; dy < size; ++dy) {
            for (int dx = 0; dx < size; ++dx) {
              const std::size_t idx =
                  xs.index(n, c, y * stride + dy, xo * stride + dx);
              if (x[idx] > best) {
                best = x[idx];
                arg = idx;
              }
            }
          }
          r.output[o] = best;
          r.argmax[o] = arg;
        }
      }
    }
  }
  return r;
}

Tensor4 maxpool_backward(const Shape& input_shape,
                         const std::vector<std::size_t>& argmax,
                         const Tensor4& grad_out) {
  if (argmax.size() != grad_out.size()) {
    throw ShapeError("maxpool_backward gradient does not match forward output");
  }
  Tensor4 g(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += grad_out[i];
  return g;
}

Tensor4 dense_forward(const Tensor4& x, const Tensor4& weights,
                      const Tensor4& bias) {
  const Shape& xs = x.shape();
  const Shape& ws = weights.shape();
  const std::size_t in_dim = xs.sample();
  if (static_cast<std::size_t>(ws.c) * ws.h * ws.w != in_dim) {
    throw ShapeError("dense weights expect " + std::to_string(ws.sample()) +
                     " inputs, got " + std::to_string(in_dim));
  }
  if (bias.size() != static_cast<std::size_t>(ws.n)) {
    throw ShapeError("dense bias length must equal output dimension");
  }
  Tensor4 out(Shape{xs.n, ws.n, 1, 1});
  auto xv = x.values();
  auto wv = weights.values();
  for (int n = 0; n < xs.n; ++n) {
    const double* xi = &xv[n * in_dim];
    for (int o = 0; o < ws.n; ++o) {
      const double* wo = &wv[o * in_dim];
      double acc = bias[o];
      for (std::size_t i = 0; i < in_dim; ++i) acc += wo[i] * xi[i];
      out[static_cast<std::size_t>(n) * ws.n + o] = acc;
    }
  }
  return out;
}

DenseGrads dense_backward(const Tensor4& x, const Tensor4& weights,
                          const Tensor4& grad_out) {
  const Shape& xs = x.shape();
  const Shape& ws = weights.shape();
  const std::size_t in_dim = xs.sample();
  if (grad_out.shape() != Shape{xs.n, ws.n, 1, 1} || ws.sample() != in_dim) {
    throw ShapeError("dense_backward shape mismatch");
  }
  DenseGrads g{Tensor4(xs), Tensor4(ws), Tensor4(Shape{1, ws.n, 1, 1})};
  auto xv = x.values();
  auto wv = weights.values();
  auto gx = g.input.values();
  auto gw = g.weights.values();
  for (int n = 0; n < xs.n; ++n) {
    const double* xi = &xv[n * in_dim];
    double* gxi = &gx[n * in_dim];
    for (int o = 0; o < ws.n; ++o) {
      const double go = grad_out[static_cast<std::size_t>(n) * ws.n + o];
      if (go == 0.0) continue;
      g.bias[o] += go;
      const double* wo = &wv[o * in_dim];
      double* gwo = &gw[o * in_dim];
      for (std::size_t i = 0; i < in_dim; ++i) {
        gwo[i] += go * xi[i];
        gxi[i] += go * wo[i];
      }
    }
  }
  return g;
}

XentResult softmax_xent(const Tensor4& logits, std::span<const int> labels) {
  const Shape& s = logits.shape();
  if (labels.empty()) throw ShapeError("softmax_xent: empty batch");
  if (labels.size() != static_cast<std::size_t>(s.n)) {
    throw ShapeError("softmax_xent: label count does not match batch size");
  }
  const std::size_t k = s.sample();
  XentResult r{0.0, Tensor4(s), 0};
  const double inv_n = 1.0 / s.n;
  for (int n = 0; n < s.n; ++n) {
    const int label = labels[n];
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw ParameterError("softmax_xent: label out of range");
    }
    const std::size_t base = n * k;
    double mx = logits[base];
    std::size_t arg = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (logits[base + j] > mx) {
        mx = logits[base + j];
        arg = j;
      }
    }
    if (arg == static_cast<std::size_t>(label)) ++r.correct;
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(logits[base + j] - mx);
    const double log_z = mx + std::log(z);
    r.loss += (log_z - logits[base + label]) * inv_n;
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(logits[base + j] - log_z);
      r.grad[base + j] = (p - (j == static_cast<std::size_t>(label) ? 1.0 : 0.0)) * inv_n;
    }
  }
  return r;
}

void sgd_step(std::span<Param* const> params, const SgdConfig& cfg) {
  for (Param* p : params) {
    if (p->grad.shape() != p->value.shape() ||
        p->velocity.shape() != p->value.shape()) {
      throw ShapeError("sgd_step: parameter, gradient and velocity shapes differ");
    }
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      p->velocity[i] = cfg.momentum * p->velocity[i] + p->grad[i] +
                       cfg.weight_decay * p->value[i];
      p->value[i] -= cfg.learning_rate * p->velocity[i];
    }
  }
}

}  // namespace dropblock::nn
