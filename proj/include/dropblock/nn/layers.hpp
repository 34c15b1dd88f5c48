#pragma once

#include <span>
#include <vector>

#include "dropblock/tensor.hpp"

namespace dropblock::nn {

// Stateless forward/backward kernels. Weights use the same NCHW container:
// conv weights are (out_ch, in_ch, k, k), dense weights (out_dim, in_dim, 1, 1),
// biases (1, out, 1, 1).

int conv_output_extent(int in, int kernel, int stride, int pad);

Tensor4 conv2d_forward(const Tensor4& x, const Tensor4& weights,
                       const Tensor4& bias, int stride, int pad);

struct Conv2dGrads {
  Tensor4 input;
  Tensor4 weights;
  Tensor4 bias;
};

Conv2dGrads conv2d_backward(const Tensor4& x, const Tensor4& weights,
                            const Tensor4& grad_out, int stride, int pad);

Tensor4 relu_forward(const Tensor4& x);
Tensor4 relu_backward(const Tensor4& x, const Tensor4& grad_out);

struct MaxPoolResult {
  Tensor4 output;
  /// Flat input index of the maximum feeding each output element.
  std::vector<std::size_t> argmax;
};

MaxPoolResult maxpool_forward(const Tensor4& x, int size, int stride);
Tensor4 maxpool_backward(const Shape& input_shape,
                         const std::vector<std::size_t>& argmax,
                         const Tensor4& grad_out);

/// Flattens each sample to c*h*w features; output is (n, out_dim, 1, 1).
Tensor4 dense_forward(const Tensor4& x, const Tensor4& weights,
                      const Tensor4& bias);

struct DenseGrads {
  Tensor4 input;
  Tensor4 weights;
  Tensor4 bias;
};

DenseGrads dense_backward(const Tensor4& x, const Tensor4& weights,
                          const Tensor4& grad_out);

struct XentResult {
  double loss = 0.0;  ///< mean over the batch
  Tensor4 grad;       ///< d loss / d logits
  int correct = 0;
};

/// logits are (n, k, 1, 1); labels must have n entries in [0, k).
XentResult softmax_xent(const Tensor4& logits, std::span<const int> labels);

struct Param {
  Tensor4 value;
  Tensor4 grad;
  Tensor4 velocity;

  explicit Param(Tensor4 v)
      : value(std::move(v)), grad(value.shape()), velocity(value.shape()) {}
};

struct SgdConfig {
  double learning_rate = 0.01;
  double momentum = 0.0;
  double weight_decay = 0.0;
};

/// v <- momentum * v + grad + weight_decay * value; value <- value - lr * v.
void sgd_step(std::span<Param* const> params, const SgdConfig& cfg);

}  // namespace dropblock::nn
