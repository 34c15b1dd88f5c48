#include "dropblock/tensor.hpp"

#include <cmath>

#include "dropblock/error.hpp"

namespace dropblock {

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
         std::to_string(h) + "," + std::to_string(w) + ")";
}

void validate_shape(const Shape& shape) {
  if (shape.n < 1 || shape.c < 1 || shape.h < 1 || shape.w < 1) {
    throw ShapeError("all tensor dimensions must be >= 1, got " + shape.str());
  }
}

Tensor4::Tensor4(Shape shape, double value) : shape_(shape) {
  validate_shape(shape);
  if (!std::isfinite(value)) throw ParameterError("fill value must be finite");
  data_.assign(shape.size(), value);
}

Tensor4::Tensor4(Shape shape, std::vector<double> data)
    : shape_(shape), data_(std::move(data)) {
  validate_shape(shape);
  if (data_.size() != shape.size()) {
    throw ShapeError("data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape.str());
  }
  if (!all_finite()) throw ParameterError("tensor data must be finite");
}

bool Tensor4::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

BinaryTensor4::BinaryTensor4(Shape shape, bool value) : shape_(shape) {
  validate_shape(shape);
  data_.assign(shape.size(), value ? 1 : 0);
}

BinaryTensor4::BinaryTensor4(Shape shape, std::vector<std::uint8_t> data)
    : shape_(shape), data_(std::move(data)) {
  validate_shape(shape);
  if (data_.size() != shape.size()) {
    throw ShapeError("mask length " + std::to_string(data_.size()) +
                     " does not match shape " + shape.str());
  }
  for (auto v : data_) {
    if (v > 1) throw ParameterError("binary tensor elements must be 0 or 1");
  }
}

std::size_t slice_count(const Shape& shape, Granularity g) {
  switch (g) {
    case Granularity::Global:
      return 1;
    case Granularity::PerSample:
      return static_cast<std::size_t>(shape.n);
    case Granularity::PerSampleChannel:
      return static_cast<std::size_t>(shape.n) * shape.c;
  }
  return 1;
}

std::size_t slice_length(const Shape& shape, Granularity g) {
  return shape.size() / slice_count(shape, g);
}

Tensor4 tensor_full(Shape shape, double value) { return Tensor4(shape, value); }

Tensor4 elementwise_mul(const Tensor4& a, const Tensor4& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("elementwise_mul shape mismatch " + a.shape().str() +
                     " vs " + b.shape().str());
  }
  Tensor4 out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

Tensor4 elementwise_mul(const Tensor4& a, const BinaryTensor4& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("elementwise_mul shape mismatch " + a.shape().str() +
                     " vs " + b.shape().str());
  }
  Tensor4 out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = b[i] ? a[i] : 0.0;
  return out;
}

std::vector<SliceCount> count_and_ones(const BinaryTensor4& m, Granularity g) {
  const std::size_t slices = slice_count(m.shape(), g);
  const std::size_t len = slice_length(m.shape(), g);
  std::vector<SliceCount> out(slices, SliceCount{len, 0});
  auto vals = m.values();
  for (std::size_t s = 0; s < slices; ++s) {
    std::size_t ones = 0;
    for (std::size_t i = s * len; i < (s + 1) * len; ++i) ones += vals[i];
    out[s].count_ones = ones;
  }
  return out;
}

}  // namespace dropblock
