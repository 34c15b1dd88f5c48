#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dropblock {

/// NCHW extents. Flat layout is row-major with w fastest.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t sample() const { return static_cast<std::size_t>(c) * h * w; }
  std::size_t index(int in, int ic, int ih, int iw) const {
    return ((static_cast<std::size_t>(in) * c + ic) * h + ih) * w + iw;
  }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Throws ShapeError unless every dimension is at least 1.
void validate_shape(const Shape& shape);

/// Dense real-valued NCHW tensor.
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(Shape shape, double value = 0.0);
  /// Takes ownership of `data`; its length must equal shape.size() and every
  /// element must be finite.
  Tensor4(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(int n, int c, int h, int w) const {
    return data_[shape_.index(n, c, h, w)];
  }
  double& at(int n, int c, int h, int w) {
    return data_[shape_.index(n, c, h, w)];
  }

  std::span<const double> values() const { return data_; }
  std::span<double> values() { return data_; }
  const std::vector<double>& vector() const { return data_; }

  bool all_finite() const;

  bool operator==(const Tensor4&) const = default;

 private:
  Shape shape_{0, 0, 0, 0};
  std::vector<double> data_;
};

/// NCHW tensor whose elements are exactly 0 or 1.
class BinaryTensor4 {
 public:
  BinaryTensor4() = default;
  explicit BinaryTensor4(Shape shape, bool value = false);
  /// Every element of `data` must be 0 or 1.
  BinaryTensor4(Shape shape, std::vector<std::uint8_t> data);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  bool operator[](std::size_t i) const { return data_[i] != 0; }
  void set(std::size_t i, bool v) { data_[i] = v ? 1 : 0; }
  bool at(int n, int c, int h, int w) const {
    return data_[shape_.index(n, c, h, w)] != 0;
  }
  void set(int n, int c, int h, int w, bool v) {
    data_[shape_.index(n, c, h, w)] = v ? 1 : 0;
  }

  std::span<const std::uint8_t> values() const { return data_; }

  bool operator==(const BinaryTensor4&) const = default;

 private:
  Shape shape_{0, 0, 0, 0};
  std::vector<std::uint8_t> data_;
};

enum class Granularity { Global, PerSample, PerSampleChannel };

struct SliceCount {
  std::size_t count = 0;
  std::size_t count_ones = 0;
  bool operator==(const SliceCount&) const = default;
};

/// Number of slices a tensor of `shape` splits into at `g`.
std::size_t slice_count(const Shape& shape, Granularity g);
/// Elements per slice at `g`.
std::size_t slice_length(const Shape& shape, Granularity g);

Tensor4 tensor_full(Shape shape, double value);

Tensor4 elementwise_mul(const Tensor4& a, const Tensor4& b);
Tensor4 elementwise_mul(const Tensor4& a, const BinaryTensor4& b);

std::vector<SliceCount> count_and_ones(const BinaryTensor4& m, Granularity g);

}  // namespace dropblock
