#include "dropblock/nn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "dropblock/error.hpp"
#include "dropblock/rng.hpp"

namespace dropblock::nn {

void Dataset::validate() const {
  if (images.size() == 0) throw ShapeError("dataset has no images");
  if (static_cast<std::size_t>(images.shape().n) != labels.size()) {
    throw ShapeError("dataset image count does not match label count");
  }
  if (classes < 1) throw ParameterError("dataset class count must be >= 1");
  for (int l : labels) {
    if (l < 0 || l >= classes) throw ParameterError("dataset label out of range");
  }
  for (double v : images.values()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ParameterError("dataset pixels must be finite and in [0, 1]");
    }
  }
}

Tensor4 Dataset::gather_images(std::span<const int> indices) const {
  const Shape& s = images.shape();
  const std::size_t len = s.sample();
  std::vector<double> data(indices.size() * len);
  auto src = images.values();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(indices[i] * len), len,
                data.begin() + static_cast<std::ptrdiff_t>(i * len));
  }
  return Tensor4(Shape{static_cast<int>(indices.size()), s.c, s.h, s.w}, std::move(data));
}

std::vector<int> Dataset::gather_labels(std::span<const int> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(labels[i]);
  return out;
}

namespace {

constexpr int kSide = 16;
constexpr int kDistractors = 5;

void add_bump(std::vector<double>& img, double cy, double cx, double sigma,
              double amplitude) {
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int y = 0; y < kSide; ++y) {
    for (int x = 0; x < kSide; ++x) {
      const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
      img[y * kSide + x] += amplitude * std::exp(-d2 * inv);
    }
  }
}

}  // namespace

Dataset gen_synthetic(std::uint64_t seed, int n, int class_count) {
  if (class_count < 2 || class_count > 4) {
    throw ParameterError("synthetic data supports 2 to 4 classes");
  }
  if (n < class_count) throw ParameterError("synthetic data needs n >= class_count");
  RngStream rng(seed, 0x5EED);

  Dataset ds;
  ds.classes = class_count;
  ds.labels.resize(n);
  for (int i = 0; i < n; ++i) ds.labels[i] = i % class_count;
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i) + 1));
    std::swap(ds.labels[i], ds.labels[j]);
  }

  const int half = kSide / 2;
  std::vector<double> data(static_cast<std::size_t>(n) * kSide * kSide);
  std::vector<double> img(kSide * kSide);
  for (int i = 0; i < n; ++i) {
    for (double& v : img) v = 0.25 * rng.next_uniform();
    for (int d = 0; d < kDistractors; ++d) {
      const double cy = rng.next_uniform() * (kSide - 1);
      const double cx = rng.next_uniform() * (kSide - 1);
      add_bump(img, cy, cx, 1.1, 0.4 + 0.4 * rng.next_uniform());
    }
    const int q = ds.labels[i];
    const double cy = (q / 2) * half + 1.5 + rng.next_uniform() * (half - 3);
    const double cx = (q % 2) * half + 1.5 + rng.next_uniform() * (half - 3);
    add_bump(img, cy, cx, 1.6, 0.45 + 0.35 * rng.next_uniform());
    for (int p = 0; p < kSide * kSide; ++p) {
      data[static_cast<std::size_t>(i) * kSide * kSide + p] = std::clamp(img[p], 0.0, 1.0);
    }
  }
  ds.images = Tensor4(Shape{n, 1, kSide, kSide}, std::move(data));
  return ds;
}

namespace {

constexpr std::uint8_t kUnsignedByte = 0x08;

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t off) {
  return (static_cast<std::uint32_t>(b[off]) << 24) |
         (static_cast<std::uint32_t>(b[off + 1]) << 16) |
         (static_cast<std::uint32_t>(b[off + 2]) << 8) | b[off + 3];
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace

IdxArray parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw FormatError("IDX: truncated header");
  if (bytes[0] != 0 || bytes[1] != 0) throw FormatError("IDX: bad magic");
  if (bytes[2] != kUnsignedByte) {
    throw FormatError("IDX: only unsigned-byte payloads (type 0x08) are supported");
  }
  const std::size_t ndims = bytes[3];
  if (ndims == 0) throw FormatError("IDX: zero dimensions");
  if (bytes.size() < 4 + 4 * ndims) throw FormatError("IDX: truncated dimension header");
  IdxArray arr;
  std::size_t count = 1;
  for (std::size_t d = 0; d < ndims; ++d) {
    arr.dims.push_back(read_be32(bytes, 4 + 4 * d));
    count *= arr.dims.back();
  }
  const std::size_t header = 4 + 4 * ndims;
  if (bytes.size() < header + count) throw FormatError("IDX: truncated payload");
  if (bytes.size() > header + count) throw FormatError("IDX: trailing bytes after payload");
  arr.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return arr;
}

std::vector<std::uint8_t> encode_idx(const IdxArray& array) {
  if (array.dims.empty() || array.dims.size() > 255) {
    throw FormatError("IDX: dimension count must be 1..255");
  }
  std::size_t count = 1;
  for (auto d : array.dims) count *= d;
  if (count != array.data.size()) throw FormatError("IDX: payload does not match dimensions");
  std::vector<std::uint8_t> out{0, 0, kUnsignedByte,
                                static_cast<std::uint8_t>(array.dims.size())};
  for (auto d : array.dims) write_be32(out, d);
  out.insert(out.end(), array.data.begin(), array.data.end());
  return out;
}

IdxArray read_idx_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("IDX: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_idx(bytes);
}

void write_idx_file(const std::filesystem::path& path, const IdxArray& array) {
  const auto bytes = encode_idx(array);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("IDX: cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

Dataset load_idx(const std::filesystem::path& images,
                 const std::filesystem::path& labels) {
  const IdxArray img = read_idx_file(images);
  const IdxArray lab = read_idx_file(labels);
  if (img.dims.size() != 3 && img.dims.size() != 4) {
    throw FormatError("IDX: image file must have 3 or 4 dimensions");
  }
  if (lab.dims.size() != 1) throw FormatError("IDX: label file must have 1 dimension");
  if (img.dims[0] != lab.dims[0]) {
    throw FormatError("IDX: image count does not match label count");
  }
  const bool planar = img.dims.size() == 4;
  const Shape s{static_cast<int>(img.dims[0]), planar ? static_cast<int>(img.dims[1]) : 1,
                static_cast<int>(img.dims[planar ? 2 : 1]),
                static_cast<int>(img.dims[planar ? 3 : 2])};
  std::vector<double> px(img.data.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = img.data[i] / 255.0;
  Dataset ds;
  ds.images = Tensor4(s, std::move(px));
  ds.labels.assign(lab.data.begin(), lab.data.end());
  ds.classes = ds.labels.empty() ? 0 : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  ds.validate();
  return ds;
}

void save_idx(const Dataset& ds, const std::filesystem::path& images,
              const std::filesystem::path& labels) {
  ds.validate();
  const Shape& s = ds.images.shape();
  IdxArray img;
  img.dims = s.c == 1 ? std::vector<std::uint32_t>{static_cast<std::uint32_t>(s.n),
                                                   static_cast<std::uint32_t>(s.h),
                                                   static_cast<std::uint32_t>(s.w)}
                      : std::vector<std::uint32_t>{static_cast<std::uint32_t>(s.n),
                                                   static_cast<std::uint32_t>(s.c),
                                                   static_cast<std::uint32_t>(s.h),
                                                   static_cast<std::uint32_t>(s.w)};
  img.data.resize(ds.images.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    img.data[i] = static_cast<std::uint8_t>(std::lround(ds.images[i] * 255.0));
  }
  IdxArray lab{{static_cast<std::uint32_t>(ds.size())}, {}};
  for (int l : ds.labels) {
    if (l > 255) throw FormatError("IDX: labels above 255 do not fit unsigned bytes");
    lab.data.push_back(static_cast<std::uint8_t>(l));
  }
  write_idx_file(images, img);
  write_idx_file(labels, lab);
}

}  // namespace dropblock::nn
