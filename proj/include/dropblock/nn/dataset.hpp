#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dropblock/tensor.hpp"

namespace dropblock::nn {

struct Dataset {
  Tensor4 images;  ///< (n, c, h, w), values in [0, 1]
  std::vector<int> labels;
  int classes = 0;

  int size() const { return static_cast<int>(labels.size()); }
  /// Throws ShapeError / ParameterError if the invariants do not hold.
  void validate() const;
  /// Gathers the given samples, in order, into a batch.
  Tensor4 gather_images(std::span<const int> indices) const;
  std::vector<int> gather_labels(std::span<const int> indices) const;
};

/// 1x16x16 images. Each carries one bright blob whose quadrant is the class
/// (0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right), on top of
/// smaller bright distractor bumps placed anywhere and low-level noise.
/// Labels are exactly balanced (i mod classes, then shuffled).
/// Requires 2 <= class_count <= 4 and n >= class_count.
Dataset gen_synthetic(std::uint64_t seed, int n, int class_count);

/// Raw IDX array: unsigned-byte payload with big-endian u32 dimensions.
struct IdxArray {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;
  bool operator==(const IdxArray&) const = default;
};

/// Throws FormatError on bad magic, unsupported element type, truncation,
/// trailing bytes or a payload that disagrees with the header.
IdxArray parse_idx(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_idx(const IdxArray& array);

IdxArray read_idx_file(const std::filesystem::path& path);
void write_idx_file(const std::filesystem::path& path, const IdxArray& array);

/// Image file (n, h, w) or (n, c, h, w) scaled by 1/255, plus a label file
/// (n). Class count is max label + 1.
Dataset load_idx(const std::filesystem::path& images,
                 const std::filesystem::path& labels);

/// Inverse of load_idx for datasets whose pixels are multiples of 1/255.
void save_idx(const Dataset& ds, const std::filesystem::path& images,
              const std::filesystem::path& labels);

}  // namespace dropblock::nn
