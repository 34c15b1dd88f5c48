#pragma once

#include <vector>

#include "dropblock/rng.hpp"
#include "dropblock/tensor.hpp"

namespace dropblock {

struct DropBlockConfig {
  int block_size = 1;
  double keep_prob = 1.0;
  bool per_channel = true;
  /// Scales the seed rate before clamping; 0.25 reproduces the weaker rate
  /// used on higher-resolution groups.
  double gamma_multiplier = 1.0;

  /// Throws ParameterError on out-of-range fields.
  void validate() const;
};

/// Inclusive bounds of admissible seed positions on an h x w map.
struct SeedRegion {
  int row_lo = 0;
  int row_hi = 0;
  int col_lo = 0;
  int col_hi = 0;

  int rows() const { return row_hi - row_lo + 1; }
  int cols() const { return col_hi - col_lo + 1; }
  int size() const { return rows() * cols(); }
  bool contains(int r, int c) const {
    return r >= row_lo && r <= row_hi && c >= col_lo && c <= col_hi;
  }
};

/// Rows [seed - block_before(bs), seed + block_after(bs)] are covered by a
/// seed; odd sizes are centred, even sizes extend one extra cell down/right.
constexpr int block_before(int block_size) { return (block_size - 1) / 2; }
constexpr int block_after(int block_size) { return block_size / 2; }

/// Expanded keep mask (1 = keep) with its normalisation statistics.
struct MaskBatch {
  BinaryTensor4 mask;
  std::vector<SliceCount> stats;
  Granularity granularity = Granularity::PerSampleChannel;

  /// True when `stats` equals count_and_ones(mask, granularity).
  bool consistent() const;
};

/// Seed rate for DropBlock:
///   multiplier * (1 - keep_prob) / bs^2 * (h w) / ((h - bs + 1)(w - bs + 1)),
/// clamped to [0, 1]. Throws GeometryError if bs > min(h, w).
double compute_gamma(double keep_prob, int block_size, int h, int w,
                     double gamma_multiplier = 1.0);

SeedRegion valid_seed_region(int block_size, int h, int w);

/// Turns drop seeds (1 = seed) into a keep mask (1 = keep): a position is
/// dropped iff some seed's block covers it. Seeds outside the valid region
/// raise ContractError.
BinaryTensor4 expand_seeds(const BinaryTensor4& seeds, int block_size);

/// Draws a DropBlock mask for an (n, c, h, w) activation.
///
/// Per-channel mode uses one sub-stream per (sample, channel); shared mode
/// draws one spatial mask per sample and repeats it across channels. Seeds
/// are Bernoulli(gamma) over the valid region in row-major order. The parent
/// stream advances by one draw, or not at all when gamma is zero.
MaskBatch sample_mask(RngStream& rng, const DropBlockConfig& cfg, int n, int c,
                      int h, int w);

}  // namespace dropblock
