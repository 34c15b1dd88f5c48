#include "dropblock/mask.hpp"

#include <algorithm>
#include <string>

#include "dropblock/error.hpp"

namespace dropblock {

namespace {

constexpr std::uint64_t kSharedChannelKey = 0xFFFFFFFFull;

void check_geometry(int block_size, int h, int w) {
  if (block_size < 1) throw ParameterError("block_size must be >= 1");
  if (h < 1 || w < 1) throw ShapeError("feature map dimensions must be >= 1");
  if (block_size > std::min(h, w)) {
    throw GeometryError("block_size " + std::to_string(block_size) +
                        " does not fit a " + std::to_string(h) + "x" +
                        std::to_string(w) + " map");
  }
}

}  // namespace

void DropBlockConfig::validate() const {
  if (block_size < 1) throw ParameterError("block_size must be >= 1");
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    throw ParameterError("keep_prob must lie in (0, 1]");
  }
  if (!(gamma_multiplier > 0.0)) {
    throw ParameterError("gamma_multiplier must be > 0");
  }
}

bool MaskBatch::consistent() const {
  return stats == count_and_ones(mask, granularity);
}

double compute_gamma(double keep_prob, int block_size, int h, int w,
                     double gamma_multiplier) {
  DropBlockConfig{block_size, keep_prob, true, gamma_multiplier}.validate();
  check_geometry(block_size, h, w);
  if (keep_prob == 1.0) return 0.0;
  const double bs = block_size;
  const double area = static_cast<double>(h) * w;
  const double valid =
      static_cast<double>(h - block_size + 1) * (w - block_size + 1);
  const double gamma =
      gamma_multiplier * (1.0 - keep_prob) / (bs * bs) * (area / valid);
  return std::clamp(gamma, 0.0, 1.0);
}

SeedRegion valid_seed_region(int block_size, int h, int w) {
  check_geometry(block_size, h, w);
  return SeedRegion{block_before(block_size), h - 1 - block_after(block_size),
                    block_before(block_size), w - 1 - block_after(block_size)};
}

BinaryTensor4 expand_seeds(const BinaryTensor4& seeds, int block_size) {
  const Shape& s = seeds.shape();
  const SeedRegion region = valid_seed_region(block_size, s.h, s.w);
  const int before = block_before(block_size);
  const int after = block_after(block_size);

  BinaryTensor4 keep(s, true);
  std::vector<std::uint8_t> rowpass(s.plane());
  auto in = seeds.values();
  for (std::size_t slice = 0; slice < static_cast<std::size_t>(s.n) * s.c;
       ++slice) {
    const std::size_t base = slice * s.plane();
    for (int r = 0; r < s.h; ++r) {
      for (int c = 0; c < s.w; ++c) {
        if (in[base + r * s.w + c] && !region.contains(r, c)) {
          throw ContractError("seed at (" + std::to_string(r) + "," +
                              std::to_string(c) +
                              ") lies outside the valid seed region");
        }
      }
    }
    // Separable window maximum: a position is hit iff a seed lies in rows
    // [r - after, r + before] and columns [c - after, c + before].
    for (int r = 0; r < s.h; ++r) {
      for (int c = 0; c < s.w; ++c) {
        std::uint8_t hit = 0;
        const int lo = std::max(0, c - after);
        const int hi = std::min(s.w - 1, c + before);
        for (int k = lo; k <= hi && !hit; ++k) hit = in[base + r * s.w + k];
        rowpass[r * s.w + c] = hit;
      }
    }
    for (int r = 0; r < s.h; ++r) {
      const int lo = std::max(0, r - after);
      const int hi = std::min(s.h - 1, r + before);
      for (int c = 0; c < s.w; ++c) {
        std::uint8_t hit = 0;
        for (int k = lo; k <= hi && !hit; ++k) hit = rowpass[k * s.w + c];
        if (hit) keep.set(base + r * s.w + c, false);
      }
    }
  }
  return keep;
}

MaskBatch sample_mask(RngStream& rng, const DropBlockConfig& cfg, int n, int c,
                      int h, int w) {
  cfg.validate();
  validate_shape(Shape{n, c, h, w});
  const double gamma =
      compute_gamma(cfg.keep_prob, cfg.block_size, h, w, cfg.gamma_multiplier);
  const Granularity g =
      cfg.per_channel ? Granularity::PerSampleChannel : Granularity::PerSample;
  const Shape full{n, c, h, w};

  MaskBatch out;
  out.granularity = g;
  if (gamma == 0.0) {
    out.mask = BinaryTensor4(full, true);
    out.stats = count_and_ones(out.mask, g);
    return out;
  }

  const SeedRegion region = valid_seed_region(cfg.block_size, h, w);
  const int mask_channels = cfg.per_channel ? c : 1;
  BinaryTensor4 seeds(Shape{n, mask_channels, h, w}, false);
  for (int s = 0; s < n; ++s) {
    for (int ch = 0; ch < mask_channels; ++ch) {
      RngStream sub = rng.split(static_cast<std::uint64_t>(s),
                                cfg.per_channel ? static_cast<std::uint64_t>(ch)
                                                : kSharedChannelKey);
      for (int r = region.row_lo; r <= region.row_hi; ++r) {
        for (int col = region.col_lo; col <= region.col_hi; ++col) {
          if (sub.next_uniform() < gamma) seeds.set(s, ch, r, col, true);
        }
      }
    }
  }
  rng.advance(1);

  BinaryTensor4 expanded = expand_seeds(seeds, cfg.block_size);
  if (cfg.per_channel) {
    out.mask = std::move(expanded);
  } else {
    std::vector<std::uint8_t> data(full.size());
    const std::size_t plane = full.plane();
    auto src = expanded.values();
    for (int s = 0; s < n; ++s) {
      for (int ch = 0; ch < c; ++ch) {
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(s * plane), plane,
                    data.begin() + static_cast<std::ptrdiff_t>(full.index(s, ch, 0, 0)));
      }
    }
    out.mask = BinaryTensor4(full, std::move(data));
  }
  out.stats = count_and_ones(out.mask, g);
  return out;
}

}  // namespace dropblock
