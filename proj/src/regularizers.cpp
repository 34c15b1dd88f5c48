#include "dropblock/regularizers.hpp"

#include <algorithm>

#include "dropblock/error.hpp"

namespace dropblock {

namespace {

void check_keep_prob(double keep_prob) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    throw ParameterError("keep_prob must lie in (0, 1]");
  }
}

ApplyResult identity_result(const Tensor4& x, Granularity g) {
  ApplyResult r;
  r.output = x;
  r.mask.mask = BinaryTensor4(x.shape(), true);
  r.mask.granularity = g;
  r.mask.stats = count_and_ones(r.mask.mask, g);
  r.scale.assign(r.mask.stats.size(), 1.0);
  r.degenerate.assign(r.mask.stats.size(), false);
  return r;
}

// out[i] = x[i] * mask[i] * scale[slice(i)]
Tensor4 apply_scaled(const Tensor4& x, const BinaryTensor4& mask,
                     const std::vector<double>& scale, std::size_t slice_len) {
  Tensor4 out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = mask[i] ? x[i] * scale[i / slice_len] : 0.0;
  }
  return out;
}

ApplyResult inverted_result(const Tensor4& x, MaskBatch mask, double keep_prob) {
  ApplyResult r;
  r.mask = std::move(mask);
  r.scale.assign(r.mask.stats.size(), 1.0 / keep_prob);
  r.degenerate.resize(r.mask.stats.size());
  for (std::size_t i = 0; i < r.mask.stats.size(); ++i) {
    r.degenerate[i] = r.mask.stats[i].count_ones == 0;
  }
  r.output = apply_scaled(x, r.mask.mask, r.scale,
                          slice_length(x.shape(), r.mask.granularity));
  return r;
}

}  // namespace

ApplyResult normalize_with_mask(const Tensor4& x, MaskBatch mask) {
  if (mask.mask.shape() != x.shape()) {
    throw ShapeError("mask shape " + mask.mask.shape().str() + " does not match input " +
                     x.shape().str());
  }
  if (!mask.consistent()) throw ContractError("mask statistics do not match the mask");
  ApplyResult r;
  r.mask = std::move(mask);
  const auto& stats = r.mask.stats;
  r.scale.resize(stats.size());
  r.degenerate.resize(stats.size());
  for (std::size_t i = 0; i < stats.size(); ++i) {
    r.degenerate[i] = stats[i].count_ones == 0;
    r.scale[i] = r.degenerate[i] ? 0.0
                                 : static_cast<double>(stats[i].count) /
                                       static_cast<double>(stats[i].count_ones);
  }
  r.output = apply_scaled(x, r.mask.mask, r.scale, slice_length(x.shape(), r.mask.granularity));
  return r;
}

ApplyResult dropblock_apply(const Tensor4& x, const DropBlockConfig& cfg,
                            Mode mode, RngStream& rng) {
  cfg.validate();
  const Shape& s = x.shape();
  // Geometry is checked in both modes so a misplaced layer fails early.
  (void)compute_gamma(cfg.keep_prob, cfg.block_size, s.h, s.w,
                      cfg.gamma_multiplier);
  const Granularity g =
      cfg.per_channel ? Granularity::PerSampleChannel : Granularity::PerSample;
  if (mode == Mode::Inference || cfg.keep_prob == 1.0) {
    return identity_result(x, g);
  }

  return normalize_with_mask(x, sample_mask(rng, cfg, s.n, s.c, s.h, s.w));
}

Tensor4 dropblock_grad(const Tensor4& grad_out, const ApplyResult& result) {
  if (grad_out.shape() != result.mask.mask.shape()) {
    throw ShapeError("dropblock_grad: gradient shape " + grad_out.shape().str() +
                     " does not match mask " + result.mask.mask.shape().str());
  }
  return apply_scaled(grad_out, result.mask.mask, result.scale,
                      slice_length(grad_out.shape(), result.mask.granularity));
}

ApplyResult dropout_apply(const Tensor4& x, double keep_prob, Mode mode,
                          RngStream& rng) {
  check_keep_prob(keep_prob);
  const Granularity g = Granularity::PerSampleChannel;
  if (mode == Mode::Inference || keep_prob == 1.0) return identity_result(x, g);
  MaskBatch m;
  m.granularity = g;
  m.mask = bernoulli(rng, x.shape(), keep_prob);
  m.stats = count_and_ones(m.mask, g);
  return inverted_result(x, std::move(m), keep_prob);
}

ApplyResult spatial_dropout_apply(const Tensor4& x, double keep_prob, Mode mode,
                                  RngStream& rng) {
  check_keep_prob(keep_prob);
  const Granularity g = Granularity::PerSampleChannel;
  if (mode == Mode::Inference || keep_prob == 1.0) return identity_result(x, g);
  const Shape& s = x.shape();
  const BinaryTensor4 planes = bernoulli(rng, Shape{s.n, s.c, 1, 1}, keep_prob);
  std::vector<std::uint8_t> data(s.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = planes[i / s.plane()];
  MaskBatch m;
  m.granularity = g;
  m.mask = BinaryTensor4(s, std::move(data));
  m.stats = count_and_ones(m.mask, g);
  return inverted_result(x, std::move(m), keep_prob);
}

BinaryTensor4 cutout_mask(Shape shape, int block_size, RngStream& rng) {
  validate_shape(shape);
  const SeedRegion region = valid_seed_region(block_size, shape.h, shape.w);
  BinaryTensor4 keep(shape, true);
  for (int n = 0; n < shape.n; ++n) {
    const auto pick = rng.next_below(static_cast<std::uint64_t>(region.size()));
    const int row = region.row_lo + static_cast<int>(pick) / region.cols();
    const int col = region.col_lo + static_cast<int>(pick) % region.cols();
    for (int c = 0; c < shape.c; ++c) {
      for (int r = row - block_before(block_size);
           r <= row + block_after(block_size); ++r) {
        for (int k = col - block_before(block_size);
             k <= col + block_after(block_size); ++k) {
          keep.set(n, c, r, k, false);
        }
      }
    }
  }
  return keep;
}

Tensor4 cutout_apply(const Tensor4& images, int block_size, RngStream& rng) {
  return elementwise_mul(images, cutout_mask(images.shape(), block_size, rng));
}

ApplyResult drop_path_masked(const Tensor4& branch, double keep_prob, Mode mode,
                             RngStream& rng) {
  check_keep_prob(keep_prob);
  const Granularity g = Granularity::PerSample;
  if (mode == Mode::Inference || keep_prob == 1.0) {
    return identity_result(branch, g);
  }
  const Shape& s = branch.shape();
  const BinaryTensor4 keep = bernoulli(rng, Shape{s.n, 1, 1, 1}, keep_prob);
  std::vector<std::uint8_t> data(s.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = keep[i / s.sample()];
  MaskBatch m;
  m.granularity = g;
  m.mask = BinaryTensor4(s, std::move(data));
  m.stats = count_and_ones(m.mask, g);
  return inverted_result(branch, std::move(m), keep_prob);
}

Tensor4 drop_path_apply(const Tensor4& branch, double keep_prob, Mode mode,
                        RngStream& rng) {
  return drop_path_masked(branch, keep_prob, mode, rng).output;
}

void LinearSchedule::validate() const {
  if (step_start < 0) throw ParameterError("schedule step_start must be >= 0");
  if (step_end <= step_start) {
    throw ParameterError("schedule step_end must exceed step_start");
  }
  if (!(keep_prob_target > 0.0 && keep_prob_target <= 1.0)) {
    throw ParameterError("schedule keep_prob_target must lie in (0, 1]");
  }
}

double schedule_at(const LinearSchedule& s, long step) {
  if (step <= s.step_start) return 1.0;
  if (step >= s.step_end) return s.keep_prob_target;
  // Written as target + remaining fraction so rounding never dips below the
  // target.
  const double remaining = static_cast<double>(s.step_end - step) /
                           static_cast<double>(s.step_end - s.step_start);
  return std::min(1.0, s.keep_prob_target + (1.0 - s.keep_prob_target) * remaining);
}

}  // namespace dropblock
