#pragma once

#include <vector>

#include "dropblock/mask.hpp"
#include "dropblock/rng.hpp"
#include "dropblock/tensor.hpp"

namespace dropblock {

enum class Mode { Train, Inference };

/// Forward result of a masking regularizer. `scale[i]` is the factor applied
/// to the kept elements of slice i at `mask.granularity`.
struct ApplyResult {
  Tensor4 output;
  MaskBatch mask;
  std::vector<double> scale;
  /// Slices in which nothing survived; their output is all zero.
  std::vector<bool> degenerate;
};

/// Applies a realised keep mask and rescales each slice by
/// count / count_ones; slices with no survivors become zero with scale 0.
ApplyResult normalize_with_mask(const Tensor4& x, MaskBatch mask);

/// DropBlock forward pass. Inference returns x bit-exact without touching
/// rng; training samples a mask and hands it to normalize_with_mask.
ApplyResult dropblock_apply(const Tensor4& x, const DropBlockConfig& cfg,
                            Mode mode, RngStream& rng);

/// grad_out * mask * scale, using the mask and scale recorded in forward.
Tensor4 dropblock_grad(const Tensor4& grad_out, const ApplyResult& result);

/// Element-wise dropout with inverted 1/keep_prob scaling.
ApplyResult dropout_apply(const Tensor4& x, double keep_prob, Mode mode,
                          RngStream& rng);

/// Drops whole (sample, channel) planes; survivors scaled by 1/keep_prob.
ApplyResult spatial_dropout_apply(const Tensor4& x, double keep_prob, Mode mode,
                                  RngStream& rng);

/// Keep mask for Cutout: one block_size x block_size hole per image, at the
/// same place in every channel, anchored uniformly over the valid seed
/// region. Advances rng by one draw per image.
BinaryTensor4 cutout_mask(Shape shape, int block_size, RngStream& rng);

/// images * cutout_mask(...). No rescaling.
Tensor4 cutout_apply(const Tensor4& images, int block_size, RngStream& rng);

/// Per-sample branch drop with 1/keep_prob scaling of surviving samples.
/// The mask is recorded at per-sample granularity.
ApplyResult drop_path_masked(const Tensor4& branch, double keep_prob, Mode mode,
                             RngStream& rng);

/// drop_path_masked(...).output
Tensor4 drop_path_apply(const Tensor4& branch, double keep_prob, Mode mode,
                        RngStream& rng);

/// keep_prob ramp from 1 at step_start to keep_prob_target at step_end.
struct LinearSchedule {
  long step_start = 0;
  long step_end = 1;
  double keep_prob_target = 1.0;

  void validate() const;
};

double schedule_at(const LinearSchedule& s, long step);

}  // namespace dropblock
