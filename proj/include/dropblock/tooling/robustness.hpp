#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dropblock/nn/dataset.hpp"
#include "dropblock/nn/network.hpp"

namespace dropblock::tooling {

/// One inference-time probe: DropBlock at this block_size for each keep_prob.
struct SweepGrid {
  int block_size = 1;
  std::vector<double> keep_probs;
  bool per_channel = true;
};

struct SweepPoint {
  double keep_prob = 1.0;
  double accuracy = 0.0;
};

struct RobustnessCurve {
  int block_size = 1;
  bool per_channel = true;
  /// Sorted by decreasing keep_prob; always starts with keep_prob = 1.
  std::vector<SweepPoint> points;
};

/// Evaluates `model` on `data` with DropBlock forced on at every regularizer
/// placement. Each grid point draws from its own stream derived from
/// `seed`, so results do not depend on grid order. Throws ContractError if
/// the model has no regularizer placements.
std::vector<RobustnessCurve> robustness_sweep(nn::Network& model, const nn::Dataset& data,
                                              const std::vector<SweepGrid>& grids,
                                              std::uint64_t seed, int batch_size = 256);

/// `block_size,per_channel,keep_prob,accuracy` rows.
std::string curves_to_csv(const std::vector<RobustnessCurve>& curves);

}  // namespace dropblock::tooling
