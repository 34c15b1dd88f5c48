#include "dropblock/tooling/robustness.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>

#include "dropblock/error.hpp"
#include "dropblock/nn/train.hpp"

namespace dropblock::tooling {

std::vector<RobustnessCurve> robustness_sweep(nn::Network& model, const nn::Dataset& data,
                                              const std::vector<SweepGrid>& grids,
                                              std::uint64_t seed, int batch_size) {
  if (grids.empty()) throw ParameterError("robustness_sweep needs at least one grid");
  if (model.spec().placement_ids().empty()) {
    throw ContractError("robustness_sweep needs a model with regularizer placements");
  }
  const RngStream root(seed, 4);
  std::vector<RobustnessCurve> curves;
  for (const SweepGrid& g : grids) {
    std::vector<double> kps = g.keep_probs;
    kps.push_back(1.0);
    std::sort(kps.begin(), kps.end(), std::greater<>());
    kps.erase(std::unique(kps.begin(), kps.end()), kps.end());
    RobustnessCurve curve{g.block_size, g.per_channel, {}};
    for (double kp : kps) {
      const DropBlockConfig cfg{g.block_size, kp, g.per_channel, 1.0};
      cfg.validate();
      std::uint64_t bits = 0;
      std::memcpy(&bits, &kp, sizeof bits);
      RngStream rng = root.split(static_cast<std::uint64_t>(g.block_size) * 2 + (g.per_channel ? 1 : 0),
                                 bits);
      const nn::EvalMetrics m = nn::evaluate(model, data, batch_size, cfg, &rng);
      curve.points.push_back(SweepPoint{kp, m.accuracy});
    }
    curves.push_back(std::move(curve));
  }
  return curves;
}

std::string curves_to_csv(const std::vector<RobustnessCurve>& curves) {
  std::string out = "block_size,per_channel,keep_prob,accuracy\n";
  char buf[96];
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      std::snprintf(buf, sizeof buf, "%d,%d,%.10g,%.10g\n", c.block_size, c.per_channel ? 1 : 0,
                    p.keep_prob, p.accuracy);
      out += buf;
    }
  }
  return out;
}

}  // namespace dropblock::tooling
