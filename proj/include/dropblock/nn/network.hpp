#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dropblock/mask.hpp"
#include "dropblock/nn/layers.hpp"
#include "dropblock/regularizers.hpp"
#include "dropblock/rng.hpp"

namespace dropblock::nn {

enum class RegularizerKind { DropBlock, Dropout, SpatialDropout, DropPath, Cutout };

const char* to_string(RegularizerKind kind);
RegularizerKind regularizer_kind_from(const std::string& name);

/// A regularizer placement. keep_prob is supplied per step by the trainer;
/// block_size, per_channel and gamma_multiplier only matter for DropBlock
/// (block_size also for Cutout).
struct RegularizerSpec {
  RegularizerKind kind = RegularizerKind::DropBlock;
  std::string id;
  int block_size = 1;
  bool per_channel = true;
  double gamma_multiplier = 1.0;
  bool operator==(const RegularizerSpec&) const = default;
};

struct Conv2dSpec {
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int pad = 0;
  bool operator==(const Conv2dSpec&) const = default;
};
struct ReluSpec {
  bool operator==(const ReluSpec&) const = default;
};
struct MaxPoolSpec {
  int size = 2;
  int stride = 2;
  bool operator==(const MaxPoolSpec&) const = default;
};
struct DenseSpec {
  int out_dim = 1;
  bool operator==(const DenseSpec&) const = default;
};
struct ResidualBeginSpec {
  bool operator==(const ResidualBeginSpec&) const = default;
};
/// Adds the input saved by the matching ResidualBeginSpec. An optional
/// regularizer is applied to the skip tensor before the sum.
struct ResidualEndSpec {
  std::optional<RegularizerSpec> skip_regularizer;
  bool operator==(const ResidualEndSpec&) const = default;
};

using LayerSpec = std::variant<Conv2dSpec, ReluSpec, MaxPoolSpec, DenseSpec,
                               RegularizerSpec, ResidualBeginSpec, ResidualEndSpec>;

struct NetworkSpec {
  int input_channels = 1;
  int input_height = 16;
  int input_width = 16;
  std::vector<LayerSpec> layers;

  /// Per-sample output shape after propagating the input through every
  /// layer. Throws ShapeError / GeometryError / ConfigError on bad wiring.
  Shape output_shape() const;
  /// Spec with every regularizer (including skip regularizers) removed.
  NetworkSpec without_regularizers() const;
  std::vector<std::string> placement_ids() const;
  bool operator==(const NetworkSpec&) const = default;
};

/// Per-call settings threaded through the forward pass.
struct ForwardContext {
  Mode mode = Mode::Inference;
  double keep_prob = 1.0;
  RngStream* rng = nullptr;
  /// When set, every regularizer placement runs this DropBlock config in
  /// training mode regardless of `mode` (inference-time robustness probes).
  std::optional<DropBlockConfig> forced_dropblock;
};

class Layer;

/// Sequential network with residual markers. Owns parameters and the
/// activations cached by the last forward pass.
class Network {
 public:
  /// Weights are fan-in scaled uniform, U(-sqrt(6/fan_in), sqrt(6/fan_in)),
  /// drawn from RngStream(init_seed, 1); biases start at zero.
  Network(const NetworkSpec& spec, std::uint64_t init_seed);
  ~Network();
  Network(Network&&) noexcept;
  Network& operator=(Network&&) noexcept;
  Network(const Network&);
  Network& operator=(const Network&);

  const NetworkSpec& spec() const { return spec_; }

  Tensor4 forward(const Tensor4& x, ForwardContext& ctx);
  /// Back-propagates d loss / d output, accumulating parameter gradients
  /// (zeroed first) and returning d loss / d input.
  Tensor4 backward(const Tensor4& grad_out);

  std::vector<Param*> parameters();
  std::vector<const Param*> parameters() const;

 private:
  NetworkSpec spec_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace dropblock::nn
