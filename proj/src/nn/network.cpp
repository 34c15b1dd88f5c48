#include "dropblock/nn/network.hpp"

#include <cmath>
#include <set>

#include "dropblock/error.hpp"

namespace dropblock::nn {

const char* to_string(RegularizerKind kind) {
  switch (kind) {
    case RegularizerKind::DropBlock:
      return "dropblock";
    case RegularizerKind::Dropout:
      return "dropout";
    case RegularizerKind::SpatialDropout:
      return "spatial_dropout";
    case RegularizerKind::DropPath:
      return "drop_path";
    case RegularizerKind::Cutout:
      return "cutout";
  }
  return "unknown";
}

RegularizerKind regularizer_kind_from(const std::string& name) {
  for (auto k : {RegularizerKind::DropBlock, RegularizerKind::Dropout,
                 RegularizerKind::SpatialDropout, RegularizerKind::DropPath,
                 RegularizerKind::Cutout}) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError("unknown regularizer kind '" + name + "'");
}

namespace {

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

void check_regularizer(const RegularizerSpec& r, const Shape& s, bool first,
                       std::set<std::string>& ids) {
  if (r.id.empty()) throw ConfigError("regularizer placement needs an id");
  if (!ids.insert(r.id).second) {
    throw ConfigError("duplicate regularizer placement id '" + r.id + "'");
  }
  switch (r.kind) {
    case RegularizerKind::DropBlock:
      DropBlockConfig{r.block_size, 1.0, r.per_channel, r.gamma_multiplier}.validate();
      (void)valid_seed_region(r.block_size, s.h, s.w);
      break;
    case RegularizerKind::Cutout:
      if (!first) {
        throw ConfigError("cutout '" + r.id + "' must be the first layer");
      }
      (void)valid_seed_region(r.block_size, s.h, s.w);
      break;
    default:
      break;
  }
}

}  // namespace

Shape NetworkSpec::output_shape() const {
  Shape s{1, input_channels, input_height, input_width};
  validate_shape(s);
  std::vector<Shape> skips;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const bool first = i == 0;
    std::visit(
        Overloaded{
            [&](const Conv2dSpec& c) {
              if (c.out_channels < 1 || c.kernel < 1 || c.stride < 1 || c.pad < 0) {
                throw ConfigError("conv2d needs out, kernel, stride >= 1 and pad >= 0");
              }
              if (s.h + 2 * c.pad < c.kernel || s.w + 2 * c.pad < c.kernel) {
                throw ShapeError("conv2d kernel does not fit a " + s.str() + " input");
              }
              s = Shape{1, c.out_channels,
                        conv_output_extent(s.h, c.kernel, c.stride, c.pad),
                        conv_output_extent(s.w, c.kernel, c.stride, c.pad)};
            },
            [&](const ReluSpec&) {},
            [&](const MaxPoolSpec& m) {
              if (m.size < 1 || m.stride < 1) throw ConfigError("maxpool needs size, stride >= 1");
              if (m.size > s.h || m.size > s.w) {
                throw ShapeError("maxpool window does not fit a " + s.str() + " input");
              }
              s = Shape{1, s.c, (s.h - m.size) / m.stride + 1,
                        (s.w - m.size) / m.stride + 1};
            },
            [&](const DenseSpec& d) {
              if (d.out_dim < 1) throw ConfigError("dense needs out >= 1");
              s = Shape{1, d.out_dim, 1, 1};
            },
            [&](const RegularizerSpec& r) { check_regularizer(r, s, first, ids); },
            [&](const ResidualBeginSpec&) { skips.push_back(s); },
            [&](const ResidualEndSpec& e) {
              if (skips.empty()) throw ConfigError("residual_end without residual_begin");
              if (skips.back() != s) {
                throw ShapeError("residual branch output " + s.str() +
                                 " does not match skip input " + skips.back().str());
              }
              if (e.skip_regularizer) {
                if (e.skip_regularizer->kind == RegularizerKind::Cutout) {
                  throw ConfigError("cutout cannot regularize a skip connection");
                }
                check_regularizer(*e.skip_regularizer, s, false, ids);
              }
              skips.pop_back();
            },
        },
        layers[i]);
  }
  if (!skips.empty()) throw ConfigError("unterminated residual_begin");
  return s;
}

NetworkSpec NetworkSpec::without_regularizers() const {
  NetworkSpec out = *this;
  out.layers.clear();
  for (const auto& l : layers) {
    if (std::holds_alternative<RegularizerSpec>(l)) continue;
    if (const auto* e = std::get_if<ResidualEndSpec>(&l)) {
      out.layers.emplace_back(ResidualEndSpec{});
      (void)e;
      continue;
    }
    out.layers.push_back(l);
  }
  return out;
}

std::vector<std::string> NetworkSpec::placement_ids() const {
  std::vector<std::string> ids;
  for (const auto& l : layers) {
    if (const auto* r = std::get_if<RegularizerSpec>(&l)) ids.push_back(r->id);
    if (const auto* e = std::get_if<ResidualEndSpec>(&l)) {
      if (e->skip_regularizer) ids.push_back(e->skip_regularizer->id);
    }
  }
  return ids;
}

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::unique_ptr<Layer> clone() const = 0;
  virtual Tensor4 forward(const Tensor4& x, ForwardContext& ctx) = 0;
  virtual Tensor4 backward(const Tensor4& grad) = 0;
  virtual std::vector<Param*> params() { return {}; }
};

namespace {

Tensor4 init_uniform(Shape shape, std::size_t fan_in, RngStream& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Tensor4 t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = (2.0 * rng.next_uniform() - 1.0) * bound;
  }
  return t;
}

class ConvLayer final : public Layer {
 public:
  ConvLayer(const Conv2dSpec& spec, int in_channels, RngStream& rng)
      : spec_(spec),
        weights_(init_uniform(Shape{spec.out_channels, in_channels, spec.kernel, spec.kernel},
                              static_cast<std::size_t>(in_channels) * spec.kernel * spec.kernel,
                              rng)),
        bias_(Tensor4(Shape{1, spec.out_channels, 1, 1})) {}
  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<ConvLayer>(*this);
  }
  Tensor4 forward(const Tensor4& x, ForwardContext&) override {
    input_ = x;
    return conv2d_forward(x, weights_.value, bias_.value, spec_.stride, spec_.pad);
  }
  Tensor4 backward(const Tensor4& grad) override {
    Conv2dGrads g = conv2d_backward(input_, weights_.value, grad, spec_.stride, spec_.pad);
    weights_.grad = std::move(g.weights);
    bias_.grad = std::move(g.bias);
    return std::move(g.input);
  }
  std::vector<Param*> params() override { return {&weights_, &bias_}; }

 private:
  Conv2dSpec spec_;
  Param weights_;
  Param bias_;
  Tensor4 input_;
};

class ReluLayer final : public Layer {
 public:
  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<ReluLayer>(*this);
  }
  Tensor4 forward(const Tensor4& x, ForwardContext&) override {
    input_ = x;
    return relu_forward(x);
  }
  Tensor4 backward(const Tensor4& grad) override { return relu_backward(input_, grad); }

 private:
  Tensor4 input_;
};

class MaxPoolLayer final : public Layer {
 public:
  explicit MaxPoolLayer(const MaxPoolSpec& spec) : spec_(spec) {}
  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<MaxPoolLayer>(*this);
  }
  Tensor4 forward(const Tensor4& x, ForwardContext&) override {
    input_shape_ = x.shape();
    MaxPoolResult r = maxpool_forward(x, spec_.size, spec_.stride);
    argmax_ = std::move(r.argmax);
    return std::move(r.output);
  }
  Tensor4 backward(const Tensor4& grad) override {
    return maxpool_backward(input_shape_, argmax_, grad);
  }

 private:
  MaxPoolSpec spec_;
  Shape input_shape_{};
  std::vector<std::size_t> argmax_;
};

class DenseLayer final : public Layer {
 public:
  DenseLayer(const DenseSpec& spec, std::size_t in_dim, RngStream& rng)
      : weights_(init_uniform(Shape{spec.out_dim, static_cast<int>(in_dim), 1, 1},
                              in_dim, rng)),
        bias_(Tensor4(Shape{1, spec.out_dim, 1, 1})) {}
  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<DenseLayer>(*this);
  }
  Tensor4 forward(const Tensor4& x, ForwardContext&) override {
    input_ = x;
    return dense_forward(x, weights_.value, bias_.value);
  }
  Tensor4 backward(const Tensor4& grad) override {
    DenseGrads g = dense_backward(input_, weights_.value, grad);
    weights_.grad = std::move(g.weights);
    bias_.grad = std::move(g.bias);
    return std::move(g.input);
  }
  std::vector<Param*> params() override { return {&weights_, &bias_}; }

 private:
  Param weights_;
  Param bias_;
  Tensor4 input_;
};

class RegularizerLayer final : public Layer {
 public:
  explicit RegularizerLayer(const RegularizerSpec& spec) : spec_(spec) {}
  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<RegularizerLayer>(*this);
  }
  Tensor4 forward(const Tensor4& x, ForwardContext& ctx) override {
    RngStream idle(0);
    RngStream& rng = ctx.rng ? *ctx.rng : idle;
    const bool train = ctx.mode == Mode::Train;
    if (ctx.forced_dropblock && spec_.kind != RegularizerKind::Cutout) {
      result_ = dropblock_apply(x, *ctx.forced_dropblock, Mode::Train, rng);
    } else {
      switch (spec_.kind) {
        case RegularizerKind::DropBlock:
          result_ = dropblock_apply(
              x, DropBlockConfig{spec_.block_size, ctx.keep_prob, spec_.per_channel,
                                 spec_.gamma_multiplier},
              ctx.mode, rng);
          break;
        case RegularizerKind::Dropout:
          result_ = dropout_apply(x, ctx.keep_prob, ctx.mode, rng);
          break;
        case RegularizerKind::SpatialDropout:
          result_ = spatial_dropout_apply(x, ctx.keep_prob, ctx.mode, rng);
          break;
        case RegularizerKind::DropPath:
          result_ = drop_path_masked(x, ctx.keep_prob, ctx.mode, rng);
          break;
        case RegularizerKind::Cutout:
          result_ = cutout_result(x, train, rng);
          break;
      }
    }
    return result_.output;
  }
  Tensor4 backward(const Tensor4& grad) override { return dropblock_grad(grad, result_); }

 private:
  ApplyResult cutout_result(const Tensor4& x, bool train, RngStream& rng) const {
    ApplyResult r;
    r.mask.granularity = Granularity::PerSample;
    r.mask.mask = train ? cutout_mask(x.shape(), spec_.block_size, rng)
                        : BinaryTensor4(x.shape(), true);
    r.mask.stats = count_and_ones(r.mask.mask, r.mask.granularity);
    r.scale.assign(r.mask.stats.size(), 1.0);
    r.degenerate.assign(r.mask.stats.size(), false);
    r.output = train ? elementwise_mul(x, r.mask.mask) : x;
    return r;
  }

  RegularizerSpec spec_;
  ApplyResult result_;
};

class ResidualBeginLayer final : public Layer {
 public:
  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<ResidualBeginLayer>(*this);
  }
  Tensor4 forward(const Tensor4& x, ForwardContext&) override { return x; }
  Tensor4 backward(const Tensor4& grad) override { return grad; }
};

class ResidualEndLayer final : public Layer {
 public:
  explicit ResidualEndLayer(const ResidualEndSpec& spec) {
    if (spec.skip_regularizer) skip_ = std::make_unique<RegularizerLayer>(*spec.skip_regularizer);
  }
  ResidualEndLayer(const ResidualEndLayer& other)
      : skip_(other.skip_ ? std::make_unique<RegularizerLayer>(*other.skip_) : nullptr) {}
  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<ResidualEndLayer>(*this);
  }
  Tensor4 forward(const Tensor4& x, ForwardContext&) override { return x; }
  Tensor4 backward(const Tensor4& grad) override { return grad; }

  Tensor4 combine(const Tensor4& branch, const Tensor4& skip, ForwardContext& ctx) {
    Tensor4 out = skip_ ? skip_->forward(skip, ctx) : skip;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += branch[i];
    return out;
  }
  Tensor4 skip_gradient(const Tensor4& grad) {
    return skip_ ? skip_->backward(grad) : grad;
  }

 private:
  std::unique_ptr<RegularizerLayer> skip_;
};

}  // namespace

Network::Network(const NetworkSpec& spec, std::uint64_t init_seed) : spec_(spec) {
  (void)spec_.output_shape();
  RngStream rng(init_seed, 1);
  Shape s{1, spec.input_channels, spec.input_height, spec.input_width};
  for (const auto& l : spec.layers) {
    std::visit(
        Overloaded{
            [&](const Conv2dSpec& c) {
              layers_.push_back(std::make_unique<ConvLayer>(c, s.c, rng));
              s = Shape{1, c.out_channels, conv_output_extent(s.h, c.kernel, c.stride, c.pad),
                        conv_output_extent(s.w, c.kernel, c.stride, c.pad)};
            },
            [&](const ReluSpec&) { layers_.push_back(std::make_unique<ReluLayer>()); },
            [&](const MaxPoolSpec& m) {
              layers_.push_back(std::make_unique<MaxPoolLayer>(m));
              s = Shape{1, s.c, (s.h - m.size) / m.stride + 1, (s.w - m.size) / m.stride + 1};
            },
            [&](const DenseSpec& d) {
              layers_.push_back(std::make_unique<DenseLayer>(d, s.sample(), rng));
              s = Shape{1, d.out_dim, 1, 1};
            },
            [&](const RegularizerSpec& r) {
              layers_.push_back(std::make_unique<RegularizerLayer>(r));
            },
            [&](const ResidualBeginSpec&) {
              layers_.push_back(std::make_unique<ResidualBeginLayer>());
            },
            [&](const ResidualEndSpec& e) {
              layers_.push_back(std::make_unique<ResidualEndLayer>(e));
            },
        },
        l);
  }
}

Network::~Network() = default;
Network::Network(Network&&) noexcept = default;
Network& Network::operator=(Network&&) noexcept = default;

Network::Network(const Network& other) : spec_(other.spec_) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Network& Network::operator=(const Network& other) {
  if (this != &other) *this = Network(other);
  return *this;
}

Tensor4 Network::forward(const Tensor4& x, ForwardContext& ctx) {
  const Shape& s = x.shape();
  if (s.c != spec_.input_channels || s.h != spec_.input_height ||
      s.w != spec_.input_width) {
    throw ShapeError("network input " + s.str() + " does not match spec");
  }
  std::vector<Tensor4> skips;
  Tensor4 cur = x;
  for (auto& layer : layers_) {
    if (dynamic_cast<ResidualBeginLayer*>(layer.get())) {
      skips.push_back(cur);
    } else if (auto* end = dynamic_cast<ResidualEndLayer*>(layer.get())) {
      cur = end->combine(cur, skips.back(), ctx);
      skips.pop_back();
    } else {
      cur = layer->forward(cur, ctx);
    }
  }
  return cur;
}

Tensor4 Network::backward(const Tensor4& grad_out) {
  for (Param* p : parameters()) p->grad = Tensor4(p->value.shape());
  std::vector<Tensor4> skip_grads;
  Tensor4 g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    if (auto* end = dynamic_cast<ResidualEndLayer*>(it->get())) {
      skip_grads.push_back(end->skip_gradient(g));
    } else if (dynamic_cast<ResidualBeginLayer*>(it->get())) {
      const Tensor4& sg = skip_grads.back();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sg[i];
      skip_grads.pop_back();
    } else {
      g = (*it)->backward(g);
    }
  }
  return g;
}

std::vector<Param*> Network::parameters() {
  std::vector<Param*> out;
  for (auto& l : layers_) {
    for (Param* p : l->params()) out.push_back(p);
  }
  return out;
}

std::vector<const Param*> Network::parameters() const {
  std::vector<const Param*> out;
  for (const auto& l : layers_) {
    for (Param* p : l->params()) out.push_back(p);
  }
  return out;
}

}  // namespace dropblock::nn
