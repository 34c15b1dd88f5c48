#include <doctest.h>

#include <cmath>

#include "dropblock/error.hpp"
#include "dropblock/nn/dataset.hpp"
#include "dropblock/nn/network.hpp"
#include "dropblock/nn/train.hpp"

using namespace dropblock;
using namespace dropblock::nn;

namespace {

Tensor4 noise(Shape s, std::uint64_t seed) {
  RngStream rng(seed, 7);
  Tensor4 t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.next_uniform();
  return t;
}

RegularizerSpec reg(RegularizerKind kind, std::string id, int bs = 1) {
  RegularizerSpec r;
  r.kind = kind;
  r.id = std::move(id);
  r.block_size = bs;
  return r;
}

NetworkSpec small_net() {
  NetworkSpec s;
  s.input_channels = 1;
  s.input_height = 16;
  s.input_width = 16;
  s.layers = {Conv2dSpec{4, 3, 1, 1}, ReluSpec{},
              reg(RegularizerKind::DropBlock, "db1", 3), MaxPoolSpec{2, 2},
              Conv2dSpec{8, 3, 1, 1}, ReluSpec{},
              reg(RegularizerKind::DropBlock, "db2", 3), MaxPoolSpec{2, 2},
              DenseSpec{4}};
  return s;
}

TrainConfig quick(double kp) {
  TrainConfig t;
  t.epochs = 3;
  t.batch_size = 16;
  t.learning_rate = 0.02;
  t.seed = 4;
  t.keep_prob_target = kp;
  return t;
}

}  // namespace

TEST_CASE("shape propagation and placement ids") {
  const NetworkSpec s = small_net();
  CHECK(s.output_shape() == Shape{1, 4, 1, 1});
  CHECK(s.placement_ids() == std::vector<std::string>{"db1", "db2"});
  const NetworkSpec plain = s.without_regularizers();
  CHECK(plain.layers.size() == s.layers.size() - 2);
  CHECK(plain.placement_ids().empty());
  CHECK(plain.output_shape() == s.output_shape());
}

TEST_CASE("bad wiring is rejected") {
  NetworkSpec dup = small_net();
  std::get<RegularizerSpec>(dup.layers[6]).id = "db1";
  CHECK_THROWS_AS(dup.output_shape(), ConfigError);

  NetworkSpec big = small_net();
  std::get<RegularizerSpec>(big.layers[6]).block_size = 9;
  CHECK_THROWS_AS(big.output_shape(), GeometryError);

  NetworkSpec late_cutout = small_net();
  late_cutout.layers.insert(late_cutout.layers.begin() + 1,
                            reg(RegularizerKind::Cutout, "cut", 4));
  CHECK_THROWS_AS(late_cutout.output_shape(), ConfigError);

  NetworkSpec first_cutout = small_net();
  first_cutout.layers.insert(first_cutout.layers.begin(), reg(RegularizerKind::Cutout, "cut", 4));
  CHECK(first_cutout.output_shape() == Shape{1, 4, 1, 1});

  NetworkSpec open = small_net();
  open.layers.insert(open.layers.begin(), ResidualBeginSpec{});
  CHECK_THROWS_AS(open.output_shape(), ConfigError);

  NetworkSpec mismatch;
  mismatch.input_channels = 1;
  mismatch.layers = {ResidualBeginSpec{}, Conv2dSpec{2, 3, 1, 1}, ResidualEndSpec{}};
  CHECK_THROWS(mismatch.output_shape());
}

TEST_CASE("residual output is branch plus skip") {
  NetworkSpec branch;
  branch.input_channels = 2;
  branch.input_height = 6;
  branch.input_width = 6;
  branch.layers = {Conv2dSpec{2, 3, 1, 1}};
  NetworkSpec res = branch;
  res.layers = {ResidualBeginSpec{}, Conv2dSpec{2, 3, 1, 1}, ResidualEndSpec{}};

  Network a(branch, 9), b(res, 9);
  const Tensor4 x = noise({3, 2, 6, 6}, 1);
  ForwardContext ctx;
  const Tensor4 ya = a.forward(x, ctx);
  const Tensor4 yb = b.forward(x, ctx);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(yb[i] == doctest::Approx(ya[i] + x[i]));

  // Gradient through the sum reaches the input along both paths.
  const Tensor4 ga = a.backward(tensor_full(ya.shape(), 1.0));
  const Tensor4 gb = b.backward(tensor_full(yb.shape(), 1.0));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(gb[i] == doctest::Approx(ga[i] + 1.0));
}

TEST_CASE("skip regularizer drops the skip path per sample") {
  NetworkSpec res;
  res.input_channels = 1;
  res.input_height = 4;
  res.input_width = 4;
  ResidualEndSpec end;
  end.skip_regularizer = reg(RegularizerKind::DropPath, "skip");
  res.layers = {ResidualBeginSpec{}, Conv2dSpec{1, 3, 1, 1}, end};
  CHECK(res.placement_ids() == std::vector<std::string>{"skip"});
  NetworkSpec branch = res;
  branch.layers = {Conv2dSpec{1, 3, 1, 1}};

  Network a(branch, 2), b(res, 2);
  const Tensor4 x = noise({200, 1, 4, 4}, 3);
  ForwardContext infer;
  const Tensor4 ya = a.forward(x, infer);
  RngStream rng(5);
  ForwardContext trainctx{Mode::Train, 0.5, &rng, std::nullopt};
  const Tensor4 yb = b.forward(x, trainctx);
  int dropped = 0;
  for (int n = 0; n < 200; ++n) {
    const std::size_t base = static_cast<std::size_t>(n) * 16;
    const bool kept = std::abs(yb[base] - ya[base] - 2.0 * x[base]) < 1e-12;
    dropped += !kept;
    for (std::size_t i = 0; i < 16; ++i) {
      const double skip = kept ? 2.0 * x[base + i] : 0.0;
      CHECK(yb[base + i] == doctest::Approx(ya[base + i] + skip));
    }
  }
  CHECK(dropped > 60);
  CHECK(dropped < 140);
}

TEST_CASE("keep_prob 1 training matches the regularizer-free network exactly") {
  const Dataset tr = gen_synthetic(1, 96, 4);
  const Dataset va = gen_synthetic(2, 64, 4);
  const NetworkSpec spec = small_net();
  const TrainReport with = train(spec, tr, va, quick(1.0));
  const TrainReport without = train(spec.without_regularizers(), tr, va, quick(1.0));
  CHECK(with.to_csv() == without.to_csv());
  CHECK(with.epochs == without.epochs);
}

TEST_CASE("training is deterministic and records the schedule") {
  const Dataset tr = gen_synthetic(1, 96, 4);
  const Dataset va = gen_synthetic(2, 64, 4);
  const TrainReport a = train(small_net(), tr, va, quick(0.8));
  const TrainReport b = train(small_net(), tr, va, quick(0.8));
  CHECK(a.to_csv() == b.to_csv());
  REQUIRE(a.epochs.size() == 3);
  CHECK(a.epochs.back().keep_prob == 0.8);
  CHECK(a.epochs.front().keep_prob < 1.0);
  CHECK(a.epochs.front().keep_prob > 0.8);
  for (const auto& e : a.epochs) {
    CHECK(std::isfinite(e.train_loss));
    CHECK(e.val_accuracy >= 0.0);
    CHECK(e.val_accuracy <= 1.0);
  }
  TrainConfig other = quick(0.8);
  other.seed = 5;
  CHECK(train(small_net(), tr, va, other).to_csv() != a.to_csv());

  const std::string csv = a.to_csv();
  CHECK(csv.rfind("epoch,train_loss,train_accuracy,val_loss,val_accuracy,keep_prob\n", 0) == 0);
  CHECK(a.to_json().find("wall_clock_seconds") != std::string::npos);
}

TEST_CASE("keep_prob policy") {
  TrainConfig t;
  t.keep_prob_target = 0.9;
  CHECK(t.keep_prob_at(0, 100) == 1.0);
  CHECK(t.keep_prob_at(50, 100) == doctest::Approx(0.95));
  CHECK(t.keep_prob_at(100, 100) == 0.9);
  t.schedule_end = 10;
  CHECK(t.keep_prob_at(10, 100) == 0.9);
  t.policy = KeepProbPolicy::Fixed;
  CHECK(t.keep_prob_at(0, 100) == 0.9);
  TrainConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS(bad.validate());
  bad = TrainConfig{};
  bad.keep_prob_target = 0.0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("forced DropBlock perturbs inference only at placements") {
  Network net(small_net(), 3);
  const Tensor4 x = noise({8, 1, 16, 16}, 2);
  ForwardContext plain;
  const Tensor4 y0 = net.forward(x, plain);
  RngStream rng(1);
  ForwardContext same{Mode::Inference, 1.0, &rng, DropBlockConfig{3, 1.0, true, 1.0}};
  const Tensor4 y1 = net.forward(x, same);
  for (std::size_t i = 0; i < y0.size(); ++i) CHECK(y1[i] == y0[i]);
  CHECK(rng.counter() == 0);
  ForwardContext probe{Mode::Inference, 1.0, &rng, DropBlockConfig{3, 0.6, true, 1.0}};
  const Tensor4 y2 = net.forward(x, probe);
  bool differs = false;
  for (std::size_t i = 0; i < y0.size(); ++i) differs |= y2[i] != y0[i];
  CHECK(differs);
}

TEST_CASE("copies are independent") {
  Network a(small_net(), 3);
  Network b = a;
  b.parameters()[0]->value[0] += 1.0;
  CHECK(a.parameters()[0]->value[0] != b.parameters()[0]->value[0]);
  CHECK(a.parameters().size() == 6);
}

TEST_CASE("divergence is reported") {
  const Dataset tr = gen_synthetic(1, 64, 4);
  TrainConfig t = quick(1.0);
  t.learning_rate = 1e250;
  t.momentum = 0.0;
  t.weight_decay = 0.0;
  CHECK_THROWS_AS(train(small_net(), tr, tr, t), DivergenceError);
}
