#include "dropblock/nn/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "dropblock/error.hpp"

namespace dropblock::nn {

void TrainConfig::validate() const {
  if (epochs < 1) throw ParameterError("epochs must be >= 1");
  if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ParameterError("weight_decay must be >= 0");
  if (!(keep_prob_target > 0.0 && keep_prob_target <= 1.0)) {
    throw ParameterError("keep_prob must lie in (0, 1]");
  }
  if (schedule_start < 0) throw ParameterError("schedule_start must be >= 0");
}

LinearSchedule TrainConfig::schedule_for(long total_steps) const {
  LinearSchedule s{schedule_start, schedule_end.value_or(total_steps), keep_prob_target};
  s.validate();
  return s;
}

double TrainConfig::keep_prob_at(long step, long total_steps) const {
  if (policy == KeepProbPolicy::Fixed) return keep_prob_target;
  return schedule_at(schedule_for(total_steps), step);
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::string TrainReport::to_csv() const {
  std::string out = "epoch,train_loss,train_accuracy,val_loss,val_accuracy,keep_prob\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch) + "," + format_double(e.train_loss) + "," +
           format_double(e.train_accuracy) + "," + format_double(e.val_loss) + "," +
           format_double(e.val_accuracy) + "," + format_double(e.keep_prob) + "\n";
  }
  return out;
}

std::string TrainReport::to_json() const {
  nlohmann::json j;
  j["epochs"] = epochs.size();
  if (!epochs.empty()) {
    const auto& f = final();
    j["final"] = {{"train_loss", f.train_loss},
                  {"train_accuracy", f.train_accuracy},
                  {"val_loss", f.val_loss},
                  {"val_accuracy", f.val_accuracy},
                  {"generalization_gap", final_gap()}};
  }
  auto trace = nlohmann::json::array();
  for (const auto& e : epochs) trace.push_back(e.keep_prob);
  j["keep_prob_trace"] = trace;
  j["wall_clock_seconds"] = wall_clock_seconds;
  return j.dump(2) + "\n";
}

EvalMetrics evaluate(Network& net, const Dataset& data, int batch_size,
                     const std::optional<DropBlockConfig>& forced, RngStream* rng) {
  if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
  if (forced && !rng) throw ContractError("forced DropBlock evaluation needs an rng");
  ForwardContext ctx{Mode::Inference, 1.0, rng, forced};
  const int n = data.size();
  double loss = 0.0;
  long correct = 0;
  std::vector<int> idx;
  for (int start = 0; start < n; start += batch_size) {
    const int stop = std::min(n, start + batch_size);
    idx.resize(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor4 logits = net.forward(data.gather_images(idx), ctx);
    const auto labels = data.gather_labels(idx);
    const XentResult r = softmax_xent(logits, labels);
    loss += r.loss * (stop - start);
    correct += r.correct;
  }
  return EvalMetrics{loss / n, static_cast<double>(correct) / n};
}

TrainReport train(Network& net, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg) {
  cfg.validate();
  train_set.validate();
  val_set.validate();
  const NetworkSpec& spec = net.spec();
  const Shape out = spec.output_shape();
  for (const Dataset* ds : {&train_set, &val_set}) {
    const Shape& s = ds->images.shape();
    if (s.c != spec.input_channels || s.h != spec.input_height || s.w != spec.input_width) {
      throw ShapeError("dataset images " + s.str() + " do not match the network input");
    }
    if (out.h != 1 || out.w != 1 || out.c != ds->classes) {
      throw ShapeError("network output " + out.str() + " does not match " +
                       std::to_string(ds->classes) + " classes");
    }
  }

  const auto t0 = std::chrono::steady_clock::now();
  const int n = train_set.size();
  const long steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const long total_steps = steps_per_epoch * cfg.epochs;
  if (cfg.policy == KeepProbPolicy::Scheduled) (void)cfg.schedule_for(total_steps);

  RngStream shuffle_rng(cfg.seed, 2);
  RngStream reg_rng(cfg.seed, 3);
  const SgdConfig sgd{cfg.learning_rate, cfg.momentum, cfg.weight_decay};
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  TrainReport report;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i = n - 1; i > 0; --i) {
      const auto j = static_cast<int>(shuffle_rng.next_below(static_cast<std::uint64_t>(i) + 1));
      std::swap(order[i], order[j]);
    }
    double keep_prob = 1.0;
    for (int start = 0; start < n; start += cfg.batch_size, ++step) {
      const int stop = std::min(n, start + cfg.batch_size);
      const std::span<const int> idx(order.data() + start, order.data() + stop);
      // Updates are numbered from 1 so that the last one runs at step_end.
      keep_prob = cfg.keep_prob_at(step + 1, total_steps);
      ForwardContext ctx{Mode::Train, keep_prob, &reg_rng, std::nullopt};
      const Tensor4 logits = net.forward(train_set.gather_images(idx), ctx);
      const auto labels = train_set.gather_labels(idx);
      const XentResult r = softmax_xent(logits, labels);
      if (!std::isfinite(r.loss)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) +
                              ", step " + std::to_string(step) +
                              "; try a smaller learning_rate");
      }
      net.backward(r.grad);
      const auto params = net.parameters();
      sgd_step(params, sgd);
    }
    const EvalMetrics tr = evaluate(net, train_set, 256);
    const EvalMetrics va = evaluate(net, val_set, 256);
    if (!std::isfinite(tr.loss) || !std::isfinite(va.loss)) {
      throw DivergenceError("non-finite evaluation loss after epoch " + std::to_string(epoch));
    }
    report.epochs.push_back(
        EpochMetrics{epoch + 1, tr.loss, tr.accuracy, va.loss, va.accuracy, keep_prob});
  }
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

TrainReport train(const NetworkSpec& spec, const Dataset& train_set,
                  const Dataset& val_set, const TrainConfig& cfg) {
  Network net(spec, cfg.seed);
  return train(net, train_set, val_set, cfg);
}

}  // namespace dropblock::nn
