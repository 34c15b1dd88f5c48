#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dropblock/nn/dataset.hpp"
#include "dropblock/nn/network.hpp"
#include "dropblock/regularizers.hpp"

namespace dropblock::nn {

enum class KeepProbPolicy { Scheduled, Fixed };

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::uint64_t seed = 1;

  double keep_prob_target = 1.0;
  KeepProbPolicy policy = KeepProbPolicy::Scheduled;
  long schedule_start = 0;
  /// Defaults to the total number of optimizer steps.
  std::optional<long> schedule_end;

  void validate() const;
  /// The keep_prob ramp for a run of `total_steps` optimizer steps.
  LinearSchedule schedule_for(long total_steps) const;
  /// keep_prob for optimizer update number `step`; train() counts updates
  /// from 1, so step 0 is never run and the last update uses step_end.
  double keep_prob_at(long step, long total_steps) const;

  bool operator==(const TrainConfig&) const = default;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  /// keep_prob in effect at the epoch's last optimizer step.
  double keep_prob = 1.0;
  bool operator==(const EpochMetrics&) const = default;
};

struct TrainReport {
  std::vector<EpochMetrics> epochs;
  double wall_clock_seconds = 0.0;

  const EpochMetrics& final() const { return epochs.back(); }
  double final_gap() const { return final().train_accuracy - final().val_accuracy; }

  /// One row per epoch; excludes wall-clock so equal runs are byte-identical.
  std::string to_csv() const;
  /// Summary with final metrics, keep_prob trace and wall-clock.
  std::string to_json() const;
};

struct EvalMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Mean loss and accuracy in inference mode. With `forced` set, every
/// regularizer placement applies that DropBlock config using `rng`.
EvalMetrics evaluate(Network& net, const Dataset& data, int batch_size,
                     const std::optional<DropBlockConfig>& forced = std::nullopt,
                     RngStream* rng = nullptr);

/// Mini-batch SGD. Deterministic given cfg.seed: shuffling draws from
/// RngStream(seed, 2), regularizers from RngStream(seed, 3). Train and
/// validation metrics are measured in inference mode after each epoch.
/// Throws DivergenceError on a non-finite loss.
TrainReport train(Network& net, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg);

/// Builds Network(spec, cfg.seed) and trains it.
TrainReport train(const NetworkSpec& spec, const Dataset& train_set,
                  const Dataset& val_set, const TrainConfig& cfg);

}  // namespace dropblock::nn
