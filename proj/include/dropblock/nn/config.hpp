#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>

#include "dropblock/nn/dataset.hpp"
#include "dropblock/nn/network.hpp"
#include "dropblock/nn/train.hpp"

namespace dropblock::nn {

struct DataConfig {
  std::string source = "synthetic";  ///< "synthetic" or "idx"
  int train_samples = 1000;
  int val_samples = 1000;
  int classes = 4;
  std::uint64_t data_seed = 7;
  std::filesystem::path train_images, train_labels, val_images, val_labels;

  bool operator==(const DataConfig&) const = default;
};

struct RunConfig {
  NetworkSpec network;
  TrainConfig train;
  DataConfig data;

  bool operator==(const RunConfig&) const = default;
};

/// Parses `key = value` lines; '#' starts a comment. Layers are listed in
/// order with repeated `layer = <kind> [name=value ...]` lines. Throws
/// ConfigError with the offending line number.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical text form; parse_run_config(format_run_config(c)) == c.
std::string format_run_config(const RunConfig& cfg);

/// Train and validation sets described by `cfg`. Synthetic validation data
/// uses data_seed + 1.
std::pair<Dataset, Dataset> load_datasets(const DataConfig& cfg);

}  // namespace dropblock::nn
