#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dropblock/mask.hpp"
#include "dropblock/rng.hpp"

namespace dropblock::tooling {

/// Largest seed region the full enumeration accepts (2^20 configurations).
inline constexpr int kEnumerationSeedLimit = 20;

/// For each position of an h x w map (row-major), how many valid seeds have
/// a block covering it.
std::vector<int> covering_seed_counts(int block_size, int h, int w);

/// Expected dropped fraction of one mask slice by summing over every seed
/// configuration, weighted gamma^k (1 - gamma)^(s - k). Throws
/// ParameterError when the seed region exceeds kEnumerationSeedLimit.
double expected_drop_fraction_enumerated(double gamma, int block_size, int h, int w);

/// Same expectation as the mean over positions of 1 - (1 - gamma)^cover(p).
double expected_drop_fraction_closed_form(double gamma, int block_size, int h, int w);

/// Enumerated expectation at the gamma implied by cfg.
double expected_drop_fraction_exact(const DropBlockConfig& cfg, int h, int w);

/// Per-position drop probability, row-major h x w.
std::vector<double> unit_drop_probability_map(const DropBlockConfig& cfg, int h, int w);
std::vector<double> unit_drop_probability_map(double gamma, int block_size, int h, int w);

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  long trials = 0;
};

/// Mean dropped fraction over `trials` independent single-slice masks, with
/// standard error sample_std / sqrt(trials). trials must be >= 100.
MonteCarloEstimate monte_carlo_drop_rate(RngStream& rng, const DropBlockConfig& cfg,
                                         int h, int w, long trials);

struct RateReport {
  DropBlockConfig config;
  int height = 0;
  int width = 0;
  double gamma = 0.0;
  double target_drop = 0.0;
  /// Present only when the seed region is within kEnumerationSeedLimit.
  std::optional<double> exact_enumerated;
  double exact_closed_form = 0.0;
  MonteCarloEstimate monte_carlo;
  std::vector<double> drop_probability_map;

  std::string to_json() const;
  /// `row,col,drop_probability` per position.
  std::string map_to_csv() const;
};

RateReport rate_report(RngStream& rng, const DropBlockConfig& cfg, int h, int w,
                       long trials);

}  // namespace dropblock::tooling
