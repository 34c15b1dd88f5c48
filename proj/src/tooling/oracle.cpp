#include "dropblock/tooling/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>

#include <json.hpp>

#include "dropblock/error.hpp"

namespace dropblock::tooling {

std::vector<int> covering_seed_counts(int block_size, int h, int w) {
  const SeedRegion region = valid_seed_region(block_size, h, w);
  std::vector<int> cover(static_cast<std::size_t>(h) * w, 0);
  for (int r = region.row_lo; r <= region.row_hi; ++r) {
    for (int c = region.col_lo; c <= region.col_hi; ++c) {
      for (int y = r - block_before(block_size); y <= r + block_after(block_size); ++y) {
        for (int x = c - block_before(block_size); x <= c + block_after(block_size); ++x) {
          ++cover[y * w + x];
        }
      }
    }
  }
  return cover;
}

double expected_drop_fraction_enumerated(double gamma, int block_size, int h, int w) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ParameterError("gamma must lie in [0, 1]");
  const SeedRegion region = valid_seed_region(block_size, h, w);
  const int seeds = region.size();
  if (seeds > kEnumerationSeedLimit) {
    throw ParameterError("seed region has " + std::to_string(seeds) +
                         " positions, above the enumeration limit of " +
                         std::to_string(kEnumerationSeedLimit) +
                         "; use the closed form or monte_carlo_drop_rate");
  }
  // Positions covered by each seed.
  std::vector<std::vector<int>> footprint;
  for (int r = region.row_lo; r <= region.row_hi; ++r) {
    for (int c = region.col_lo; c <= region.col_hi; ++c) {
      std::vector<int> cells;
      for (int y = r - block_before(block_size); y <= r + block_after(block_size); ++y) {
        for (int x = c - block_before(block_size); x <= c + block_after(block_size); ++x) {
          cells.push_back(y * w + x);
        }
      }
      footprint.push_back(std::move(cells));
    }
  }
  // Walk all configurations in Gray-code order, toggling one seed per step.
  // Dropped counts are summed exactly per active-seed count k, so rounding
  // only enters in the final weighted sum.
  std::vector<int> cover(static_cast<std::size_t>(h) * w, 0);
  std::vector<std::uint64_t> dropped_by_k(seeds + 1, 0);
  std::uint64_t active = 0;
  int k = 0;
  long dropped = 0;
  const std::uint64_t total = std::uint64_t{1} << seeds;
  for (std::uint64_t g = 0; g < total; ++g) {
    if (g > 0) {
      const int bit = std::countr_zero(g);
      const bool on = !((active >> bit) & 1u);
      active ^= std::uint64_t{1} << bit;
      k += on ? 1 : -1;
      for (int cell : footprint[bit]) {
        if (on) {
          if (cover[cell]++ == 0) ++dropped;
        } else {
          if (--cover[cell] == 0) --dropped;
        }
      }
    }
    dropped_by_k[k] += static_cast<std::uint64_t>(dropped);
  }
  double expected = 0.0;
  for (int j = 0; j <= seeds; ++j) {
    const double weight = std::pow(gamma, j) * std::pow(1.0 - gamma, seeds - j);
    expected += weight * static_cast<double>(dropped_by_k[j]);
  }
  return expected / (static_cast<double>(h) * w);
}

double expected_drop_fraction_closed_form(double gamma, int block_size, int h, int w) {
  const auto map = unit_drop_probability_map(gamma, block_size, h, w);
  double sum = 0.0;
  for (double p : map) sum += p;
  return sum / static_cast<double>(map.size());
}

double expected_drop_fraction_exact(const DropBlockConfig& cfg, int h, int w) {
  cfg.validate();
  return expected_drop_fraction_enumerated(
      compute_gamma(cfg.keep_prob, cfg.block_size, h, w, cfg.gamma_multiplier),
      cfg.block_size, h, w);
}

std::vector<double> unit_drop_probability_map(double gamma, int block_size, int h, int w) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ParameterError("gamma must lie in [0, 1]");
  const auto cover = covering_seed_counts(block_size, h, w);
  std::vector<double> out(cover.size());
  for (std::size_t i = 0; i < cover.size(); ++i) {
    out[i] = 1.0 - std::pow(1.0 - gamma, cover[i]);
  }
  return out;
}

std::vector<double> unit_drop_probability_map(const DropBlockConfig& cfg, int h, int w) {
  cfg.validate();
  return unit_drop_probability_map(
      compute_gamma(cfg.keep_prob, cfg.block_size, h, w, cfg.gamma_multiplier),
      cfg.block_size, h, w);
}

MonteCarloEstimate monte_carlo_drop_rate(RngStream& rng, const DropBlockConfig& cfg,
                                         int h, int w, long trials) {
  if (trials < 100) throw ParameterError("monte_carlo_drop_rate needs trials >= 100");
  constexpr long kChunk = 4096;
  double mean = 0.0;
  double m2 = 0.0;
  long seen = 0;
  for (long done = 0; done < trials; done += kChunk) {
    const int batch = static_cast<int>(std::min(kChunk, trials - done));
    const MaskBatch m = sample_mask(rng, cfg, batch, 1, h, w);
    for (const SliceCount& s : m.stats) {
      const double frac = 1.0 - static_cast<double>(s.count_ones) / static_cast<double>(s.count);
      ++seen;
      const double delta = frac - mean;
      mean += delta / static_cast<double>(seen);
      m2 += delta * (frac - mean);
    }
  }
  const double var = m2 / static_cast<double>(trials - 1);
  return MonteCarloEstimate{mean, std::sqrt(var / static_cast<double>(trials)), trials};
}

RateReport rate_report(RngStream& rng, const DropBlockConfig& cfg, int h, int w,
                       long trials) {
  cfg.validate();
  RateReport r;
  r.config = cfg;
  r.height = h;
  r.width = w;
  r.gamma = compute_gamma(cfg.keep_prob, cfg.block_size, h, w, cfg.gamma_multiplier);
  r.target_drop = 1.0 - cfg.keep_prob;
  if (valid_seed_region(cfg.block_size, h, w).size() <= kEnumerationSeedLimit) {
    r.exact_enumerated = expected_drop_fraction_enumerated(r.gamma, cfg.block_size, h, w);
  }
  r.exact_closed_form = expected_drop_fraction_closed_form(r.gamma, cfg.block_size, h, w);
  r.monte_carlo = monte_carlo_drop_rate(rng, cfg, h, w, trials);
  r.drop_probability_map = unit_drop_probability_map(r.gamma, cfg.block_size, h, w);
  return r;
}

std::string RateReport::to_json() const {
  nlohmann::json j;
  j["config"] = {{"block_size", config.block_size},
                 {"keep_prob", config.keep_prob},
                 {"per_channel", config.per_channel},
                 {"gamma_multiplier", config.gamma_multiplier},
                 {"height", height},
                 {"width", width}};
  j["gamma"] = gamma;
  j["target_drop_fraction"] = target_drop;
  j["exact_drop_fraction_enumerated"] =
      exact_enumerated ? nlohmann::json(*exact_enumerated) : nlohmann::json(nullptr);
  j["exact_drop_fraction_closed_form"] = exact_closed_form;
  j["monte_carlo"] = {{"mean", monte_carlo.mean},
                      {"std_error", monte_carlo.std_error},
                      {"trials", monte_carlo.trials}};
  auto rows = nlohmann::json::array();
  for (int r = 0; r < height; ++r) {
    auto row = nlohmann::json::array();
    for (int c = 0; c < width; ++c) row.push_back(drop_probability_map[r * width + c]);
    rows.push_back(row);
  }
  j["drop_probability_map"] = rows;
  return j.dump(2) + "\n";
}

std::string RateReport::map_to_csv() const {
  std::string out = "row,col,drop_probability\n";
  char buf[64];
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      std::snprintf(buf, sizeof buf, "%d,%d,%.12g\n", r, c, drop_probability_map[r * width + c]);
      out += buf;
    }
  }
  return out;
}

}  // namespace dropblock::tooling
