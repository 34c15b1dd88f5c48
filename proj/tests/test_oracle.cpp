#include <doctest.h>

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "dropblock/error.hpp"
#include "dropblock/mask.hpp"
#include "dropblock/tooling/oracle.hpp"

using namespace dropblock;
using namespace dropblock::tooling;

namespace {

// Brute force: stamp every subset of seeds and weight its dropped count.
double brute_force_fraction(double gamma, int bs, int h, int w) {
  const int rows = h - bs + 1, cols = w - bs + 1, s = rows * cols;
  double total = 0.0;
  for (long subset = 0; subset < (1L << s); ++subset) {
    std::vector<char> dropped(static_cast<std::size_t>(h * w), 0);
    int k = 0;
    for (int i = 0; i < s; ++i) {
      if (!(subset >> i & 1)) continue;
      ++k;
      const int r0 = i / cols, c0 = i % cols;  // top-left corner of the block
      for (int r = r0; r < r0 + bs; ++r)
        for (int c = c0; c < c0 + bs; ++c) dropped[static_cast<std::size_t>(r * w + c)] = 1;
    }
    const double count = static_cast<double>(std::count(dropped.begin(), dropped.end(), 1));
    total += std::pow(gamma, k) * std::pow(1.0 - gamma, s - k) * count;
  }
  return total / (h * w);
}

}  // namespace

TEST_CASE("3x3 grid with 2x2 blocks at gamma 0.5") {
  const auto map = unit_drop_probability_map(0.5, 2, 3, 3);
  REQUIRE(map.size() == 9);
  CHECK(map[0] == doctest::Approx(0.5));
  CHECK(map[1] == doctest::Approx(0.75));
  CHECK(map[4] == doctest::Approx(0.9375));
  CHECK(map[8] == doctest::Approx(0.5));
  CHECK(covering_seed_counts(2, 3, 3) == std::vector<int>{1, 2, 1, 2, 4, 2, 1, 2, 1});
  const double bf = brute_force_fraction(0.5, 2, 3, 3);
  CHECK(bf == doctest::Approx(5.9375 / 9).epsilon(1e-14));
  CHECK(expected_drop_fraction_enumerated(0.5, 2, 3, 3) == doctest::Approx(bf).epsilon(1e-14));
  CHECK(expected_drop_fraction_closed_form(0.5, 2, 3, 3) == doctest::Approx(bf).epsilon(1e-14));
}

TEST_CASE("enumeration agrees with brute force and the closed form") {
  for (int h = 1; h <= 6; ++h)
    for (int w = 1; w <= 6; ++w)
      for (int bs = 1; bs <= std::min(h, w); ++bs) {
        const int seeds = (h - bs + 1) * (w - bs + 1);
        if (seeds > 12) continue;
        for (double g : {0.0, 0.03, 0.3, 0.77, 1.0}) {
          const double e = expected_drop_fraction_enumerated(g, bs, h, w);
          const double c = expected_drop_fraction_closed_form(g, bs, h, w);
          CHECK(std::abs(e - c) <= 1e-12);
          CHECK(std::abs(e - brute_force_fraction(g, bs, h, w)) <= 1e-12);
        }
      }
  // Largest enumerable region.
  CHECK(std::abs(expected_drop_fraction_enumerated(0.2, 3, 6, 7) -
                 expected_drop_fraction_closed_form(0.2, 3, 6, 7)) <= 1e-12);
  CHECK_THROWS_AS(expected_drop_fraction_enumerated(0.2, 3, 7, 7), ParameterError);
}

TEST_CASE("degenerate rates") {
  CHECK(expected_drop_fraction_enumerated(0.0, 2, 4, 4) == 0.0);
  CHECK(expected_drop_fraction_enumerated(1.0, 2, 4, 4) == doctest::Approx(1.0));
  CHECK(expected_drop_fraction_enumerated(0.37, 1, 4, 4) == doctest::Approx(0.37).epsilon(1e-14));
  for (double p : unit_drop_probability_map(0.37, 1, 3, 5)) CHECK(p == doctest::Approx(0.37));
  CHECK(expected_drop_fraction_exact({7, 0.9, true, 1.0}, 7, 7) == doctest::Approx(0.1).epsilon(1e-14));
  CHECK_THROWS_AS(unit_drop_probability_map(0.5, 4, 3, 3), GeometryError);
}

TEST_CASE("overlap only lowers coverage below the target") {
  for (int h = 1; h <= 8; ++h)
    for (int w = 1; w <= 8; ++w)
      for (int bs = 1; bs <= std::min(h, w); ++bs) {
        if ((h - bs + 1) * (w - bs + 1) > kEnumerationSeedLimit) continue;
        for (double kp : {0.75, 0.8, 0.9, 0.95, 1.0}) {
          const double exact = expected_drop_fraction_exact({bs, kp, true, 1.0}, h, w);
          if (bs == 1) {
            CHECK(exact == doctest::Approx(1.0 - kp).epsilon(1e-12));
          } else {
            CHECK(exact <= 1.0 - kp + 1e-12);
          }
        }
      }
}

TEST_CASE("edge effect: the map peaks where coverage is largest") {
  const auto map = unit_drop_probability_map(DropBlockConfig{3, 0.9, true, 1.0}, 9, 9);
  const auto cover = covering_seed_counts(3, 9, 9);
  const auto peak = std::max_element(map.begin(), map.end()) - map.begin();
  CHECK(cover[static_cast<std::size_t>(peak)] == *std::max_element(cover.begin(), cover.end()));
  CHECK(map[0] < map[40]);
  for (std::size_t i = 0; i < map.size(); ++i)
    for (std::size_t j = 0; j < map.size(); ++j)
      if (cover[i] < cover[j]) CHECK(map[i] < map[j]);
}

TEST_CASE("Monte Carlo agrees with the exact value") {
  RngStream rng(13);
  for (auto [bs, kp, h, w] : {std::tuple{2, 0.8, 4, 5}, std::tuple{3, 0.9, 5, 5},
                              std::tuple{1, 0.75, 4, 4}, std::tuple{3, 0.6, 6, 7}}) {
    const DropBlockConfig cfg{bs, kp, true, 1.0};
    const auto mc = monte_carlo_drop_rate(rng, cfg, h, w, 10000);
    const double exact = expected_drop_fraction_exact(cfg, h, w);
    CHECK(mc.trials == 10000);
    CHECK(mc.std_error > 0.0);
    CHECK(std::abs(mc.mean - exact) <= 4.0 * mc.std_error);
  }
  const auto whole = monte_carlo_drop_rate(rng, {7, 0.9, true, 1.0}, 7, 7, 10000);
  CHECK(std::abs(whole.mean - 0.1) <= 4.0 * whole.std_error);

  const auto none = monte_carlo_drop_rate(rng, {3, 1.0, true, 1.0}, 8, 8, 500);
  CHECK(none.mean == 0.0);
  CHECK(none.std_error == 0.0);
  CHECK_THROWS_AS(monte_carlo_drop_rate(rng, {3, 0.9, true, 1.0}, 8, 8, 99), ParameterError);
}

TEST_CASE("standard error shrinks as one over root trials") {
  RngStream rng(29);
  const DropBlockConfig cfg{3, 0.8, true, 1.0};
  const double ref = monte_carlo_drop_rate(rng, cfg, 14, 14, 10000).std_error * 100.0;
  for (long trials : {100L, 1000L}) {
    const double scaled = monte_carlo_drop_rate(rng, cfg, 14, 14, trials).std_error *
                          std::sqrt(static_cast<double>(trials));
    CHECK(std::abs(scaled / ref - 1.0) <= 0.2);
  }
}

TEST_CASE("Monte Carlo is reproducible") {
  RngStream a(3), b(3);
  const auto x = monte_carlo_drop_rate(a, {2, 0.85, false, 1.0}, 6, 6, 5000);
  const auto y = monte_carlo_drop_rate(b, {2, 0.85, false, 1.0}, 6, 6, 5000);
  CHECK(x.mean == y.mean);
  CHECK(x.std_error == y.std_error);
  CHECK(a == b);
}

TEST_CASE("rate report") {
  RngStream rng(5);
  const RateReport small = rate_report(rng, {2, 0.9, true, 1.0}, 5, 5, 2000);
  CHECK(small.exact_enumerated.has_value());
  CHECK(small.target_drop == doctest::Approx(0.1));
  CHECK(small.gamma == doctest::Approx(compute_gamma(0.9, 2, 5, 5)));
  CHECK(std::abs(*small.exact_enumerated - small.exact_closed_form) <= 1e-12);
  CHECK(small.drop_probability_map.size() == 25);
  const auto json = nlohmann::json::parse(small.to_json());
  CHECK(json["exact_drop_fraction_enumerated"].get<double>() == *small.exact_enumerated);
  CHECK(json["monte_carlo"]["std_error"].get<double>() == small.monte_carlo.std_error);
  CHECK(json["drop_probability_map"].size() == 5);
  const std::string csv = small.map_to_csv();
  CHECK(csv.rfind("row,col,drop_probability\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 26);

  const RateReport big = rate_report(rng, {3, 0.9, true, 1.0}, 16, 16, 200);
  CHECK_FALSE(big.exact_enumerated.has_value());
  CHECK(nlohmann::json::parse(big.to_json())["exact_drop_fraction_enumerated"].is_null());
  CHECK(big.exact_closed_form <= 0.1);
  RngStream r1(8), r2(8);
  CHECK(rate_report(r1, {3, 0.9, true, 1.0}, 8, 8, 300).to_json() ==
        rate_report(r2, {3, 0.9, true, 1.0}, 8, 8, 300).to_json());
}
