#include <doctest.h>

#include <cmath>

#include "dropblock/error.hpp"
#include "dropblock/mask.hpp"

using namespace dropblock;

namespace {

// Reference: stamp every seed's block directly.
BinaryTensor4 stamp_blocks(const BinaryTensor4& seeds, int bs) {
  const Shape& s = seeds.shape();
  BinaryTensor4 keep(s, true);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int r = 0; r < s.h; ++r)
        for (int k = 0; k < s.w; ++k) {
          if (!seeds.at(n, c, r, k)) continue;
          for (int y = r - (bs - 1) / 2; y <= r + bs / 2; ++y)
            for (int x = k - (bs - 1) / 2; x <= k + bs / 2; ++x) keep.set(n, c, y, x, false);
        }
  return keep;
}

BinaryTensor4 random_seeds(RngStream& rng, Shape s, int bs, double p) {
  const SeedRegion region = valid_seed_region(bs, s.h, s.w);
  BinaryTensor4 seeds(s, false);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int r = region.row_lo; r <= region.row_hi; ++r)
        for (int k = region.col_lo; k <= region.col_hi; ++k)
          seeds.set(n, c, r, k, rng.next_uniform() < p);
  return seeds;
}

std::size_t zeros(const BinaryTensor4& m) {
  const auto g = count_and_ones(m, Granularity::Global)[0];
  return g.count - g.count_ones;
}

}  // namespace

TEST_CASE("compute_gamma evaluates the seed-rate formula") {
  CHECK(compute_gamma(0.9, 7, 7, 7) == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(compute_gamma(0.9, 3, 8, 8) == doctest::Approx(0.1 / 9.0 * 64.0 / 36.0).epsilon(1e-14));
  CHECK(compute_gamma(0.9, 3, 8, 8) == doctest::Approx(0.0197531).epsilon(1e-6));
  for (double kp : {0.5, 0.75, 0.9, 1.0}) {
    for (int s : {1, 4, 9}) CHECK(compute_gamma(kp, 1, s, s) == doctest::Approx(1.0 - kp));
  }
  CHECK(compute_gamma(1.0, 5, 9, 9) == 0.0);
  // Non-square maps use h*w over the rectangular valid region.
  CHECK(compute_gamma(0.8, 2, 4, 6) == doctest::Approx(0.2 / 4.0 * 24.0 / 15.0));
}

TEST_CASE("compute_gamma clamps, applies the multiplier before clamping, rejects bad input") {
  CHECK(compute_gamma(0.1, 3, 3, 3) == doctest::Approx(0.9));
  CHECK(compute_gamma(0.1, 3, 3, 3, 2.0) == 1.0);
  CHECK(compute_gamma(0.9, 7, 7, 7, 0.25) == doctest::Approx(0.025));
  CHECK(compute_gamma(0.5, 7, 7, 7, 4.0) == 1.0);
  CHECK_THROWS_AS(compute_gamma(0.9, 8, 7, 7), GeometryError);
  CHECK_THROWS_AS(compute_gamma(0.9, 3, 2, 9), GeometryError);
  CHECK_THROWS_AS(compute_gamma(0.0, 3, 7, 7), ParameterError);
  CHECK_THROWS_AS(compute_gamma(1.1, 3, 7, 7), ParameterError);
  CHECK_THROWS_AS(compute_gamma(0.9, 0, 7, 7), ParameterError);
  CHECK_THROWS_AS(compute_gamma(0.9, 3, 7, 7, 0.0), ParameterError);
}

TEST_CASE("valid_seed_region sizes and anchoring") {
  const SeedRegion one = valid_seed_region(7, 7, 7);
  CHECK(one.size() == 1);
  CHECK(one.row_lo == 3);
  CHECK(one.col_lo == 3);

  const SeedRegion all = valid_seed_region(1, 5, 5);
  CHECK(all.size() == 25);
  CHECK(all.row_lo == 0);
  CHECK(all.row_hi == 4);

  const SeedRegion even = valid_seed_region(2, 5, 5);
  CHECK(even.size() == 16);
  CHECK(even.row_lo == 0);
  CHECK(even.row_hi == 3);

  CHECK(valid_seed_region(4, 8, 8).size() == 25);
  for (int bs = 1; bs <= 6; ++bs) {
    for (int h = bs; h <= 9; ++h) {
      for (int w = bs; w <= 9; ++w) {
        CHECK(valid_seed_region(bs, h, w).size() == (h - bs + 1) * (w - bs + 1));
      }
    }
  }
  CHECK_THROWS_AS(valid_seed_region(6, 5, 9), GeometryError);
}

TEST_CASE("expand_seeds single stamps and unions") {
  const Shape s{1, 1, 5, 5};
  CHECK(expand_seeds(BinaryTensor4(s, false), 3) == BinaryTensor4(s, true));

  BinaryTensor4 centre(s, false);
  centre.set(0, 0, 2, 2, true);
  const BinaryTensor4 one = expand_seeds(centre, 3);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 5; ++c)
      CHECK(one.at(0, 0, r, c) == !(r >= 1 && r <= 3 && c >= 1 && c <= 3));

  BinaryTensor4 two(s, false);
  two.set(0, 0, 1, 1, true);
  two.set(0, 0, 2, 2, true);
  CHECK(zeros(expand_seeds(two, 3)) == 14);

  BinaryTensor4 outside(s, false);
  outside.set(0, 0, 0, 2, true);
  CHECK_THROWS_AS(expand_seeds(outside, 3), ContractError);
}

TEST_CASE("window-maximum expansion equals direct stamping") {
  RngStream rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const int bs = 1 + static_cast<int>(rng.next_below(5));
    const int h = bs + static_cast<int>(rng.next_below(6));
    const int w = bs + static_cast<int>(rng.next_below(6));
    const Shape s{1 + static_cast<int>(rng.next_below(2)), 1 + static_cast<int>(rng.next_below(3)), h, w};
    const BinaryTensor4 seeds = random_seeds(rng, s, bs, 0.3 * rng.next_uniform());
    CHECK(expand_seeds(seeds, bs) == stamp_blocks(seeds, bs));
  }
}

TEST_CASE("sample_mask with keep_prob 1 is all ones and consumes nothing") {
  RngStream rng(3);
  const MaskBatch m = sample_mask(rng, DropBlockConfig{3, 1.0, true, 1.0}, 2, 3, 6, 6);
  CHECK(m.mask == BinaryTensor4(Shape{2, 3, 6, 6}, true));
  for (auto sc : m.stats) CHECK(sc.count == sc.count_ones);
  CHECK(rng.counter() == 0);
  CHECK(m.consistent());
}

TEST_CASE("shared mode broadcasts one mask across channels") {
  RngStream rng(8);
  const MaskBatch m = sample_mask(rng, DropBlockConfig{3, 0.6, false, 1.0}, 3, 4, 9, 9);
  CHECK(m.granularity == Granularity::PerSample);
  CHECK(m.stats.size() == 3);
  CHECK(m.consistent());
  for (int n = 0; n < 3; ++n)
    for (int c = 1; c < 4; ++c)
      for (int r = 0; r < 9; ++r)
        for (int k = 0; k < 9; ++k) CHECK(m.mask.at(n, c, r, k) == m.mask.at(n, 0, r, k));
}

TEST_CASE("per-channel masks are independent, reproducible, and advance the stream once") {
  RngStream a(21), b(21);
  const DropBlockConfig cfg{2, 0.7, true, 1.0};
  const MaskBatch ma = sample_mask(a, cfg, 2, 3, 8, 8);
  const MaskBatch mb = sample_mask(b, cfg, 2, 3, 8, 8);
  CHECK(ma.mask == mb.mask);
  CHECK(a.counter() == 1);
  CHECK(ma.stats.size() == 6);
  CHECK(ma.consistent());
  const MaskBatch next = sample_mask(a, cfg, 2, 3, 8, 8);
  CHECK_FALSE(next.mask == ma.mask);
}

TEST_CASE("every dropped cell lies in a fully interior all-zero block") {
  RngStream rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int bs = 1 + static_cast<int>(rng.next_below(4));
    const int h = bs + static_cast<int>(rng.next_below(7));
    const int w = bs + static_cast<int>(rng.next_below(7));
    const DropBlockConfig cfg{bs, 0.5 + 0.5 * rng.next_uniform(), rng.next_uniform() < 0.5, 1.0};
    const MaskBatch m = sample_mask(rng, cfg, 1, 2, h, w);
    for (int c = 0; c < 2; ++c)
      for (int r = 0; r < h; ++r)
        for (int k = 0; k < w; ++k) {
          if (m.mask.at(0, c, r, k)) continue;
          bool witnessed = false;
          for (int top = std::max(0, r - bs + 1); top <= std::min(r, h - bs) && !witnessed; ++top)
            for (int left = std::max(0, k - bs + 1); left <= std::min(k, w - bs) && !witnessed; ++left) {
              bool all_zero = true;
              for (int y = top; y < top + bs && all_zero; ++y)
                for (int x = left; x < left + bs && all_zero; ++x) all_zero = !m.mask.at(0, c, y, x);
              witnessed = all_zero;
            }
          CHECK(witnessed);
        }
  }
}

TEST_CASE("raising gamma on the same stream only adds dropped cells") {
  RngStream rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const DropBlockConfig lo{3, 0.95, true, 1.0};
    const DropBlockConfig hi{3, 0.75, true, 1.0};
    RngStream a = rng, b = rng;
    const MaskBatch ml = sample_mask(a, lo, 1, 2, 10, 10);
    const MaskBatch mh = sample_mask(b, hi, 1, 2, 10, 10);
    for (std::size_t i = 0; i < ml.mask.size(); ++i) {
      if (!ml.mask[i]) CHECK_FALSE(mh.mask[i]);
    }
    rng.advance(1);
  }
}

TEST_CASE("full-map blocks drop whole slices at rate 1 - keep_prob") {
  RngStream rng(31);
  const DropBlockConfig cfg{5, 0.9, true, 1.0};
  const MaskBatch m = sample_mask(rng, cfg, 2500, 4, 5, 5);
  long dropped = 0;
  for (auto sc : m.stats) {
    CHECK((sc.count_ones == 0 || sc.count_ones == 25));
    dropped += sc.count_ones == 0;
  }
  const double n = 10000.0;
  CHECK(std::abs(dropped / n - 0.1) < 3.0 * std::sqrt(0.1 * 0.9 / n));
}
