#include "dropblock/rng.hpp"

#include "dropblock/error.hpp"

namespace dropblock {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

PhiloxBlock philox4x32_10(PhiloxBlock ctr, std::uint32_t k0, std::uint32_t k1) {
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * ctr.v[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * ctr.v[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = PhiloxBlock{{hi1 ^ ctr.v[1] ^ k0, lo1, hi0 ^ ctr.v[3] ^ k1, lo0}};
    k0 += kPhiloxW0;
    k1 += kPhiloxW1;
  }
  return ctr;
}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t c = counter_++;
  const PhiloxBlock in{{static_cast<std::uint32_t>(c),
                        static_cast<std::uint32_t>(c >> 32),
                        static_cast<std::uint32_t>(stream_id_),
                        static_cast<std::uint32_t>(stream_id_ >> 32)}};
  const PhiloxBlock out = philox4x32_10(in, static_cast<std::uint32_t>(seed_),
                                        static_cast<std::uint32_t>(seed_ >> 32));
  return (static_cast<std::uint64_t>(out.v[1]) << 32) | out.v[0];
}

double RngStream::next_uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::next_below(std::uint64_t bound) {
  if (bound == 0) throw ParameterError("next_below bound must be positive");
  // Rejection keeps the result exactly uniform.
  const std::uint64_t limit = -bound % bound;
  for (;;) {
    const std::uint64_t x = next_u64();
    if (x >= limit) return x % bound;
  }
}

RngStream RngStream::split(std::uint64_t a, std::uint64_t b) const {
  std::uint64_t id = mix64(stream_id_ ^ 0x5851F42D4C957F2Dull);
  id = mix64(id ^ counter_);
  id = mix64(id ^ a);
  id = mix64(id ^ (b + 0x2545F4914F6CDD1Dull));
  return RngStream(seed_, id);
}

BinaryTensor4 bernoulli(RngStream& rng, Shape shape, double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ParameterError("bernoulli probability must lie in [0, 1]");
  }
  BinaryTensor4 out(shape, false);
  for (std::size_t i = 0; i < out.size(); ++i) out.set(i, rng.next_uniform() < p);
  return out;
}

}  // namespace dropblock
