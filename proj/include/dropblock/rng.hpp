#pragma once

#include <cstdint>

#include "dropblock/tensor.hpp"

namespace dropblock {

/// Counter-based random stream (Philox4x32-10).
///
/// Draw k of a stream is a pure function of (seed, stream_id, k), so two
/// streams with equal keys yield identical sequences and sub-streams can be
/// derived without touching any shared state. The stream is a value: copying
/// it forks the sequence, and only the draw functions advance `counter`.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0)
      : seed_(seed), stream_id_(stream_id) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 bits of resolution.
  double next_uniform();
  /// Uniform integer on [0, bound). bound must be > 0.
  std::uint64_t next_below(std::uint64_t bound);
  void advance(std::uint64_t draws) { counter_ += draws; }

  /// Sub-stream keyed by the current position and (a, b). Does not advance
  /// this stream; distinct (a, b) give distinct, order-independent streams.
  RngStream split(std::uint64_t a, std::uint64_t b = 0) const;

  bool operator==(const RngStream&) const = default;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t counter_ = 0;
};

/// Raw Philox4x32-10 block function, exposed for known-answer tests.
struct PhiloxBlock {
  std::uint32_t v[4];
};
PhiloxBlock philox4x32_10(PhiloxBlock counter, std::uint32_t key0,
                          std::uint32_t key1);

/// Independent Bernoulli(p) elements, drawn in flat row-major order; advances
/// rng by shape.size() draws. Throws ParameterError unless 0 <= p <= 1.
BinaryTensor4 bernoulli(RngStream& rng, Shape shape, double p);

}  // namespace dropblock
