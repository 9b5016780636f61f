#pragma once

// Counter-based random numbers (Philox4x32-10, Salmon et al. SC'11).
// Every draw is a pure function of (key, counter), so parallel consumers get
// reproducible, order-independent streams and stream state serializes as a
// single integer.

#include <array>
#include <cstdint>

namespace volcal::rng {

using Block = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

/// One Philox4x32-10 block. Verified against the Random123 known-answer
/// vectors in the unit tests.
Block philox4x32(const Block& counter, const Key& key);

/// SplitMix64 finalizer; used to spread user seeds into Philox keys.
std::uint64_t splitmix64(std::uint64_t x);

/// Purpose tags keep seed-derived streams disjoint across subsystems.
enum class StreamTag : std::uint64_t {
  ParamInit = 1,
  CollocationSampler = 3,
  PathSimulation = 4,
  DatasetGeneration = 5,
  EvaluationReference = 6,
  Test = 99,
};

Key derive_key(std::uint64_t seed, StreamTag tag);

/// Uniform double in [0, 1) from a 64-bit lane pair (53 random bits).
double to_unit_double(std::uint32_t hi, std::uint32_t lo);

/// Sequential uniform stream; state is the 64-bit counter alone.
class CounterStream {
 public:
  CounterStream() = default;
  CounterStream(std::uint64_t seed, StreamTag tag)
      : key_(derive_key(seed, tag)) {}

  /// Uniform in [0, 1); one Philox block per draw.
  double next_uniform();
  /// Uniform in [lo, hi).
  double next_uniform(double lo, double hi);

  std::uint64_t counter() const noexcept { return counter_; }
  void set_counter(std::uint64_t c) noexcept { counter_ = c; }
  const Key& key() const noexcept { return key_; }

 private:
  Key key_{0, 0};
  std::uint64_t counter_ = 0;
};

/// Standard normal for Monte Carlo path `path` at step `step`; independent of
/// evaluation order (Box-Muller over two keyed uniforms).
double normal_at(const Key& key, std::uint64_t path, std::uint64_t step);

}  // namespace volcal::rng
