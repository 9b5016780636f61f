#include "volcal/rng.hpp"

#include <cmath>

namespace volcal::rng {

namespace {

constexpr std::uint32_t kMult0 = 0xD2511F53u;
constexpr std::uint32_t kMult1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mul_hi_lo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                      std::uint32_t& lo) {
  std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline Block round_once(const Block& c, const Key& k) {
  std::uint32_t hi0, lo0, hi1, lo1;
  mul_hi_lo(kMult0, c[0], hi0, lo0);
  mul_hi_lo(kMult1, c[2], hi1, lo1);
  return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

}  // namespace

Block philox4x32(const Block& counter, const Key& key) {
  Block c = counter;
  Key k = key;
  for (int r = 0; r < 10; ++r) {
    c = round_once(c, k);
    k[0] += kWeyl0;
    k[1] += kWeyl1;
  }
  return c;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

Key derive_key(std::uint64_t seed, StreamTag tag) {
  std::uint64_t k = splitmix64(seed + 0x632BE59BD9B4E019ull *
                                          static_cast<std::uint64_t>(tag));
  return {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
}

double to_unit_double(std::uint32_t hi, std::uint32_t lo) {
  std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

double CounterStream::next_uniform() {
  Block ctr{static_cast<std::uint32_t>(counter_),
            static_cast<std::uint32_t>(counter_ >> 32), 0u, 0u};
  ++counter_;
  Block out = philox4x32(ctr, key_);
  return to_unit_double(out[0], out[1]);
}

double CounterStream::next_uniform(double lo, double hi) {
  return lo + (hi - lo) * next_uniform();
}

double normal_at(const Key& key, std::uint64_t path, std::uint64_t step) {
  Block ctr{static_cast<std::uint32_t>(path),
            static_cast<std::uint32_t>(path >> 32),
            static_cast<std::uint32_t>(step),
            static_cast<std::uint32_t>(step >> 32)};
  Block out = philox4x32(ctr, key);
  // u1 in (0, 1] keeps the log finite; u2 in [0, 1).
  double u1 = 1.0 - to_unit_double(out[0], out[1]);
  double u2 = to_unit_double(out[2], out[3]);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace volcal::rng
