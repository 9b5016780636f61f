#include <doctest.h>

#include <cmath>
#include <set>

#include "volcal/rng.hpp"

using namespace volcal::rng;

TEST_CASE("philox4x32-10 matches the Random123 known-answer vectors") {
  // Published kat_vectors for philox4x32 with 10 rounds.
  Block z = philox4x32({0u, 0u, 0u, 0u}, {0u, 0u});
  CHECK(z[0] == 0x6627e8d5u);
  CHECK(z[1] == 0xe169c58du);
  CHECK(z[2] == 0xbc57ac4cu);
  CHECK(z[3] == 0x9b00dbd8u);

  Block f = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                       {0xffffffffu, 0xffffffffu});
  CHECK(f[0] == 0x408f276du);
  CHECK(f[1] == 0x41c83b0eu);
  CHECK(f[2] == 0xa20bc7c6u);
  CHECK(f[3] == 0x6d5451fdu);

  Block pi = philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                        {0xa4093822u, 0x299f31d0u});
  CHECK(pi[0] == 0xd16cfe09u);
  CHECK(pi[1] == 0x94fdccebu);
  CHECK(pi[2] == 0x5001e420u);
  CHECK(pi[3] == 0x24126ea1u);
}

TEST_CASE("counter stream is deterministic and serializable") {
  CounterStream a(42, StreamTag::Test);
  CounterStream b(42, StreamTag::Test);
  for (int i = 0; i < 100; ++i) CHECK(a.next_uniform() == b.next_uniform());

  // Resuming from a saved counter replays the tail exactly.
  std::uint64_t saved = a.counter();
  double next = a.next_uniform();
  CounterStream c(42, StreamTag::Test);
  c.set_counter(saved);
  CHECK(c.next_uniform() == next);

  CounterStream other(43, StreamTag::Test);
  CHECK(other.next_uniform() != b.next_uniform());
}

TEST_CASE("uniform draws land in [0,1) with the right mean") {
  CounterStream s(7, StreamTag::Test);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    double u = s.next_uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  // ~5 standard errors of Uniform(0,1).
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.006));
}

TEST_CASE("per-path normals are order-independent with sane moments") {
  Key key = derive_key(123, StreamTag::PathSimulation);
  CHECK(normal_at(key, 5, 9) == normal_at(key, 5, 9));
  CHECK(normal_at(key, 5, 9) != normal_at(key, 9, 5));

  double sum = 0.0, sum2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double z = normal_at(key, static_cast<std::uint64_t>(i), 0);
    sum += z;
    sum2 += z * z;
  }
  double mean = sum / n;
  double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 5.0 / std::sqrt(static_cast<double>(n)));
  CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}
