#pragma once

#include <cstdint>
#include <optional>

namespace hb {

/// Reproducible random source used by data generation and the stochastic
/// block-selection rule. Everything below is fully specified so a trace can be
/// regenerated bit-for-bit by any implementation:
///
///  * state: xoshiro256** (Blackman & Vigna), four 64-bit words;
///  * seeding: the four words are successive outputs of splitmix64 started at
///    `seed` (increment 0x9e3779b97f4a7c15, mixers 0xbf58476d1ce4e5b9 and
///    0x94d049bb133111eb, shifts 30/27/31);
///  * uniform(): (next() >> 11) * 2^-53, in [0, 1);
///  * normal(): Box-Muller on two uniforms u1, u2 with r = sqrt(-2 ln(1 - u1)),
///    returning r cos(2 pi u2) first and caching r sin(2 pi u2) for the next
///    call;
///  * coin(): top bit of next();
///  * index(m): floor(uniform() * m).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next() noexcept;
  double uniform() noexcept;
  double normal() noexcept;
  bool coin() noexcept;
  std::uint64_t index(std::uint64_t m) noexcept;

 private:
  std::uint64_t s_[4];
  std::optional<double> cached_normal_;
};

std::uint64_t splitmix64(std::uint64_t& state) noexcept;

}  // namespace hb
