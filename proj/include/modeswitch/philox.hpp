// Philox4x32-10 counter-based generator and the normal variates derived from it.
//
// Each normal draw is a pure function of (seed, path, step): simulations are
// bitwise reproducible regardless of how paths are distributed over threads.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace modeswitch::rng {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

namespace detail {

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace detail

/// Ten-round Philox bijection of the 128-bit counter under a 64-bit key.
inline Counter philox4x32_10(Counter c, Key k) {
  constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      k[0] += kW0;
      k[1] += kW1;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    detail::mulhilo(kM0, c[0], hi0, lo0);
    detail::mulhilo(kM1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }
  return c;
}

/// Uniform double in the open interval (0, 1) from 52 random bits; the half-ulp
/// offset keeps both ends exactly representable and excluded.
inline double unit_open(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = (static_cast<std::uint64_t>(hi >> 6) << 26) | (lo >> 6);
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-52;
}

/// Two independent standard normals (Box-Muller) for steps 2*pair and 2*pair + 1 of
/// `path` under `seed`.
inline std::array<double, 2> normal_pair(std::uint64_t seed, std::uint64_t path, std::uint64_t pair) {
  const Counter ctr = {static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32),
                       static_cast<std::uint32_t>(pair), static_cast<std::uint32_t>(pair >> 32)};
  const Key key = {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  const Counter out = philox4x32_10(ctr, key);
  const double u1 = unit_open(out[0], out[1]);
  const double u2 = unit_open(out[2], out[3]);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

/// Standard normal for (seed, path, step).
inline double normal(std::uint64_t seed, std::uint64_t path, std::uint64_t step) {
  return normal_pair(seed, path, step / 2)[step % 2];
}

}  // namespace modeswitch::rng
