#include "modeswitch/philox.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

namespace modeswitch::rng {
namespace {

// Published known-answer vectors for Philox4x32 with ten rounds.
TEST(Philox, KnownAnswerVectors) {
  EXPECT_EQ(philox4x32_10({0, 0, 0, 0}, {0, 0}), (Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  EXPECT_EQ(philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}),
            (Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
  EXPECT_EQ(philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}),
            (Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(UnitOpen, StaysInsideOpenInterval) {
  EXPECT_GT(unit_open(0, 0), 0.0);
  EXPECT_LT(unit_open(0xffffffffu, 0xffffffffu), 1.0);
  EXPECT_NEAR(unit_open(0x80000000u, 0), 0.5, 1e-15);
}

TEST(Normal, PureFunctionOfIndices) {
  EXPECT_EQ(normal(7, 3, 11), normal(7, 3, 11));
  EXPECT_NE(normal(7, 3, 11), normal(8, 3, 11));
  EXPECT_NE(normal(7, 3, 11), normal(7, 4, 11));
  EXPECT_NE(normal(7, 3, 11), normal(7, 3, 10));
  const auto pr = normal_pair(7, 3, 5);
  EXPECT_EQ(pr[0], normal(7, 3, 10));
  EXPECT_EQ(pr[1], normal(7, 3, 11));
}

TEST(Normal, MomentsAndLag1Correlation) {
  const int n = 400000;
  double s1 = 0, s2 = 0, s3 = 0, s4 = 0, lag = 0, prev = 0;
  for (int k = 0; k < n; ++k) {
    const double z = normal(2024, static_cast<std::uint64_t>(k % 97), static_cast<std::uint64_t>(k / 97));
    s1 += z;
    s2 += z * z;
    s3 += z * z * z;
    s4 += z * z * z * z;
    if (k > 0) lag += z * prev;
    prev = z;
  }
  const double se = 1.0 / std::sqrt(n);
  EXPECT_NEAR(s1 / n, 0.0, 5 * se);
  EXPECT_NEAR(s2 / n, 1.0, 5 * std::sqrt(2.0) * se);
  EXPECT_NEAR(s3 / n, 0.0, 5 * std::sqrt(15.0) * se);
  EXPECT_NEAR(s4 / n, 3.0, 5 * std::sqrt(96.0) * se);
  EXPECT_NEAR(lag / (n - 1), 0.0, 5 * se);
}

TEST(Normal, TailFrequencies) {
  const int n = 200000;
  int beyond2 = 0;
  for (int k = 0; k < n; ++k) beyond2 += std::abs(normal(1, 0, static_cast<std::uint64_t>(k))) > 2.0;
  const double p = 0.04550026389635842;
  EXPECT_NEAR(static_cast<double>(beyond2) / n, p, 5 * std::sqrt(p * (1 - p) / n));
}

}  // namespace
}  // namespace modeswitch::rng
