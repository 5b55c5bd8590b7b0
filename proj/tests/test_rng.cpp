#include <gtest/gtest.h>

#include <cmath>

#include "vlift/rng.hpp"

using vlift::Philox4x32;
using vlift::PathNoise;

TEST(Philox, KnownAnswerZero) {
  const auto r = Philox4x32::apply({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(r, (Philox4x32::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
}

TEST(Philox, KnownAnswerOnes) {
  const auto r = Philox4x32::apply({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(r, (Philox4x32::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
}

TEST(Philox, KnownAnswerPi) {
  const auto r = Philox4x32::apply({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
  EXPECT_EQ(r, (Philox4x32::Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(PathNoise, PureFunctionOfAddress) {
  const PathNoise a(42), b(42);
  EXPECT_EQ(a.normals(7, 3, 5), b.normals(7, 3, 5));
  // Drawing other slots first changes nothing.
  (void)a.normals(1, 1, 3);
  EXPECT_EQ(a.normals(7, 3, 5), b.normals(7, 3, 5));
  EXPECT_NE(a.normals(7, 3, 5), a.normals(7, 4, 5));
  EXPECT_NE(a.normals(7, 3, 5), a.normals(8, 3, 5));
  EXPECT_NE(a.normals(7, 3, 5, 0), a.normals(7, 3, 5, 1));
  EXPECT_NE(PathNoise(1).normals(0, 0, 2), PathNoise(2).normals(0, 0, 2));
}

TEST(PathNoise, PrefixOfLongerVector) {
  const PathNoise n(9);
  EXPECT_EQ(n.normals(3, 2, 3), n.normals(3, 2, 4).head(3));
}

TEST(PathNoise, StandardNormalMoments) {
  const PathNoise n(2024);
  const int count = 200000;
  double s1 = 0, s2 = 0, s4 = 0, lag = 0, prev = 0;
  for (int i = 0; i < count / 2; ++i) {
    const auto z = n.normals(i, i % 17, 2);
    for (int j = 0; j < 2; ++j) {
      s1 += z[j];
      s2 += z[j] * z[j];
      s4 += std::pow(z[j], 4);
      lag += z[j] * prev;
      prev = z[j];
    }
  }
  const double mean = s1 / count, var = s2 / count, kurt = s4 / count;
  EXPECT_NEAR(mean, 0.0, 5.0 / std::sqrt(count));
  EXPECT_NEAR(var, 1.0, 5.0 * std::sqrt(2.0 / count));
  EXPECT_NEAR(kurt, 3.0, 5.0 * std::sqrt(96.0 / count));
  EXPECT_NEAR(lag / count, 0.0, 5.0 / std::sqrt(count));
}

TEST(PathNoise, IncrementVariance) {
  const PathNoise n(5);
  const double dt = 0.01;
  double s2 = 0;
  const int count = 50000;
  for (int i = 0; i < count; ++i) s2 += std::pow(n.increment(i, 0, 1, dt)[0], 2);
  EXPECT_NEAR(s2 / count, dt, 5.0 * dt * std::sqrt(2.0 / count));
}
