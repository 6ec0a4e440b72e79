#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "neqlab/rng.hpp"

using namespace neqlab;

// Known-answer vectors from the Random123 distribution (kat_vectors, philox4x32 10 rounds).
TEST(Philox, KnownAnswers) {
  EXPECT_EQ(Philox4x32::block({0, 0, 0, 0}, {0, 0}),
            (Philox4x32::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  EXPECT_EQ(Philox4x32::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}),
            (Philox4x32::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
  EXPECT_EQ(Philox4x32::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}),
            (Philox4x32::Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(RngStream, Reproducible) {
  RngStream a(42, 7), b(42, 7);
  for (int k = 0; k < 1000; ++k) ASSERT_EQ(a.next_u32(), b.next_u32());
  RngStream c(42, 7), d(42, 7);
  for (int k = 0; k < 1000; ++k) ASSERT_EQ(c.normal(), d.normal());
}

TEST(RngStream, DistinctStreamsDiffer) {
  RngStream a(42, 0), b(42, 1), c(43, 0);
  int same_ab = 0, same_ac = 0;
  for (int k = 0; k < 1000; ++k) {
    const auto x = a.next_u32();
    same_ab += x == b.next_u32();
    same_ac += x == c.next_u32();
  }
  EXPECT_LT(same_ab, 3);
  EXPECT_LT(same_ac, 3);
}

TEST(RngStream, UniformMomentsAndRange) {
  RngStream rng(1, 2);
  const int n = 200000;
  double sum = 0, sum2 = 0;
  for (int k = 0; k < n; ++k) {
    const double u = rng.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    sum2 += u * u;
  }
  EXPECT_NEAR(sum / n, 0.5, 4 * std::sqrt(1.0 / 12 / n));
  EXPECT_NEAR(sum2 / n - (sum / n) * (sum / n), 1.0 / 12, 1e-3);
}

TEST(RngStream, NormalMoments) {
  RngStream rng(5, 9);
  const int n = 200000;
  double m1 = 0, m2 = 0, m4 = 0;
  for (int k = 0; k < n; ++k) {
    const double z = rng.normal();
    m1 += z;
    m2 += z * z;
    m4 += z * z * z * z;
  }
  EXPECT_NEAR(m1 / n, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(m2 / n, 1.0, 4.0 * std::sqrt(2.0 / n));
  EXPECT_NEAR(m4 / n, 3.0, 0.1);
}

TEST(RngStream, IndependentStreamsAreUncorrelated) {
  const int n = 100000;
  RngStream a(9, stream_id(StreamTag::trajectory, 0));
  RngStream b(9, stream_id(StreamTag::trajectory, 1));
  double cross = 0;
  for (int k = 0; k < n; ++k) cross += a.normal() * b.normal();
  EXPECT_NEAR(cross / n, 0.0, 4.0 / std::sqrt(n));
}

TEST(RngStream, BelowIsUniform) {
  RngStream rng(3, 3);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int k = 0; k < n; ++k) ++counts[rng.below(7)];
  for (int c : counts) EXPECT_NEAR(c, n / 7.0, 5 * std::sqrt(n / 7.0));
}

TEST(RngStream, DeriveIsDeterministicAndDistinct) {
  const RngStream parent(77, 5);
  RngStream a = parent.derive(3), b = parent.derive(3), c = parent.derive(4);
  EXPECT_EQ(a.stream_id(), b.stream_id());
  EXPECT_NE(a.stream_id(), c.stream_id());
  EXPECT_EQ(a.next_u64(), b.next_u64());
}
