#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "cspde/parallel.hpp"
#include "cspde/random.hpp"

using cspde::Philox4x32;

// Known-answer vectors published with the Random123 reference implementation.
TEST(Philox, KnownAnswerZero) {
  const Philox4x32 gen(0);
  const auto out = gen({0, 0, 0, 0});
  EXPECT_EQ(out[0], 0x6627e8d5u);
  EXPECT_EQ(out[1], 0xe169c58du);
  EXPECT_EQ(out[2], 0xbc57ac4cu);
  EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerOnes) {
  const Philox4x32 gen(0xffffffffffffffffULL);
  const auto out = gen({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu});
  EXPECT_EQ(out[0], 0x408f276du);
  EXPECT_EQ(out[1], 0x41c83b0eu);
  EXPECT_EQ(out[2], 0xa20bc7c6u);
  EXPECT_EQ(out[3], 0x6d5451fdu);
}

TEST(Philox, KnownAnswerPi) {
  const Philox4x32 gen((0x299f31d0ULL << 32) | 0xa4093822ULL);
  const auto out = gen({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u});
  EXPECT_EQ(out[0], 0xd16cfe09u);
  EXPECT_EQ(out[1], 0x94fdccebu);
  EXPECT_EQ(out[2], 0x5001e420u);
  EXPECT_EQ(out[3], 0x24126ea1u);
}

TEST(KeyedNormal, PureFunctionOfKey) {
  using cspde::Stream;
  const double a = cspde::keyed_normal(7, Stream::kNoise, 3, 11, 2);
  const double b = cspde::keyed_normal(7, Stream::kNoise, 3, 11, 2);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, cspde::keyed_normal(7, Stream::kNoise, 3, 11, 1));
  EXPECT_NE(a, cspde::keyed_normal(7, Stream::kNoise, 4, 11, 2));
  EXPECT_NE(a, cspde::keyed_normal(7, Stream::kEnsemble, 3, 11, 2));
  EXPECT_NE(a, cspde::keyed_normal(8, Stream::kNoise, 3, 11, 2));
}

TEST(KeyedNormal, FirstMoments) {
  const std::size_t n = 200000;
  double s = 0.0, s2 = 0.0, s4 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = cspde::keyed_normal(1, cspde::Stream::kProbe, 0, static_cast<std::uint32_t>(i), 0);
    ASSERT_TRUE(std::isfinite(z));
    s += z;
    s2 += z * z;
    s4 += z * z * z * z;
  }
  const double dn = static_cast<double>(n);
  EXPECT_LT(std::abs(s / dn), 4.0 / std::sqrt(dn));
  EXPECT_NEAR(s2 / dn, 1.0, 4.0 * std::sqrt(2.0 / dn));
  EXPECT_NEAR(s4 / dn, 3.0, 4.0 * std::sqrt(96.0 / dn));
}

TEST(Parallel, ResultsIndependentOfWorkers) {
  for (std::size_t workers : {1u, 2u, 3u, 7u}) {
    std::vector<double> out(101, -1.0);
    cspde::parallel_for(out.size(), workers, [&](std::size_t i) { out[i] = std::sqrt(static_cast<double>(i)); });
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], std::sqrt(static_cast<double>(i)));
  }
}

TEST(Parallel, RethrowsWorkerException) {
  EXPECT_THROW(cspde::parallel_for(10, 3,
                                   [](std::size_t i) {
                                     if (i == 5) throw std::runtime_error("boom");
                                   }),
               std::runtime_error);
}

TEST(Parallel, PairwiseSumOrderFixed) {
  std::vector<double> v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0 / static_cast<double>(i + 1);
  EXPECT_EQ(cspde::pairwise_sum(v), cspde::pairwise_sum(v));
  EXPECT_NEAR(cspde::pairwise_sum(v), 7.485470860550345, 1e-12);
  EXPECT_EQ(cspde::pairwise_mean(std::vector<double>{}), 0.0);
}
