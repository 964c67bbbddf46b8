#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "cspde/noise.hpp"

using cspde::TimeGrid;

TEST(TimeGrid, NodesAndValidation) {
  EXPECT_THROW(TimeGrid(1.0, 0), cspde::ConfigError);
  EXPECT_THROW(TimeGrid(0.0, 10), cspde::ConfigError);
  EXPECT_THROW(TimeGrid(-1.0, 10), cspde::ConfigError);
  const TimeGrid g(0.7, 7);
  EXPECT_EQ(g.node(0), 0.0);
  EXPECT_EQ(g.node(7), 0.7);
  for (std::size_t j = 0; j < 7; ++j) EXPECT_LT(g.node(j), g.node(j + 1));
}

TEST(Noise, SmallestShape) {
  const auto n = cspde::sample_noise(TimeGrid(1.0, 1), 3, 5);
  EXPECT_EQ(n.increments.size(), 3u);
  EXPECT_EQ(n.increment(0).size(), 3u);
}

TEST(Noise, Deterministic) {
  const TimeGrid g(2.0, 50);
  const auto a = cspde::sample_noise(g, 2, 77, 3);
  const auto b = cspde::sample_noise(g, 2, 77, 3);
  EXPECT_EQ(a.increments, b.increments);
  EXPECT_NE(a.increments, cspde::sample_noise(g, 2, 78, 3).increments);
  EXPECT_NE(a.increments, cspde::sample_noise(g, 2, 77, 4).increments);
}

TEST(Noise, PooledMomentsMatchDt) {
  const TimeGrid g(1.0, 50000);
  const auto n = cspde::sample_noise(g, 2, 2024);
  const double dt = g.dt();
  const double count = static_cast<double>(n.increments.size());
  double s = 0.0, s2 = 0.0;
  for (double v : n.increments) {
    s += v;
    s2 += v * v;
  }
  const double mean = s / count;
  const double var = s2 / count - mean * mean;
  EXPECT_GE(var / dt, 0.98);
  EXPECT_LE(var / dt, 1.02);
  EXPECT_LE(std::abs(mean), 3.0 * std::sqrt(dt / count));
}

TEST(Noise, LagOneAutocorrelation) {
  const TimeGrid g(1.0, 100000);
  const auto n = cspde::sample_noise(g, 1, 31);
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < g.steps(); ++j) {
    den += n.increments[j] * n.increments[j];
    if (j + 1 < g.steps()) num += n.increments[j] * n.increments[j + 1];
  }
  EXPECT_LE(std::abs(num / den), 3.0 / std::sqrt(1e5));
}

TEST(Noise, HalvingDtHalvesVariance) {
  auto pooled = [](const TimeGrid& g) {
    const auto n = cspde::sample_noise(g, 1, 9);
    double s2 = 0.0;
    for (double v : n.increments) s2 += v * v;
    return s2 / static_cast<double>(n.increments.size());
  };
  const double coarse = pooled(TimeGrid(1.0, 100000));
  const double fine = pooled(TimeGrid(1.0, 200000));
  EXPECT_NEAR(fine / coarse, 0.5, 0.5 * 0.02);
}

TEST(Noise, ZeroPathAndCsv) {
  const TimeGrid g(1.0, 4);
  const auto z = cspde::zero_noise(g, 2);
  for (double v : z.increments) EXPECT_EQ(v, 0.0);
  std::ostringstream os;
  cspde::write_noise_csv(os, cspde::sample_noise(g, 2, 1));
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "step,time,dW_1,dW_2");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 4);
}
