#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "cspde/measure.hpp"

using cspde::Ensemble;
namespace dist = cspde::dist;

TEST(Ensemble, RejectsInvalidWeights) {
  EXPECT_THROW(Ensemble(1, {0.0, 1.0}, {0.5, 0.6}), cspde::ConfigError);
  EXPECT_THROW(Ensemble(1, {0.0, 1.0}, {1.5, -0.5}), cspde::ConfigError);
  EXPECT_THROW(Ensemble(1, {}, {}), cspde::ConfigError);
  EXPECT_THROW(Ensemble(1, {std::nan("")}, {1.0}), cspde::ConfigError);
  EXPECT_THROW(Ensemble(2, {0.0, 1.0, 2.0}, {1.0}), cspde::ConfigError);
  EXPECT_NO_THROW(Ensemble(1, {0.0, 1.0}, {0.5, 0.5 + 5e-13}));
}

TEST(EnsembleFromSpec, PointMassSingle) {
  const auto e = cspde::ensemble_from_spec(dist::PointMass{{0.0}}, 1, 123);
  EXPECT_EQ(e, Ensemble(1, {0.0}, {1.0}));
}

TEST(EnsembleFromSpec, UniformGridUnitInterval) {
  const auto e = cspde::ensemble_from_spec(dist::UniformGrid{{0.0}, {1.0}}, 3, 0);
  ASSERT_EQ(e.size(), 3u);
  EXPECT_EQ(e.point(0)[0], 0.0);
  EXPECT_EQ(e.point(1)[0], 0.5);
  EXPECT_EQ(e.point(2)[0], 1.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(e.weight(i), 1.0 / 3.0);
}

TEST(EnsembleFromSpec, GaussianDeterministicAndCentred) {
  const std::size_t n = 10000;
  const auto a = cspde::ensemble_from_spec(dist::Gaussian{{0.0}, 1.0}, n, 42);
  const auto b = cspde::ensemble_from_spec(dist::Gaussian{{0.0}, 1.0}, n, 42);
  EXPECT_EQ(a, b);
  EXPECT_LE(std::abs(cspde::mean(a)[0]), 3.0 / std::sqrt(static_cast<double>(n)));
  EXPECT_NE(a, cspde::ensemble_from_spec(dist::Gaussian{{0.0}, 1.0}, n, 43));
}

TEST(EnsembleFromSpec, RejectsZeroCount) {
  EXPECT_THROW(cspde::ensemble_from_spec(dist::PointMass{{0.0}}, 0, 0), cspde::ConfigError);
}

TEST(EnsembleFromSpec, ExplicitValidated) {
  EXPECT_THROW(cspde::ensemble_from_spec(dist::Explicit{1, {0.0, 1.0}, {0.7, 0.7}}, 2, 0), cspde::ConfigError);
  EXPECT_THROW(cspde::ensemble_from_spec(dist::Explicit{1, {0.0, 1.0}, {1.2, -0.2}}, 2, 0), cspde::ConfigError);
}

TEST(Pushforward, IdentityTranslationConstant) {
  const auto e = Ensemble::uniform(1, {0.0, 1.0});
  EXPECT_EQ(cspde::pushforward(e, {0.0, 1.0}), e);
  const auto t = cspde::pushforward(e, {2.0, 3.0});
  EXPECT_EQ(t, Ensemble::uniform(1, {2.0, 3.0}));
  const auto c = cspde::pushforward(Ensemble::uniform(1, {-1.0, 0.0, 4.0}), {7.0, 7.0, 7.0});
  double mass_at_a = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(c.point(i)[0], 7.0);
    mass_at_a += c.weight(i);
  }
  EXPECT_NEAR(mass_at_a, 1.0, 1e-15);
  EXPECT_THROW(cspde::pushforward(e, {1.0}), cspde::ConfigError);
}

TEST(Pushforward, MassConservedUnderRandomMaps) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 1 + rep % 9, d = 1 + rep % 3;
    std::vector<double> pts(n * d), w(n), img(n * d);
    double total = 0.0;
    for (auto& v : w) total += (v = u(rng));
    for (auto& v : w) v /= total;
    double renorm = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) renorm += w[i];
    w[n - 1] = 1.0 - renorm;
    for (auto& v : pts) v = u(rng);
    for (auto& v : img) v = 10.0 * u(rng) - 5.0;
    const Ensemble e(d, pts, w);
    const auto p = cspde::pushforward(e, img);
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(p.weight(i), e.weight(i));
  }
}

TEST(SecondMoment, Examples) {
  EXPECT_EQ(cspde::second_moment(cspde::ensemble_from_spec(dist::PointMass{{0.0}}, 1, 0)), 0.0);
  EXPECT_DOUBLE_EQ(cspde::second_moment(Ensemble::uniform(1, {-1.0, 1.0})), 1.0);
  EXPECT_NEAR(cspde::second_moment(Ensemble::uniform(1, {0.0, 1.0, 2.0})), 5.0 / 3.0, 1e-15);
}

TEST(EnsembleCsv, RoundTripAndErrors) {
  std::istringstream ok("x_1,x_2,weight\n0,1,0.25\n2,3,0.75\n");
  const auto e = cspde::load_ensemble_csv(ok);
  EXPECT_EQ(e.dim(), 2u);
  EXPECT_EQ(e.size(), 2u);
  EXPECT_EQ(e.point(1)[1], 3.0);
  EXPECT_EQ(e.weight(0), 0.25);
  std::istringstream bad("x_1,weight\n0,0.5\n1,0.6\n");
  EXPECT_THROW(cspde::load_ensemble_csv(bad), cspde::ConfigError);
  std::istringstream ragged("x_1,weight\n0,0.5,3\n");
  EXPECT_THROW(cspde::load_ensemble_csv(ragged), cspde::ConfigError);
}
