#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "cspde/wasserstein.hpp"

using cspde::Ensemble;
using cspde::W2Method;
using cspde::W2Options;

namespace {

Ensemble random_ensemble(std::mt19937_64& rng, std::size_t n, std::size_t d, bool equal) {
  std::uniform_real_distribution<double> u(-2.0, 2.0), w(0.1, 1.0);
  std::vector<double> pts(n * d), wts(n);
  for (auto& v : pts) v = u(rng);
  if (equal) return Ensemble::uniform(d, pts);
  double total = 0.0;
  for (auto& v : wts) total += (v = w(rng));
  for (auto& v : wts) v /= total;
  double head = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) head += wts[i];
  wts[n - 1] = 1.0 - head;
  return Ensemble(d, pts, wts);
}

// Brute force over all permutations: exact W_2 for equal-weight ensembles of size n.
double brute_force_w2(const Ensemble& a, const Ensemble& b) {
  std::vector<std::size_t> perm(a.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) c += cspde::detail::squared_distance(a.point(i), b.point(perm[i]));
    best = std::min(best, c / static_cast<double>(a.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::sqrt(best);
}

}  // namespace

TEST(W2, PointMasses) {
  const std::vector<double> a = {0.5}, b = {-1.75};
  EXPECT_EQ(cspde::wasserstein2(Ensemble::point_mass(a), Ensemble::point_mass(b)).value, 2.25);
  const std::vector<double> p = {0.0, 0.0}, q = {3.0, 4.0};
  EXPECT_DOUBLE_EQ(cspde::wasserstein2(Ensemble::point_mass(p), Ensemble::point_mass(q)).value, 5.0);
}

TEST(W2, IdenticalIsZero) {
  std::mt19937_64 rng(1);
  for (std::size_t d : {1u, 2u}) {
    const auto a = random_ensemble(rng, 7, d, d == 1 ? false : true);
    EXPECT_EQ(cspde::wasserstein2(a, a).value, 0.0);
  }
}

TEST(W2, TwoPointExample) {
  const auto r = cspde::wasserstein2(Ensemble::uniform(1, {0.0, 1.0}), Ensemble::uniform(1, {0.0, 2.0}));
  EXPECT_NEAR(r.value, 0.70710678118655, 1e-14);
  EXPECT_EQ(r.method, W2Method::kExact1D);
}

TEST(W2, MethodSelection) {
  std::mt19937_64 rng(2);
  const auto a = random_ensemble(rng, 5, 2, true), b = random_ensemble(rng, 5, 2, true);
  EXPECT_EQ(cspde::wasserstein2(a, b).method, W2Method::kAssignment);
  const auto c = random_ensemble(rng, 5, 2, false);
  const auto rc = cspde::wasserstein2(a, c);
  EXPECT_EQ(rc.method, W2Method::kEntropic);
  EXPECT_GT(rc.reg, 0.0);
  EXPECT_GT(rc.iterations, 0u);
  EXPECT_THROW(cspde::wasserstein2(a, Ensemble::uniform(1, {0.0})), cspde::ConfigError);
}

TEST(W2, AssignmentMatchesBruteForce) {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const auto a = random_ensemble(rng, 6, 2, true), b = random_ensemble(rng, 6, 2, true);
    EXPECT_NEAR(cspde::wasserstein2(a, b).value, brute_force_w2(a, b), 1e-12);
  }
}

TEST(W2, Exact1DMatchesBruteForceOnEqualWeights) {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    const auto a = random_ensemble(rng, 6, 1, true), b = random_ensemble(rng, 6, 1, true);
    EXPECT_NEAR(cspde::wasserstein2(a, b).value, brute_force_w2(a, b), 1e-12);
  }
}

TEST(W2, MetricAxiomsRandomTriples1D) {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 200; ++rep) {
    const auto a = random_ensemble(rng, 1 + rep % 7, 1, false);
    const auto b = random_ensemble(rng, 1 + (rep * 3) % 5, 1, false);
    const auto c = random_ensemble(rng, 1 + (rep * 5) % 6, 1, false);
    const double ab = cspde::wasserstein2(a, b).value, ba = cspde::wasserstein2(b, a).value;
    const double bc = cspde::wasserstein2(b, c).value, ac = cspde::wasserstein2(a, c).value;
    EXPECT_EQ(ab, ba);
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ac, ab + bc + 1e-9);
  }
}

TEST(W2, SecondMomentIsDistanceToOrigin) {
  std::mt19937_64 rng(6);
  const std::vector<double> zero = {0.0};
  for (int rep = 0; rep < 50; ++rep) {
    const auto a = random_ensemble(rng, 1 + rep % 11, 1, false);
    const double w = cspde::wasserstein2(a, Ensemble::point_mass(zero)).value;
    EXPECT_NEAR(w * w, cspde::second_moment(a), 1e-9);
  }
}

TEST(W2, EntropicConvergesToAssignment) {
  std::mt19937_64 rng(7);
  for (std::size_t n : {8u, 32u, 64u}) {
    const auto a = random_ensemble(rng, n, 2, true), b = random_ensemble(rng, n, 2, true);
    const double exact = cspde::wasserstein2(a, b).value;
    double previous_error = INFINITY;
    for (double reg : {1e-1, 1e-2, 1e-3}) {
      W2Options opts;
      opts.method = W2Method::kEntropic;
      opts.reg_relative = reg;
      const double approx = cspde::wasserstein2(a, b, opts).value;
      const double err = std::abs(approx - exact) / exact;
      EXPECT_LE(err, previous_error + 1e-3);
      previous_error = err;
    }
    EXPECT_LE(previous_error, 0.01) << "n = " << n;
  }
}

TEST(W2, EntropicNonConvergenceReported) {
  std::mt19937_64 rng(8);
  const auto a = random_ensemble(rng, 20, 2, false), b = random_ensemble(rng, 20, 2, false);
  W2Options opts;
  opts.max_iterations = 3;
  opts.tolerance = 1e-14;
  try {
    cspde::wasserstein2(a, b, opts);
    FAIL() << "expected ConvergenceError";
  } catch (const cspde::ConvergenceError& e) {
    EXPECT_GT(e.iterations(), 0u);
    EXPECT_GT(e.residual(), 0.0);
  }
}

TEST(W2, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  for (bool one_d : {true, false}) {
    const auto a = random_ensemble(rng, 5, one_d ? 1 : 2, !one_d);
    const auto b = random_ensemble(rng, 5, one_d ? 1 : 2, true);
    const auto g = cspde::wasserstein2_squared_gradient(a, b);
    std::vector<double> pts(a.points().begin(), a.points().end());
    const double h = 1e-6;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      auto up = pts, dn = pts;
      up[k] += h;
      dn[k] -= h;
      const double fu = std::pow(cspde::wasserstein2(cspde::pushforward(a, up), b).value, 2);
      const double fd = std::pow(cspde::wasserstein2(cspde::pushforward(a, dn), b).value, 2);
      EXPECT_NEAR(g.gradient[k], (fu - fd) / (2 * h), 1e-6);
    }
  }
}

TEST(W2, TranslationInvariance) {
  const auto a = Ensemble::uniform(1, {-1.0, 0.3, 2.0});
  for (double v : {0.5, -1.25, 3.0}) {
    const auto b = cspde::pushforward(a, {-1.0 + v, 0.3 + v, 2.0 + v});
    EXPECT_NEAR(cspde::wasserstein2(a, b).value, std::abs(v), 1e-14);
  }
}
