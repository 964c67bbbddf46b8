#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <sstream>
#include <vector>

#include "cspde/flow.hpp"
#include "cspde/ldp.hpp"
#include "cspde/stats.hpp"
#include "cspde/wasserstein.hpp"

using cspde::ControlPath;
using cspde::Ensemble;
using cspde::FlowTrajectory;
using cspde::NoisePath;
using cspde::TimeGrid;
namespace fields = cspde::fields;

namespace {

// Geometric Brownian motion, dX = sigma X dW, used where noise must depend on the state.
cspde::CoefficientField geometric(double sigma) {
  cspde::CoefficientField f;
  f.name = "geometric";
  f.dim = 1;
  f.modes = 1;
  f.features = [](cspde::ConstVec, cspde::MutVec) {};
  f.drift = [](double, cspde::ConstVec, cspde::ConstVec, cspde::MutVec out) { out[0] = 0.0; };
  f.diffusion = [sigma](double, cspde::ConstVec x, cspde::ConstVec, cspde::MutVec out) { out[0] = sigma * x[0]; };
  return f;
}

// Coarse increments are sums of the fine ones, so both grids see one Brownian path.
NoisePath coarsen(const NoisePath& fine, std::size_t steps) {
  const std::size_t ratio = fine.grid.steps() / steps;
  NoisePath out{TimeGrid(fine.grid.horizon(), steps), fine.modes, fine.seed, fine.replica,
                std::vector<double>(steps * fine.modes, 0.0)};
  for (std::size_t j = 0; j < fine.grid.steps(); ++j) {
    for (std::size_t k = 0; k < fine.modes; ++k) out.increments[(j / ratio) * fine.modes + k] += fine.increment(j)[k];
  }
  return out;
}

struct OrderFit {
  double strong;
  double weak;
};

OrderFit coupled_orders(const cspde::CoefficientField& field, double x0, double eps, std::size_t replicas) {
  const std::size_t ref_steps = 2048;
  const std::vector<std::size_t> levels = {8, 16, 32, 64};
  const Ensemble init = Ensemble::uniform(1, {x0});
  std::vector<double> strong(levels.size(), 0.0), weak(levels.size(), 0.0);
  for (std::size_t r = 0; r < replicas; ++r) {
    const auto fine = cspde::sample_noise(TimeGrid(1.0, ref_steps), 1, 404, static_cast<std::uint32_t>(r));
    const double ref = cspde::solve_sde(field, init, fine, eps, fine.grid).state(ref_steps, 0)[0];
    for (std::size_t l = 0; l < levels.size(); ++l) {
      const auto coarse = coarsen(fine, levels[l]);
      const double x = cspde::solve_sde(field, init, coarse, eps, coarse.grid).state(levels[l], 0)[0];
      strong[l] += std::abs(x - ref);
      weak[l] += x - ref;
    }
  }
  std::vector<double> dts, s, w;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    dts.push_back(1.0 / static_cast<double>(levels[l]));
    s.push_back(strong[l] / static_cast<double>(replicas));
    w.push_back(std::abs(weak[l]) / static_cast<double>(replicas));
  }
  return {cspde::stats::loglog_fit(dts, s).slope, cspde::stats::loglog_fit(dts, w).slope};
}

}  // namespace

TEST(SolveSde, FrozenFlowIsExact) {
  const TimeGrid grid(1.0, 50);
  const Ensemble init = Ensemble::uniform(2, {0.5, -1.0, 3.0, 2.0});
  const auto traj = cspde::solve_sde(fields::constant(0.0, 0.0, 2), init, cspde::sample_noise(grid, 2, 1), 0.3, grid);
  for (std::size_t j = 0; j <= 50; ++j) {
    for (std::size_t p = 0; p < 2; ++p) {
      for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(traj.state(j, p)[i], init.point(p)[i]);
    }
  }
}

TEST(SolveSde, ConstantDriftReachesOne) {
  const TimeGrid grid(1.0, 64);
  const auto traj = cspde::solve_sde(fields::constant(0.0, 1.0), Ensemble::uniform(1, {0.0}),
                                     cspde::sample_noise(grid, 1, 2), 1.0, grid);
  EXPECT_EQ(traj.state(64, 0)[0], 1.0);
}

TEST(SolveSde, LinearDecayFirstOrder) {
  std::vector<double> dts, errs;
  for (std::size_t M : {16u, 32u, 64u, 128u, 256u}) {
    const TimeGrid grid(1.0, M);
    const auto traj = cspde::solve_sde(fields::linear(-1.0, 0.0), Ensemble::uniform(1, {1.0}), cspde::zero_noise(grid, 1),
                                       0.0, grid);
    dts.push_back(grid.dt());
    errs.push_back(std::abs(traj.state(M, 0)[0] - std::exp(-1.0)));
    EXPECT_LE(errs.back(), 0.2 * grid.dt());
  }
  EXPECT_NEAR(cspde::stats::loglog_fit(dts, errs).slope, 1.0, 0.05);
}

TEST(SolveSde, InitialLayerAndWeightsPreserved) {
  const TimeGrid grid(1.0, 20);
  const Ensemble init(1, {-1.0, 0.0, 2.0}, {0.2, 0.3, 0.5});
  const auto traj = cspde::solve_sde(fields::mean_field(-1.0, 0.5, 1.0), init, cspde::sample_noise(grid, 1, 3), 0.5, grid,
                                     {7.0});
  for (std::size_t p = 0; p < 3; ++p) EXPECT_EQ(traj.state(0, p)[0], init.point(p)[0]);
  EXPECT_EQ(traj.state(0, 3)[0], 7.0);
  for (const auto& mu : cspde::measure_path(traj)) {
    ASSERT_EQ(mu.size(), 3u);
    for (std::size_t p = 0; p < 3; ++p) EXPECT_EQ(mu.weight(p), init.weight(p));
  }
}

TEST(SolveSde, EvalPointsDoNotInfluenceParticles) {
  const TimeGrid grid(1.0, 40);
  const Ensemble init = Ensemble::uniform(1, {-1.0, 1.5});
  const auto noise = cspde::sample_noise(grid, 1, 8);
  const auto field = fields::mean_field(-1.0, 1.0, 1.0);
  const auto bare = cspde::solve_sde(field, init, noise, 0.2, grid);
  const auto with = cspde::solve_sde(field, init, noise, 0.2, grid, {100.0, -50.0});
  for (std::size_t j = 0; j <= 40; ++j) {
    for (std::size_t p = 0; p < 2; ++p) EXPECT_EQ(bare.state(j, p)[0], with.state(j, p)[0]);
  }
}

TEST(SolveSde, CommonNoiseMovesParticlesTogether) {
  // With V = 0 and constant G, every particle receives the same displacement.
  const TimeGrid grid(1.0, 30);
  const auto traj = cspde::solve_sde(fields::constant(1.0, 0.0), Ensemble::uniform(1, {0.0, 5.0}),
                                     cspde::sample_noise(grid, 1, 5), 1.0, grid);
  for (std::size_t j = 0; j <= 30; ++j) EXPECT_NEAR(traj.state(j, 1)[0] - traj.state(j, 0)[0], 5.0, 1e-12);
}

TEST(SolveSde, Mismatches) {
  const TimeGrid grid(1.0, 10);
  const Ensemble init = Ensemble::uniform(1, {0.0});
  EXPECT_THROW(cspde::solve_sde(fields::linear(-1.0, 1.0), init, cspde::sample_noise(TimeGrid(1.0, 11), 1, 1), 0.1, grid),
               cspde::ConfigError);
  EXPECT_THROW(cspde::solve_sde(fields::linear(-1.0, 1.0), init, cspde::sample_noise(grid, 2, 1), 0.1, grid),
               cspde::ConfigError);
  EXPECT_THROW(cspde::solve_sde(fields::linear(-1.0, 1.0), init, cspde::sample_noise(grid, 1, 1), -0.1, grid),
               cspde::ConfigError);
  EXPECT_THROW(cspde::solve_sde(fields::linear(-1.0, 1.0, 2), init, cspde::sample_noise(grid, 2, 1), 0.1, grid),
               cspde::ConfigError);
}

TEST(SolveSde, BlowUpIsReported) {
  const TimeGrid grid(1.0, 40);
  const auto f = fields::linear(1e12, 0.0);
  try {
    cspde::solve_sde(f, Ensemble::uniform(1, {1.0}), cspde::zero_noise(grid, 1), 0.0, grid);
    FAIL() << "expected a numerical error";
  } catch (const cspde::NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
}

TEST(SolveSde, StrongAndWeakOrderAdditiveNoise) {
  // Additive noise makes Euler-Maruyama coincide with Milstein, so the strong order is one.
  const auto fit = coupled_orders(fields::linear(-1.0, 1.0), 1.0, 1.0, 200);
  EXPECT_NEAR(fit.strong, 1.0, 0.2);
  EXPECT_NEAR(fit.weak, 1.0, 0.2);
}

TEST(SolveSde, StrongOrderHalfMultiplicativeNoise) {
  const auto fit = coupled_orders(geometric(1.0), 1.0, 1.0, 400);
  EXPECT_NEAR(fit.strong, 0.5, 0.2);
}

TEST(SolveControlled, ZeroControlMatchesSdeBitwise) {
  const TimeGrid grid(1.0, 64);
  const Ensemble init = Ensemble::uniform(1, {-0.5, 0.25, 1.0});
  const auto noise = cspde::sample_noise(grid, 1, 17);
  for (const auto& f : {fields::linear(-1.0, 1.0), fields::time_varying(1.0), fields::mean_field(-1.0, 1.0, 0.7)}) {
    const auto a = cspde::solve_sde(f, init, noise, 0.3, grid, {2.0});
    const auto b = cspde::solve_controlled(f, init, noise, 0.3, ControlPath::zero(grid, 1), grid, {2.0});
    ASSERT_EQ(a.raw().size(), b.raw().size());
    for (std::size_t e = 0; e < a.raw().size(); ++e) EXPECT_EQ(a.raw()[e], b.raw()[e]);
  }
}

TEST(SolveControlled, ConstantControlDeterministic) {
  const TimeGrid grid(2.0, 64);
  const double c = 0.75;
  const auto traj = cspde::solve_controlled(fields::constant(1.0, 0.0), Ensemble::uniform(1, {0.0}),
                                            cspde::sample_noise(grid, 1, 1), 0.0, ControlPath::constant(grid, std::vector{c}),
                                            grid);
  EXPECT_EQ(traj.state(64, 0)[0], c * 2.0);
}

TEST(SolveControlled, SmallNoiseMeanMatchesGaussianLaw) {
  const TimeGrid grid(1.0, 50);
  const double c = 0.6, eps = 0.01;
  const auto h = ControlPath::constant(grid, std::vector{c});
  std::vector<double> xs;
  for (std::uint32_t r = 0; r < 200; ++r) {
    const auto traj = cspde::solve_controlled(fields::constant(1.0, 0.0), Ensemble::uniform(1, {0.0}),
                                              cspde::sample_noise(grid, 1, 99, r), eps, h, grid);
    xs.push_back(traj.state(50, 0)[0]);
  }
  const auto mv = cspde::stats::mean_var(xs);
  EXPECT_LE(std::abs(mv.mean - c), 3.0 * std::sqrt(eps / 200.0));
  EXPECT_NEAR(mv.variance, eps, 0.3 * eps);
}

TEST(SolveSkeleton, IdentityFlow) {
  const TimeGrid grid(1.0, 16);
  const Ensemble init = Ensemble::uniform(1, {-0.3, 0.9});
  const auto traj = cspde::solve_skeleton(fields::constant(1.0, 0.0), init, ControlPath::zero(grid, 1), grid);
  for (std::size_t j = 0; j <= 16; ++j) {
    EXPECT_EQ(traj.state(j, 0)[0], -0.3);
    EXPECT_EQ(traj.state(j, 1)[0], 0.9);
  }
}

TEST(SolveSkeleton, AffineExactness) {
  const TimeGrid grid(1.5, 37);
  const auto traj = cspde::solve_skeleton(fields::constant(1.0, 0.0), Ensemble::uniform(1, {0.4}),
                                          ControlPath::constant(grid, std::vector{-1.2}), grid);
  EXPECT_NEAR(traj.state(37, 0)[0], 0.4 - 1.2 * 1.5, 1e-10);
}

TEST(SolveSkeleton, VariationOfConstantsSecondOrder) {
  const double exact = 1.0 - std::exp(-1.0);
  std::vector<double> dts, errs;
  for (std::size_t M : {8u, 16u, 32u, 64u, 128u}) {
    const TimeGrid grid(1.0, M);
    const auto traj = cspde::solve_skeleton(fields::linear(-1.0, 1.0), Ensemble::uniform(1, {0.0}),
                                            ControlPath::constant(grid, std::vector{1.0}), grid);
    dts.push_back(grid.dt());
    errs.push_back(std::abs(traj.state(M, 0)[0] - exact));
  }
  EXPECT_LE(errs.back(), 1e-5);
  EXPECT_NEAR(cspde::stats::loglog_fit(dts, errs).slope, 2.0, 0.2);
}

TEST(SolveSkeleton, SecondOrderWithMeasureCoupling) {
  // With a symmetric ensemble the mean stays fixed at its initial value c, so
  // x' = -x + c has the closed form c + (x0 - c) e^{-t}.
  const Ensemble init = Ensemble::uniform(1, {0.0, 2.0});
  std::vector<double> dts, errs;
  for (std::size_t M : {8u, 16u, 32u, 64u}) {
    const TimeGrid grid(1.0, M);
    const auto traj = cspde::solve_skeleton(fields::mean_field(-1.0, 1.0, 0.0), init, ControlPath::zero(grid, 1), grid);
    dts.push_back(grid.dt());
    errs.push_back(std::abs(traj.state(M, 0)[0] - (1.0 - std::exp(-1.0))));
  }
  EXPECT_NEAR(cspde::stats::loglog_fit(dts, errs).slope, 2.0, 0.2);
}

TEST(SolveSkeleton, EulerModeMatchesControlledAtZeroNoiseBitwise) {
  const TimeGrid grid(1.0, 40);
  const Ensemble init = Ensemble::uniform(1, {-1.0, 0.5, 2.0});
  const auto h = ControlPath::from_function(grid, 1, [](double t, std::span<double> out) { out[0] = std::cos(3.0 * t); });
  for (const auto& f : {fields::time_varying(1.0), fields::mean_field(-1.0, 1.0, 1.0)}) {
    const auto a = cspde::solve_skeleton(f, init, h, grid, {3.0}, cspde::SkeletonScheme::kEuler);
    const auto b = cspde::solve_controlled(f, init, cspde::sample_noise(grid, 1, 4), 0.0, h, grid, {3.0});
    for (std::size_t e = 0; e < a.raw().size(); ++e) EXPECT_EQ(a.raw()[e], b.raw()[e]);
  }
}

TEST(SupNorm, Examples) {
  const TimeGrid grid(1.0, 4);
  const auto a = cspde::solve_skeleton(fields::constant(1.0, 0.0), Ensemble::uniform(1, {2.0}), ControlPath::zero(grid, 1),
                                       grid, {0.0});
  EXPECT_EQ(cspde::weighted_sup_norm(a, a, {}), 0.0);

  FlowTrajectory b = a;
  for (std::size_t j = 1; j <= 4; ++j) {
    for (std::size_t p = 0; p < 2; ++p) b.state(j, p)[0] += 1.0;
  }
  EXPECT_DOUBLE_EQ(cspde::weighted_sup_norm(a, b, {}), 1.0);

  const auto c = cspde::solve_skeleton(fields::constant(1.0, 0.0), Ensemble::uniform(1, {2.0}), ControlPath::zero(grid, 1), grid);
  FlowTrajectory e = c;
  for (std::size_t j = 1; j <= 4; ++j) e.state(j, 0)[0] += 1.0;
  EXPECT_NEAR(cspde::weighted_sup_norm(c, e, {0.25, 6}), 0.29599685885718, 1e-12);
}

TEST(SupNorm, DominatedByPlainNorm) {
  const TimeGrid grid(1.0, 32);
  const Ensemble init = Ensemble::uniform(1, {-2.0, 0.0, 1.0});
  const auto eval = cspde::default_eval_points(1, 8.0);
  for (std::uint32_t r = 0; r < 20; ++r) {
    const auto noise = cspde::sample_noise(grid, 1, 6, r);
    const auto a = cspde::solve_sde(fields::time_varying(1.0), init, noise, 0.5, grid, eval);
    const auto b = cspde::solve_skeleton(fields::time_varying(1.0), init, ControlPath::zero(grid, 1), grid, eval);
    const double w = cspde::weighted_sup_norm(a, b, {});
    EXPECT_GT(w, 0.0);
    EXPECT_LE(w, cspde::plain_sup_norm(a, b));
  }
}

TEST(SupNorm, RejectsMismatchedTrajectories) {
  const TimeGrid grid(1.0, 4);
  const auto a = cspde::solve_skeleton(fields::constant(1.0, 0.0), Ensemble::uniform(1, {0.0}), ControlPath::zero(grid, 1), grid);
  const auto b = cspde::solve_skeleton(fields::constant(1.0, 0.0), Ensemble::uniform(1, {0.5}), ControlPath::zero(grid, 1), grid);
  EXPECT_THROW(cspde::weighted_sup_norm(a, b, {}), cspde::ConfigError);
  const TimeGrid other(1.0, 5);
  const auto c = cspde::solve_skeleton(fields::constant(1.0, 0.0), Ensemble::uniform(1, {0.0}), ControlPath::zero(other, 1), other);
  EXPECT_THROW(cspde::weighted_sup_norm(a, c, {}), cspde::ConfigError);
}

TEST(NormSpec, Validation) {
  EXPECT_NO_THROW(cspde::NormSpec{}.validate(1));
  EXPECT_THROW((cspde::NormSpec{0.4, 6}.validate(1)), cspde::ConfigError);
  EXPECT_THROW((cspde::NormSpec{0.25, 5}.validate(1)), cspde::ConfigError);
  EXPECT_THROW((cspde::NormSpec{0.25, 4}.validate(1)), cspde::ConfigError);
  EXPECT_THROW((cspde::NormSpec{0.25, 6}.validate(3)), cspde::ConfigError);
  EXPECT_NO_THROW((cspde::NormSpec{0.25, 8}.validate(3)));
}

TEST(MeasurePath, TranslationFlow) {
  const TimeGrid grid(1.0, 10);
  const double v = 0.8;
  const Ensemble init(1, {-1.0, 0.0, 3.0}, {0.5, 0.25, 0.25});
  const auto traj = cspde::solve_skeleton(fields::constant(1.0, v), init, ControlPath::zero(grid, 1), grid);
  const auto path = cspde::measure_path(traj);
  ASSERT_EQ(path.size(), 11u);
  for (std::size_t j = 0; j <= 10; ++j) {
    EXPECT_NEAR(cspde::wasserstein2(path[j], init).value, v * grid.node(j), 1e-12);
    for (std::size_t p = 0; p < 3; ++p) EXPECT_EQ(path[j].weight(p), init.weight(p));
  }
}

TEST(MeasurePath, IdentityFlowIsConstant) {
  const TimeGrid grid(1.0, 5);
  const Ensemble init(1, {-1.0, 2.0}, {0.3, 0.7});
  const auto path = cspde::measure_path(cspde::solve_skeleton(fields::constant(1.0, 0.0), init, ControlPath::zero(grid, 1), grid));
  for (const auto& mu : path) {
    for (std::size_t p = 0; p < 2; ++p) {
      EXPECT_EQ(mu.point(p)[0], init.point(p)[0]);
      EXPECT_EQ(mu.weight(p), init.weight(p));
    }
  }
}

TEST(Export, CsvAndBinaryLayout) {
  const TimeGrid grid(1.0, 3);
  const auto traj = cspde::solve_skeleton(fields::constant(1.0, 1.0, 2), Ensemble::uniform(2, {0.0, 0.0}),
                                          ControlPath::zero(grid, 2), grid, {1.0, 1.0});
  std::ostringstream csv;
  cspde::write_trajectory_csv(csv, traj);
  std::istringstream is(csv.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "step,time,particle,x_1,x_2");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 4 * 2);

  std::ostringstream bin;
  cspde::write_trajectory_binary(bin, traj);
  const std::string s = bin.str();
  ASSERT_EQ(s.size(), 3 * sizeof(std::uint64_t) + 4 * 2 * 2 * sizeof(double));
  std::uint64_t header[3];
  std::memcpy(header, s.data(), sizeof(header));
  EXPECT_EQ(header[0], 2u);
  EXPECT_EQ(header[1], 2u);
  EXPECT_EQ(header[2], 3u);
  double last;
  std::memcpy(&last, s.data() + s.size() - sizeof(double), sizeof(double));
  EXPECT_EQ(last, traj.state(3, 1)[1]);
}

TEST(FlowProperties, LipschitzRatioUniformInSeparation) {
  const TimeGrid grid(1.0, 100);
  const Ensemble init = Ensemble::uniform(1, {-0.5, 0.5});
  for (const auto& name : fields::builtin_names()) {
    const auto f = fields::builtin(name, {}, 1);
    const auto rep = cspde::flow_lipschitz_check(f, init, {0.3}, {1e-2, 1e-1, 1.0}, 0.5, 100, 21, grid);
    ASSERT_EQ(rep.rows.size(), 3u);
    EXPECT_TRUE(rep.uniform) << name << " max/min=" << rep.max_over_min;
  }
}

TEST(FlowProperties, MomentRatioUniformInStart) {
  const TimeGrid grid(1.0, 100);
  const Ensemble init = Ensemble::uniform(1, {0.0, 1.0});
  for (const auto& name : fields::builtin_names()) {
    const auto f = fields::builtin(name, {}, 1);
    const auto rep = cspde::moment_bounds_check(f, init, {0.0, 1.0, 4.0, 16.0}, 2, 1.0, 100, 22, grid);
    ASSERT_EQ(rep.rows.size(), 4u);
    EXPECT_TRUE(rep.uniform) << name << " max/min=" << rep.max_over_min;
  }
}
