#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "cspde/coefficients.hpp"
#include "cspde/errors.hpp"
#include "cspde/flow.hpp"
#include "cspde/noise.hpp"
#include "cspde/parallel.hpp"
#include "cspde/stats.hpp"

namespace cspde {

/// Compactly supported C^2 test function with its gradient and Hessian (d x d, row-major).
struct TestFunction {
  std::function<double(ConstVec x)> phi;
  std::function<void(ConstVec x, MutVec out)> grad;
  std::function<void(ConstVec x, MutVec out)> hess;
  double support_radius = 0.0;
};

/// p(x) = c0 + b.x + x^T Q x with Q symmetric.
struct QuadraticPolynomial {
  double c0 = 0.0;
  std::vector<double> b;
  std::vector<double> q;  // d x d; empty means zero
};

/// p(x) chi(|x|), where chi = 1 on |x| <= flat_radius, 0 on |x| >= support_radius,
/// joined by the quintic smoothstep (C^2 at both ends). Inside the flat ball the
/// function, gradient and Hessian are exactly those of p.
inline TestFunction bump_polynomial(std::size_t dim, QuadraticPolynomial p, double flat_radius, double support_radius) {
  detail::require(flat_radius > 0.0 && support_radius > flat_radius, "bump_polynomial: need 0 < r0 < r1");
  if (p.b.empty()) p.b.assign(dim, 0.0);
  if (p.q.empty()) p.q.assign(dim * dim, 0.0);
  detail::require(p.b.size() == dim && p.q.size() == dim * dim, "bump_polynomial: coefficient shape mismatch");
  const double r0 = flat_radius, r1 = support_radius, width = r1 - r0;

  struct Cutoff {
    double value, d1, d2;
  };
  auto cutoff = [r0, r1, width](double r) -> Cutoff {
    if (r <= r0) return {1.0, 0.0, 0.0};
    if (r >= r1) return {0.0, 0.0, 0.0};
    const double u = (r - r0) / width;
    const double u2 = u * u, u3 = u2 * u;
    return {1.0 - (10.0 * u3 - 15.0 * u3 * u + 6.0 * u3 * u2), -(30.0 * u2 - 60.0 * u3 + 30.0 * u3 * u) / width,
            -(60.0 * u - 180.0 * u2 + 120.0 * u3) / (width * width)};
  };
  auto p_value = [p, dim](ConstVec x) {
    double v = p.c0;
    for (std::size_t i = 0; i < dim; ++i) {
      v += p.b[i] * x[i];
      for (std::size_t j = 0; j < dim; ++j) v += x[i] * p.q[i * dim + j] * x[j];
    }
    return v;
  };
  auto p_grad = [p, dim](ConstVec x, MutVec out) {
    for (std::size_t i = 0; i < dim; ++i) {
      double g = p.b[i];
      for (std::size_t j = 0; j < dim; ++j) g += (p.q[i * dim + j] + p.q[j * dim + i]) * x[j];
      out[i] = g;
    }
  };
  auto radius = [](ConstVec x) {
    double s = 0.0;
    for (double c : x) s += c * c;
    return std::sqrt(s);
  };

  TestFunction tf;
  tf.support_radius = r1;
  tf.phi = [=](ConstVec x) { return p_value(x) * cutoff(radius(x)).value; };
  tf.grad = [=](ConstVec x, MutVec out) {
    const double r = radius(x);
    const auto c = cutoff(r);
    p_grad(x, out);
    if (c.d1 == 0.0) {
      for (auto& g : out) g *= c.value;
      return;
    }
    const double pv = p_value(x);
    for (std::size_t i = 0; i < dim; ++i) out[i] = out[i] * c.value + pv * c.d1 * x[i] / r;
  };
  tf.hess = [=](ConstVec x, MutVec out) {
    const double r = radius(x);
    const auto c = cutoff(r);
    for (std::size_t i = 0; i < dim; ++i) {
      for (std::size_t j = 0; j < dim; ++j) out[i * dim + j] = (p.q[i * dim + j] + p.q[j * dim + i]) * c.value;
    }
    if (c.d1 == 0.0 && c.d2 == 0.0) return;
    std::vector<double> gp(dim), gc(dim);
    p_grad(x, gp);
    for (std::size_t i = 0; i < dim; ++i) gc[i] = c.d1 * x[i] / r;
    const double pv = p_value(x);
    for (std::size_t i = 0; i < dim; ++i) {
      for (std::size_t j = 0; j < dim; ++j) {
        const double xx = x[i] * x[j] / (r * r);
        const double hc = c.d2 * xx + (c.d1 / r) * ((i == j ? 1.0 : 0.0) - xx);
        out[i * dim + j] += gp[i] * gc[j] + gc[i] * gp[j] + pv * hc;
      }
    }
  };
  return tf;
}

inline TestFunction bump_constant(std::size_t dim, double value, double flat_radius, double support_radius) {
  return bump_polynomial(dim, {value, {}, {}}, flat_radius, support_radius);
}

inline TestFunction bump_linear(std::vector<double> direction, double flat_radius, double support_radius) {
  const std::size_t d = direction.size();
  return bump_polynomial(d, {0.0, std::move(direction), {}}, flat_radius, support_radius);
}

/// |x|^2 inside the flat ball.
inline TestFunction bump_square(std::size_t dim, double flat_radius, double support_radius) {
  std::vector<double> q(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) q[i * dim + i] = 1.0;
  return bump_polynomial(dim, {0.0, {}, std::move(q)}, flat_radius, support_radius);
}

/// Flat radius suggestion: twice the largest |X| seen on a pilot trajectory.
inline double pilot_radius(const FlowTrajectory& traj) {
  double r = 0.0;
  const std::size_t d = traj.dim();
  for (std::size_t e = 0; e < traj.raw().size(); e += d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += traj.raw()[e + i] * traj.raw()[e + i];
    r = std::max(r, std::sqrt(s));
  }
  return 2.0 * std::max(r, 1.0);
}

struct WeakResidual {
  std::vector<double> per_step;  // R(t_j), j = 0..M
  double terminal = 0.0;
  std::vector<double> martingale;        // cumulative sqrt(eps) sum <grad phi . G, mu> dW
  std::vector<double> predicted_qv;      // cumulative eps sum |<grad phi^T G, mu>|^2 dt
  std::vector<double> independent_qv;    // same, with per-particle sum of w_i^2 |grad phi^T G|^2
};

/// R(t_j) = <phi, mu_j> - <phi, mu_0> - sum_{k<j} [ (eps/2)<D^2 phi : A, mu_k> + <grad phi . V, mu_k> ] dt
///          - sqrt(eps) sum_{k<j} <grad phi . G, mu_k> . dW_k,
/// with every quadrature at step-start states. `traj` must be the solve_sde output
/// for exactly this noise path and epsilon.
inline WeakResidual weak_residual(const FlowTrajectory& traj, const CoefficientField& field, const TestFunction& phi,
                                  const NoisePath& noise, double epsilon) {
  detail::require(traj.kind == RunKind::kSde && traj.driven_by_noise, "weak_residual: trajectory is not an SDE run");
  detail::require(traj.seed == noise.seed && traj.replica == noise.replica, "weak_residual: noise seed/replica mismatch");
  detail::require(traj.epsilon == epsilon, "weak_residual: epsilon does not match the trajectory");
  detail::require(traj.grid() == noise.grid && noise.modes == field.modes, "weak_residual: noise shape mismatch");
  detail::require(field.dim == traj.dim(), "weak_residual: dimension mismatch");

  const std::size_t d = field.dim, K = field.modes, n = traj.particles(), M = traj.grid().steps();
  const double dt = traj.grid().dt(), sqrt_eps = std::sqrt(epsilon);
  const auto weights = traj.initial().weights();
  std::vector<double> stats(field.n_stats), feat(field.n_stats), v(d), g(d * K), gr(d), hs(d * d), pg(K);

  auto pairing = [&](std::size_t step) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += weights[i] * phi.phi(traj.state(step, i));
    return s;
  };

  WeakResidual out;
  out.per_step.assign(M + 1, 0.0);
  out.martingale.assign(M + 1, 0.0);
  out.predicted_qv.assign(M + 1, 0.0);
  out.independent_qv.assign(M + 1, 0.0);
  const double base = pairing(0);
  double integral = 0.0, mart = 0.0, qv = 0.0, qv_ind = 0.0;
  for (std::size_t j = 0; j < M; ++j) {
    const double t = traj.grid().node(j);
    detail::layer_statistics(field, traj.layer(j), weights, feat, stats);
    double second = 0.0, first = 0.0, ind = 0.0;
    std::fill(pg.begin(), pg.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = traj.state(j, i);
      field.drift(t, x, stats, v);
      field.diffusion(t, x, stats, g);
      phi.grad(x, gr);
      phi.hess(x, hs);
      double hA = 0.0, gv = 0.0;
      for (std::size_t a = 0; a < d; ++a) {
        gv += gr[a] * v[a];
        for (std::size_t b = 0; b < d; ++b) {
          double aab = 0.0;
          for (std::size_t k = 0; k < K; ++k) aab += g[a * K + k] * g[b * K + k];
          hA += hs[a * d + b] * aab;
        }
      }
      double own = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        double c = 0.0;
        for (std::size_t a = 0; a < d; ++a) c += gr[a] * g[a * K + k];
        pg[k] += weights[i] * c;
        own += c * c;
      }
      second += weights[i] * hA;
      first += weights[i] * gv;
      ind += weights[i] * weights[i] * own;
    }
    double mart_step = 0.0, pg2 = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      mart_step += pg[k] * noise.increments[j * K + k];
      pg2 += pg[k] * pg[k];
    }
    integral += (0.5 * epsilon * second + first) * dt + sqrt_eps * mart_step;
    mart += sqrt_eps * mart_step;
    qv += epsilon * pg2 * dt;
    qv_ind += epsilon * ind * dt;
    out.per_step[j + 1] = (pairing(j + 1) - base) - integral;
    out.martingale[j + 1] = mart;
    out.predicted_qv[j + 1] = qv;
    out.independent_qv[j + 1] = qv_ind;
  }
  out.terminal = out.per_step[M];
  return out;
}

struct QvReport {
  double empirical_qv = 0.0;    // mean over replicas of M_T^2
  double predicted_qv = 0.0;    // mean of eps int |<grad phi^T G, mu>|^2 dt (common noise)
  double independent_qv = 0.0;  // what independent per-particle noise would give
  double z_score = 0.0;         // against the common-noise prediction
  double z_independent = 0.0;   // against the independent-noise alternative
  std::size_t replicas = 0;
};

/// Runs `replicas` SDE flows with replica-keyed noise and compares the empirical second
/// moment of the martingale term with its predicted quadratic variation. Uses the
/// discrete Ito isometry, so D_r = M_r^2 - QV_r has mean exactly zero.
inline QvReport quadratic_variation_check(const CoefficientField& field, const Ensemble& init, const TimeGrid& grid,
                                          const TestFunction& phi, double epsilon, std::size_t replicas,
                                          std::uint64_t seed, std::size_t workers = 1) {
  detail::require(replicas >= 30, "quadratic_variation_check: replicas must be >= 30");
  std::vector<double> m2(replicas), pred(replicas), alt(replicas);
  parallel_for(replicas, workers, [&](std::size_t r) {
    const auto noise = sample_noise(grid, field.modes, seed, static_cast<std::uint32_t>(r));
    const auto traj = solve_sde(field, init, noise, epsilon, grid);
    const auto res = weak_residual(traj, field, phi, noise, epsilon);
    const double mT = res.martingale.back();
    m2[r] = mT * mT;
    pred[r] = res.predicted_qv.back();
    alt[r] = res.independent_qv.back();
  });
  QvReport rep;
  rep.replicas = replicas;
  rep.empirical_qv = pairwise_mean(m2);
  rep.predicted_qv = pairwise_mean(pred);
  rep.independent_qv = pairwise_mean(alt);
  std::vector<double> d0(replicas), d1(replicas);
  for (std::size_t r = 0; r < replicas; ++r) {
    d0[r] = m2[r] - pred[r];
    d1[r] = m2[r] - alt[r];
  }
  const auto s0 = stats::mean_var(d0);
  const auto s1 = stats::mean_var(d1);
  rep.z_score = s0.standard_error > 0.0 ? s0.mean / s0.standard_error : 0.0;
  rep.z_independent = s1.standard_error > 0.0 ? s1.mean / s1.standard_error : 0.0;
  return rep;
}

struct RefinementLevel {
  std::size_t steps = 0;
  double dt = 0.0;
  double mean_square_max = 0.0;  // E[max_j R_j^2]
  double mean_abs_max = 0.0;     // E[max_j |R_j|]
};

struct RefinementReport {
  std::vector<RefinementLevel> levels;
  stats::LineFit mean_square_order;  // log E[max R^2] against log dt
  stats::LineFit pathwise_order;     // log E[max |R|] against log dt
};

/// Residual magnitude over dyadic grids M0, 2 M0, ... on [0, T].
inline RefinementReport weak_refinement(const CoefficientField& field, const Ensemble& init, double horizon,
                                        std::size_t base_steps, std::size_t levels, const TestFunction& phi,
                                        double epsilon, std::size_t replicas, std::uint64_t seed,
                                        std::size_t workers = 1) {
  detail::require(levels >= 2, "weak_refinement: need at least two grids");
  detail::require(replicas >= 30, "weak_refinement: replicas must be >= 30");
  RefinementReport rep;
  std::vector<double> dts, ms, ma;
  for (std::size_t l = 0; l < levels; ++l) {
    const TimeGrid grid(horizon, base_steps << l);
    std::vector<double> sq(replicas), ab(replicas);
    parallel_for(replicas, workers, [&](std::size_t r) {
      const auto noise = sample_noise(grid, field.modes, seed, static_cast<std::uint32_t>(r));
      const auto traj = solve_sde(field, init, noise, epsilon, grid);
      double peak = 0.0;
      for (double v : weak_residual(traj, field, phi, noise, epsilon).per_step) peak = std::max(peak, std::abs(v));
      sq[r] = peak * peak;
      ab[r] = peak;
    });
    rep.levels.push_back({grid.steps(), grid.dt(), pairwise_mean(sq), pairwise_mean(ab)});
    dts.push_back(grid.dt());
    ms.push_back(rep.levels.back().mean_square_max);
    ma.push_back(rep.levels.back().mean_abs_max);
  }
  rep.mean_square_order = stats::loglog_fit(dts, ms);
  rep.pathwise_order = stats::loglog_fit(dts, ma);
  return rep;
}

}  // namespace cspde
