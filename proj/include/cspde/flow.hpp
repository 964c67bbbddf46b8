#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "cspde/coefficients.hpp"
#include "cspde/errors.hpp"
#include "cspde/measure.hpp"
#include "cspde/noise.hpp"

namespace cspde {

/// Piecewise-constant control h(t) in R^K; row j holds the value on [t_j, t_{j+1}).
struct ControlPath {
  TimeGrid grid;
  std::size_t modes = 1;
  std::vector<double> values;  // M x K, row-major

  std::span<const double> at(std::size_t step) const { return {values.data() + step * modes, modes}; }
  std::span<double> at(std::size_t step) { return {values.data() + step * modes, modes}; }

  static ControlPath zero(const TimeGrid& grid, std::size_t modes) {
    return {grid, modes, std::vector<double>(grid.steps() * modes, 0.0)};
  }

  static ControlPath constant(const TimeGrid& grid, std::span<const double> value) {
    ControlPath c = zero(grid, value.size());
    for (std::size_t j = 0; j < grid.steps(); ++j) std::copy(value.begin(), value.end(), c.at(j).begin());
    return c;
  }

  /// Samples h at cell midpoints.
  static ControlPath from_function(const TimeGrid& grid, std::size_t modes,
                                   const std::function<void(double t, std::span<double> out)>& fn) {
    ControlPath c = zero(grid, modes);
    for (std::size_t j = 0; j < grid.steps(); ++j) fn(grid.node(j) + 0.5 * grid.dt(), c.at(j));
    return c;
  }

  ControlPath scaled(double factor) const {
    ControlPath c = *this;
    for (double& v : c.values) v *= factor;
    return c;
  }

  void validate() const {
    detail::require(values.size() == grid.steps() * modes, "ControlPath: shape mismatch");
    for (double v : values) detail::require(std::isfinite(v), "ControlPath: non-finite value");
  }
};

/// Parameters of the weighted sup-norm: delta in (0, 1/3), even m > max(1/delta, 2d).
struct NormSpec {
  double delta = 0.25;
  int m = 6;

  void validate(std::size_t dim) const {
    detail::require(delta > 0.0 && delta < 1.0 / 3.0, "NormSpec: delta must lie in (0, 1/3)");
    detail::require(m % 2 == 0, "NormSpec: m must be even");
    detail::require(static_cast<double>(m) > 1.0 / delta, "NormSpec: m must exceed 1/delta");
    detail::require(static_cast<std::size_t>(m) > 2 * dim, "NormSpec: m must exceed 2d");
  }
};

enum class RunKind { kSde, kControlled, kSkeleton };
enum class SkeletonScheme { kHeun, kEuler };

/// Particle flow x -> X_t(x) sampled at grid nodes on the initial ensemble plus
/// optional zero-weight evaluation points. states[j][p] for tracked point p.
class FlowTrajectory {
 public:
  FlowTrajectory(TimeGrid grid, Ensemble initial, std::vector<double> eval_points)
      : grid_(grid), initial_(std::move(initial)), eval_points_(std::move(eval_points)) {
    detail::require(eval_points_.size() % initial_.dim() == 0, "eval points: bad shape");
    states_.assign((grid_.steps() + 1) * tracked() * dim(), 0.0);
    auto s0 = states_.begin();
    std::copy(initial_.points().begin(), initial_.points().end(), s0);
    std::copy(eval_points_.begin(), eval_points_.end(), s0 + static_cast<std::ptrdiff_t>(initial_.points().size()));
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  const Ensemble& initial() const noexcept { return initial_; }
  std::span<const double> eval_points() const noexcept { return eval_points_; }
  std::size_t dim() const noexcept { return initial_.dim(); }
  std::size_t particles() const noexcept { return initial_.size(); }
  std::size_t tracked() const noexcept { return initial_.size() + eval_points_.size() / initial_.dim(); }

  std::span<const double> state(std::size_t step, std::size_t p) const {
    return {states_.data() + (step * tracked() + p) * dim(), dim()};
  }
  std::span<double> state(std::size_t step, std::size_t p) {
    return {states_.data() + (step * tracked() + p) * dim(), dim()};
  }
  /// All tracked points at one node, P x d.
  std::span<const double> layer(std::size_t step) const {
    return {states_.data() + step * tracked() * dim(), tracked() * dim()};
  }
  std::span<double> layer(std::size_t step) { return {states_.data() + step * tracked() * dim(), tracked() * dim()}; }
  std::span<const double> origin(std::size_t p) const { return state(0, p); }
  std::span<const double> raw() const noexcept { return states_; }

  /// Pushforward of the initial measure at node j; eval points are not part of it.
  Ensemble measure_at(std::size_t step) const {
    const auto l = layer(step);
    return pushforward(initial_, std::vector<double>(l.begin(), l.begin() + static_cast<std::ptrdiff_t>(particles() * dim())));
  }

  // Provenance, used to refuse mismatched noise in weak-form checks.
  RunKind kind = RunKind::kSde;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  std::uint32_t replica = 0;
  bool driven_by_noise = false;

 private:
  TimeGrid grid_;
  Ensemble initial_;
  std::vector<double> eval_points_;
  std::vector<double> states_;
};

inline std::vector<Ensemble> measure_path(const FlowTrajectory& traj) {
  std::vector<Ensemble> path;
  path.reserve(traj.grid().steps() + 1);
  for (std::size_t j = 0; j <= traj.grid().steps(); ++j) path.push_back(traj.measure_at(j));
  return path;
}

/// Origin, +-radius/2 and +-radius along each axis: a far-field evaluation set so the
/// 1 + |x|^{1+delta} weight of the sup-norm is exercised.
inline std::vector<double> default_eval_points(std::size_t dim, double radius) {
  std::vector<double> pts(dim, 0.0);
  for (std::size_t k = 0; k < dim; ++k) {
    for (double c : {-radius, -0.5 * radius, 0.5 * radius, radius}) {
      std::vector<double> x(dim, 0.0);
      x[k] = c;
      pts.insert(pts.end(), x.begin(), x.end());
    }
  }
  return pts;
}

namespace detail {

/// Scratch buffers for coefficient evaluation along a flow.
struct FieldScratch {
  explicit FieldScratch(const CoefficientField& f)
      : stats(f.n_stats), stats2(f.n_stats), feat(f.n_stats), v(f.dim), g(f.dim * f.modes), u(f.modes) {}
  std::vector<double> stats, stats2, feat, v, g, u;
};

inline void layer_statistics(const CoefficientField& field, std::span<const double> layer, std::span<const double> weights,
                             std::vector<double>& feat, std::vector<double>& out) {
  std::fill(out.begin(), out.end(), 0.0);
  if (field.n_stats == 0) return;
  const std::size_t d = field.dim;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    field.features(layer.subspan(i * d, d), feat);
    for (std::size_t r = 0; r < field.n_stats; ++r) out[r] += weights[i] * feat[r];
  }
}

inline void check_compatible(const CoefficientField& field, const Ensemble& init, std::span<const double> eval_points) {
  require(field.dim == init.dim(), "flow: field dimension does not match the initial ensemble");
  require(eval_points.size() % init.dim() == 0, "flow: eval points have the wrong dimension");
  require(static_cast<bool>(field.drift) && static_cast<bool>(field.diffusion), "flow: field has no drift/diffusion");
}

inline void check_finite_layer(std::span<const double> layer, std::size_t d, std::size_t step) {
  for (std::size_t e = 0; e < layer.size(); ++e) {
    if (!std::isfinite(layer[e])) throw BlowUpError(step, e / d);
  }
}

/// Explicit Euler for dX = V dt + G (sqrt(eps) dW + h dt). Every stochastic,
/// controlled and Euler-skeleton run goes through this loop so that the h = 0 and
/// eps = 0 reductions agree bitwise.
inline void euler_flow(const CoefficientField& field, FlowTrajectory& traj, const NoisePath* noise, double sqrt_eps,
                       const ControlPath* control) {
  const TimeGrid& grid = traj.grid();
  const std::size_t d = field.dim, K = field.modes, P = traj.tracked();
  const double dt = grid.dt();
  FieldScratch sc(field);
  const auto weights = traj.initial().weights();
  for (std::size_t j = 0; j < grid.steps(); ++j) {
    const double t = grid.node(j);
    const auto cur = traj.layer(j);
    auto next = traj.layer(j + 1);
    layer_statistics(field, cur, weights, sc.feat, sc.stats);
    for (std::size_t k = 0; k < K; ++k) {
      const double dw = noise ? noise->increments[j * K + k] : 0.0;
      const double hk = control ? control->values[j * K + k] * dt : 0.0;
      sc.u[k] = sqrt_eps * dw + hk;
    }
    for (std::size_t p = 0; p < P; ++p) {
      const auto x = cur.subspan(p * d, d);
      field.drift(t, x, sc.stats, sc.v);
      field.diffusion(t, x, sc.stats, sc.g);
      for (std::size_t i = 0; i < d; ++i) {
        double diff = 0.0;
        for (std::size_t k = 0; k < K; ++k) diff += sc.g[i * K + k] * sc.u[k];
        next[p * d + i] = x[i] + dt * sc.v[i] + diff;
      }
    }
    check_finite_layer(next, d, j + 1);
  }
}

/// b = V + G h at one point.
inline void controlled_drift(const CoefficientField& field, double t, std::span<const double> x,
                             std::span<const double> stats, std::span<const double> h, FieldScratch& sc,
                             std::span<double> out) {
  const std::size_t d = field.dim, K = field.modes;
  field.drift(t, x, stats, sc.v);
  field.diffusion(t, x, stats, sc.g);
  for (std::size_t i = 0; i < d; ++i) {
    double gh = 0.0;
    for (std::size_t k = 0; k < K; ++k) gh += sc.g[i * K + k] * h[k];
    out[i] = sc.v[i] + gh;
  }
}

/// One Heun step of the skeleton; the corrector stage evaluates the measure at the
/// predictor states so the step stays second order for measure-dependent fields.
inline void heun_step(const CoefficientField& field, double t0, double t1, double dt, std::span<const double> cur,
                      std::span<double> next, std::span<const double> weights, std::span<const double> h,
                      FieldScratch& sc, std::vector<double>& k1, std::vector<double>& pred) {
  const std::size_t d = field.dim, P = cur.size() / d;
  layer_statistics(field, cur, weights, sc.feat, sc.stats);
  for (std::size_t p = 0; p < P; ++p) {
    controlled_drift(field, t0, cur.subspan(p * d, d), sc.stats, h, sc, std::span<double>(k1).subspan(p * d, d));
    for (std::size_t i = 0; i < d; ++i) pred[p * d + i] = cur[p * d + i] + dt * k1[p * d + i];
  }
  layer_statistics(field, pred, weights, sc.feat, sc.stats2);
  std::vector<double> k2(d);
  for (std::size_t p = 0; p < P; ++p) {
    controlled_drift(field, t1, std::span<const double>(pred).subspan(p * d, d), sc.stats2, h, sc, k2);
    for (std::size_t i = 0; i < d; ++i) next[p * d + i] = cur[p * d + i] + (0.5 * dt) * (k1[p * d + i] + k2[i]);
  }
}

}  // namespace detail

/// Euler-Maruyama for the eps-scaled SDE with interaction: one noise path drives
/// every particle, and the measure is the pushforward at the step start.
inline FlowTrajectory solve_sde(const CoefficientField& field, const Ensemble& init, const NoisePath& noise,
                                double epsilon, const TimeGrid& grid, std::vector<double> eval_points = {}) {
  detail::check_compatible(field, init, eval_points);
  detail::require(epsilon >= 0.0, "solve_sde: epsilon must be >= 0");
  detail::require(noise.grid == grid, "solve_sde: noise grid does not match");
  detail::require(noise.modes == field.modes, "solve_sde: noise modes do not match the field");
  FlowTrajectory traj(grid, init, std::move(eval_points));
  traj.kind = RunKind::kSde;
  traj.epsilon = epsilon;
  traj.seed = noise.seed;
  traj.replica = noise.replica;
  traj.driven_by_noise = true;
  detail::euler_flow(field, traj, &noise, std::sqrt(epsilon), nullptr);
  return traj;
}

/// Euler-Maruyama for the controlled SDE: drift gains G h.
inline FlowTrajectory solve_controlled(const CoefficientField& field, const Ensemble& init, const NoisePath& noise,
                                       double epsilon, const ControlPath& control, const TimeGrid& grid,
                                       std::vector<double> eval_points = {}) {
  detail::check_compatible(field, init, eval_points);
  detail::require(epsilon >= 0.0, "solve_controlled: epsilon must be >= 0");
  detail::require(noise.grid == grid && control.grid == grid, "solve_controlled: grid mismatch");
  detail::require(noise.modes == field.modes && control.modes == field.modes, "solve_controlled: mode mismatch");
  FlowTrajectory traj(grid, init, std::move(eval_points));
  traj.kind = RunKind::kControlled;
  traj.epsilon = epsilon;
  traj.seed = noise.seed;
  traj.replica = noise.replica;
  traj.driven_by_noise = true;
  detail::euler_flow(field, traj, &noise, std::sqrt(epsilon), &control);
  return traj;
}

/// Deterministic skeleton dX = (V + G h) dt with self-consistent measure.
/// Heun by default; the Euler scheme reproduces solve_controlled(eps = 0) bitwise.
inline FlowTrajectory solve_skeleton(const CoefficientField& field, const Ensemble& init, const ControlPath& control,
                                     const TimeGrid& grid, std::vector<double> eval_points = {},
                                     SkeletonScheme scheme = SkeletonScheme::kHeun) {
  detail::check_compatible(field, init, eval_points);
  detail::require(control.grid == grid, "solve_skeleton: control grid mismatch");
  detail::require(control.modes == field.modes, "solve_skeleton: control modes do not match the field");
  FlowTrajectory traj(grid, init, std::move(eval_points));
  traj.kind = RunKind::kSkeleton;
  if (scheme == SkeletonScheme::kEuler) {
    detail::euler_flow(field, traj, nullptr, 0.0, &control);
    return traj;
  }
  detail::FieldScratch sc(field);
  std::vector<double> k1(traj.tracked() * field.dim), pred(traj.tracked() * field.dim);
  const double dt = grid.dt();
  for (std::size_t j = 0; j < grid.steps(); ++j) {
    detail::heun_step(field, grid.node(j), grid.node(j + 1), dt, traj.layer(j), traj.layer(j + 1),
                      init.weights(), control.at(j), sc, k1, pred);
    detail::check_finite_layer(traj.layer(j + 1), field.dim, j + 1);
  }
  return traj;
}

/// Discrete stand-in for sup_t sup_x |a - b| / (1 + |x|^{1+delta}): max over grid
/// nodes and tracked points, weighted by the tracked point's initial position.
inline double weighted_sup_norm(const FlowTrajectory& a, const FlowTrajectory& b, const NormSpec& spec) {
  detail::require(a.grid() == b.grid(), "weighted_sup_norm: grid mismatch");
  detail::require(a.tracked() == b.tracked() && a.dim() == b.dim(), "weighted_sup_norm: tracked point mismatch");
  const std::size_t d = a.dim();
  for (std::size_t e = 0; e < a.layer(0).size(); ++e) {
    detail::require(a.layer(0)[e] == b.layer(0)[e], "weighted_sup_norm: initial points differ");
  }
  std::vector<double> weight(a.tracked());
  for (std::size_t p = 0; p < a.tracked(); ++p) {
    double r2 = 0.0;
    for (double c : a.origin(p)) r2 += c * c;
    weight[p] = 1.0 / (1.0 + std::pow(std::sqrt(r2), 1.0 + spec.delta));
  }
  double best = 0.0;
  for (std::size_t j = 0; j <= a.grid().steps(); ++j) {
    const auto la = a.layer(j), lb = b.layer(j);
    for (std::size_t p = 0; p < a.tracked(); ++p) {
      double r2 = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double diff = la[p * d + i] - lb[p * d + i];
        r2 += diff * diff;
      }
      best = std::max(best, std::sqrt(r2) * weight[p]);
    }
  }
  return best;
}

/// Same maximum without the spatial weight.
inline double plain_sup_norm(const FlowTrajectory& a, const FlowTrajectory& b) {
  detail::require(a.raw().size() == b.raw().size(), "plain_sup_norm: shape mismatch");
  const std::size_t d = a.dim();
  double best = 0.0;
  for (std::size_t e = 0; e < a.raw().size(); e += d) {
    double r2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) r2 += (a.raw()[e + i] - b.raw()[e + i]) * (a.raw()[e + i] - b.raw()[e + i]);
    best = std::max(best, std::sqrt(r2));
  }
  return best;
}

// ---------------------------------------------------------------------------
// Reverse mode through the skeleton
// ---------------------------------------------------------------------------

namespace detail {

struct VjpScratch {
  explicit VjpScratch(const CoefficientField& f)
      : vx(f.dim * f.dim), vs(f.dim * f.n_stats), gx(f.dim * f.dim * f.modes), gs(f.n_stats * f.dim * f.modes),
        g(f.dim * f.modes), fj(f.n_stats * f.dim) {}
  std::vector<double> vx, vs, gx, gs, g, fj;
};

/// Cotangent c on b(t, x, s, h) = V + G h, pulled back onto x, s and h (accumulated).
inline void controlled_drift_vjp(const CoefficientField& field, double t, std::span<const double> x,
                                 std::span<const double> s, std::span<const double> h, std::span<const double> c,
                                 VjpScratch& sc, std::span<double> ax, std::span<double> as, std::span<double> ah) {
  const std::size_t d = field.dim, K = field.modes, S = field.n_stats, dk = d * K;
  cspde::drift_dx(field, t, x, s, sc.vx);
  cspde::diffusion_dx(field, t, x, s, sc.gx);
  field.diffusion(t, x, s, sc.g);
  for (std::size_t l = 0; l < d; ++l) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      double dbi = sc.vx[i * d + l];
      for (std::size_t k = 0; k < K; ++k) dbi += sc.gx[l * dk + i * K + k] * h[k];
      acc += c[i] * dbi;
    }
    ax[l] += acc;
  }
  if (S > 0) {
    cspde::drift_ds(field, t, x, s, sc.vs);
    cspde::diffusion_ds(field, t, x, s, sc.gs);
    for (std::size_t r = 0; r < S; ++r) {
      double acc = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        double dbi = sc.vs[i * S + r];
        for (std::size_t k = 0; k < K; ++k) dbi += sc.gs[r * dk + i * K + k] * h[k];
        acc += c[i] * dbi;
      }
      as[r] += acc;
    }
  }
  for (std::size_t k = 0; k < K; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) acc += c[i] * sc.g[i * K + k];
    ah[k] += acc;
  }
}

/// Pulls a statistic cotangent back onto the weighted particle states.
inline void statistics_vjp(const CoefficientField& field, std::span<const double> layer, std::span<const double> weights,
                           std::span<const double> sigma, VjpScratch& sc, std::span<double> lambda) {
  const std::size_t d = field.dim, S = field.n_stats;
  if (S == 0) return;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] == 0.0) continue;
    cspde::features_jacobian(field, layer.subspan(i * d, d), sc.fj);
    for (std::size_t l = 0; l < d; ++l) {
      double acc = 0.0;
      for (std::size_t r = 0; r < S; ++r) acc += sigma[r] * sc.fj[r * d + l];
      lambda[i * d + l] += weights[i] * acc;
    }
  }
}

}  // namespace detail

/// Gradient of <terminal_cotangent, X_T> with respect to the control values of a
/// skeleton run (reverse accumulation through the same discrete scheme, including
/// measure coupling). `traj` must come from solve_skeleton with these arguments.
inline std::vector<double> skeleton_control_vjp(const CoefficientField& field, const FlowTrajectory& traj,
                                                const ControlPath& control, std::span<const double> terminal_cotangent,
                                                SkeletonScheme scheme = SkeletonScheme::kHeun) {
  const TimeGrid& grid = traj.grid();
  const std::size_t d = field.dim, K = field.modes, S = field.n_stats, P = traj.tracked();
  detail::require(terminal_cotangent.size() == P * d, "skeleton_control_vjp: cotangent shape mismatch");
  const double dt = grid.dt();
  const auto weights = traj.initial().weights();
  std::vector<double> grad(grid.steps() * K, 0.0);
  std::vector<double> lambda(terminal_cotangent.begin(), terminal_cotangent.end()), lam_next;
  detail::FieldScratch fs(field);
  detail::VjpScratch vs(field);
  std::vector<double> k1(P * d), pred(P * d), sigma(S), c(d), tilde(P * d);

  for (std::size_t j = grid.steps(); j-- > 0;) {
    const double t0 = grid.node(j), t1 = grid.node(j + 1);
    const auto cur = traj.layer(j);
    const auto h = control.at(j);
    auto gh = std::span<double>(grad).subspan(j * K, K);
    lam_next = lambda;  // cotangent of X_{j+1}
    if (scheme == SkeletonScheme::kEuler) {
      detail::layer_statistics(field, cur, weights, fs.feat, fs.stats);
      std::fill(sigma.begin(), sigma.end(), 0.0);
      for (std::size_t p = 0; p < P; ++p) {
        for (std::size_t i = 0; i < d; ++i) c[i] = dt * lam_next[p * d + i];
        detail::controlled_drift_vjp(field, t0, cur.subspan(p * d, d), fs.stats, h, c, vs,
                                     std::span<double>(lambda).subspan(p * d, d), sigma, gh);
      }
      detail::statistics_vjp(field, cur, weights, sigma, vs, lambda);
      continue;
    }
    // Recompute the forward stages of this step.
    detail::layer_statistics(field, cur, weights, fs.feat, fs.stats);
    for (std::size_t p = 0; p < P; ++p) {
      detail::controlled_drift(field, t0, cur.subspan(p * d, d), fs.stats, h, fs, std::span<double>(k1).subspan(p * d, d));
      for (std::size_t i = 0; i < d; ++i) pred[p * d + i] = cur[p * d + i] + dt * k1[p * d + i];
    }
    detail::layer_statistics(field, pred, weights, fs.feat, fs.stats2);

    // Corrector stage at (t1, pred, stats2) with cotangent dt/2 * lambda'.
    std::fill(tilde.begin(), tilde.end(), 0.0);
    std::fill(sigma.begin(), sigma.end(), 0.0);
    for (std::size_t p = 0; p < P; ++p) {
      for (std::size_t i = 0; i < d; ++i) c[i] = 0.5 * dt * lam_next[p * d + i];
      detail::controlled_drift_vjp(field, t1, std::span<const double>(pred).subspan(p * d, d), fs.stats2, h, c, vs,
                                   std::span<double>(tilde).subspan(p * d, d), sigma, gh);
    }
    detail::statistics_vjp(field, pred, weights, sigma, vs, tilde);

    // pred = X + dt k1 feeds lambda directly and k1 with weight dt.
    for (std::size_t e = 0; e < P * d; ++e) lambda[e] = lam_next[e] + tilde[e];
    std::fill(sigma.begin(), sigma.end(), 0.0);
    for (std::size_t p = 0; p < P; ++p) {
      for (std::size_t i = 0; i < d; ++i) c[i] = 0.5 * dt * lam_next[p * d + i] + dt * tilde[p * d + i];
      detail::controlled_drift_vjp(field, t0, cur.subspan(p * d, d), fs.stats, h, c, vs,
                                   std::span<double>(lambda).subspan(p * d, d), sigma, gh);
    }
    detail::statistics_vjp(field, cur, weights, sigma, vs, lambda);
    for (double v : lambda) {
      if (!std::isfinite(v)) throw NumericalError("non-finite adjoint at step " + std::to_string(j));
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

/// Long format: step,time,particle,x_1..x_d (eval points follow the particles).
inline void write_trajectory_csv(std::ostream& out, const FlowTrajectory& traj) {
  out.precision(17);
  out << "step,time,particle";
  for (std::size_t k = 0; k < traj.dim(); ++k) out << ",x_" << (k + 1);
  out << '\n';
  for (std::size_t j = 0; j <= traj.grid().steps(); ++j) {
    for (std::size_t p = 0; p < traj.tracked(); ++p) {
      out << j << ',' << traj.grid().node(j) << ',' << p;
      for (double v : traj.state(j, p)) out << ',' << v;
      out << '\n';
    }
  }
}

/// Binary dump: uint64 d, uint64 n (tracked points), uint64 M, then (M+1) x n x d
/// little-endian IEEE-754 doubles, row-major by step, point, coordinate.
inline void write_trajectory_binary(std::ostream& out, const FlowTrajectory& traj) {
  const std::uint64_t header[3] = {traj.dim(), traj.tracked(), traj.grid().steps()};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  out.write(reinterpret_cast<const char*>(traj.raw().data()), static_cast<std::streamsize>(traj.raw().size() * sizeof(double)));
}

}  // namespace cspde
