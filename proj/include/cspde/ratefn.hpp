#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <variant>
#include <vector>

#include "cspde/coefficients.hpp"
#include "cspde/errors.hpp"
#include "cspde/flow.hpp"
#include "cspde/measure.hpp"
#include "cspde/wasserstein.hpp"

namespace cspde {

/// 1/2 sum_j |h_j|^2 dt, exact for piecewise-constant controls.
inline double energy(const ControlPath& control) {
  double s = 0.0;
  for (double v : control.values) s += v * v;
  return 0.5 * s * control.grid.dt();
}

/// H^N membership: int_0^T |h|^2 dt <= N.
inline bool within_budget(const ControlPath& control, double budget) { return 2.0 * energy(control) <= budget; }

namespace target {

/// X_T(x0) = a for a tracked initial point x0.
struct TerminalPoint {
  std::vector<double> x0;
  std::vector<double> a;
};

/// <id, mu_T> = a.
struct TerminalMean {
  std::vector<double> a;
};

/// mu_T = goal, measured in W_2.
struct TerminalMeasure {
  Ensemble goal;
};

}  // namespace target

struct TargetSpec {
  std::variant<target::TerminalPoint, target::TerminalMean, target::TerminalMeasure> kind;
  double tolerance = 1e-6;
};

struct RateOptions {
  std::size_t max_iter = 20000;       // total inner iterations over all stages
  std::size_t max_inner = 2000;       // per penalty stage
  double penalty_initial = 1.0;
  double penalty_growth = 10.0;
  std::size_t max_stages = 14;
  double armijo = 1e-4;
  double energy_rtol = 1e-8;
  std::size_t multistart = 1;
  std::uint64_t multistart_seed = 0;
  SkeletonScheme scheme = SkeletonScheme::kHeun;
  std::vector<double> eval_points;
  W2Options w2;
};

/// Value of energy(h) + penalty * gap(h)^2 together with its control gradient.
struct ObjectiveEval {
  double objective = 0.0;
  double energy = 0.0;
  double gap = 0.0;
  std::vector<double> gradient;  // M x K
};

namespace detail {

/// Tracked point carrying x0, appended as an eval point when not already present.
inline std::size_t locate_point(const Ensemble& init, std::vector<double>& eval_points, std::span<const double> x0) {
  const std::size_t d = init.dim();
  require(x0.size() == d, "terminal_point: x0 has the wrong dimension");
  auto same = [&](std::span<const double> p) { return std::equal(p.begin(), p.end(), x0.begin()); };
  for (std::size_t i = 0; i < init.size(); ++i) {
    if (same(init.point(i))) return i;
  }
  for (std::size_t e = 0; e < eval_points.size() / d; ++e) {
    if (same(std::span<const double>(eval_points).subspan(e * d, d))) return init.size() + e;
  }
  eval_points.insert(eval_points.end(), x0.begin(), x0.end());
  return init.size() + eval_points.size() / d - 1;
}

struct PreparedTarget {
  const TargetSpec* spec;
  std::vector<double> eval_points;
  std::size_t point_index = 0;
};

inline PreparedTarget prepare_target(const Ensemble& init, const TargetSpec& spec, std::vector<double> eval_points) {
  require(spec.tolerance > 0.0, "target tolerance must be > 0");
  PreparedTarget pt{&spec, std::move(eval_points), 0};
  if (const auto* p = std::get_if<target::TerminalPoint>(&spec.kind)) {
    require(p->a.size() == init.dim(), "terminal_point: a has the wrong dimension");
    pt.point_index = locate_point(init, pt.eval_points, p->x0);
  } else if (const auto* m = std::get_if<target::TerminalMean>(&spec.kind)) {
    require(m->a.size() == init.dim(), "terminal_mean: a has the wrong dimension");
  } else {
    require(std::get<target::TerminalMeasure>(spec.kind).goal.dim() == init.dim(),
            "terminal_measure: goal has the wrong dimension");
  }
  return pt;
}

/// gap and d(gap^2)/d(terminal layer).
inline double terminal_gap(const FlowTrajectory& traj, const PreparedTarget& pt, const W2Options& w2,
                           std::vector<double>* cotangent) {
  const std::size_t d = traj.dim(), M = traj.grid().steps();
  if (cotangent) cotangent->assign(traj.tracked() * d, 0.0);
  if (const auto* p = std::get_if<target::TerminalPoint>(&pt.spec->kind)) {
    const auto x = traj.state(M, pt.point_index);
    double r2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double r = x[i] - p->a[i];
      r2 += r * r;
      if (cotangent) (*cotangent)[pt.point_index * d + i] = 2.0 * r;
    }
    return std::sqrt(r2);
  }
  if (const auto* m = std::get_if<target::TerminalMean>(&pt.spec->kind)) {
    std::vector<double> r(d, 0.0);
    const auto& init = traj.initial();
    for (std::size_t i = 0; i < init.size(); ++i) {
      const auto x = traj.state(M, i);
      for (std::size_t k = 0; k < d; ++k) r[k] += init.weight(i) * x[k];
    }
    double r2 = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      r[k] -= m->a[k];
      r2 += r[k] * r[k];
    }
    if (cotangent) {
      for (std::size_t i = 0; i < init.size(); ++i) {
        for (std::size_t k = 0; k < d; ++k) (*cotangent)[i * d + k] = 2.0 * init.weight(i) * r[k];
      }
    }
    return std::sqrt(r2);
  }
  const auto& goal = std::get<target::TerminalMeasure>(pt.spec->kind).goal;
  const Ensemble terminal = traj.measure_at(M);
  if (!cotangent) return wasserstein2(terminal, goal, w2).value;
  const auto wg = wasserstein2_squared_gradient(terminal, goal, w2);
  std::copy(wg.gradient.begin(), wg.gradient.end(), cotangent->begin());
  return wg.result.value;
}

inline ObjectiveEval evaluate_objective(const CoefficientField& field, const Ensemble& init, const ControlPath& control,
                                        const PreparedTarget& pt, double penalty, const RateOptions& opts,
                                        bool with_gradient) {
  ObjectiveEval ev;
  const auto traj = solve_skeleton(field, init, control, control.grid, pt.eval_points, opts.scheme);
  std::vector<double> cot;
  ev.gap = terminal_gap(traj, pt, opts.w2, with_gradient ? &cot : nullptr);
  ev.energy = energy(control);
  ev.objective = ev.energy + penalty * ev.gap * ev.gap;
  if (!with_gradient) return ev;
  const double dt = control.grid.dt();
  ev.gradient.assign(control.values.size(), 0.0);
  if (penalty != 0.0) {
    for (double& c : cot) c *= penalty;
    ev.gradient = skeleton_control_vjp(field, traj, control, cot, opts.scheme);
  }
  for (std::size_t e = 0; e < control.values.size(); ++e) ev.gradient[e] += control.values[e] * dt;
  for (double g : ev.gradient) {
    if (!std::isfinite(g)) throw NumericalError("non-finite control gradient");
  }
  return ev;
}

}  // namespace detail

/// Objective energy(h) + penalty_weight * gap(h)^2 and its exact discrete gradient.
inline ObjectiveEval evaluate_rate_objective(const CoefficientField& field, const Ensemble& init,
                                             const ControlPath& control, const TargetSpec& target,
                                             double penalty_weight, const RateOptions& opts = {}) {
  const auto pt = detail::prepare_target(init, target, opts.eval_points);
  return detail::evaluate_objective(field, init, control, pt, penalty_weight, opts, true);
}

/// Gradient (M x K) of energy(h) + penalty_weight * gap(h)^2 by reverse accumulation
/// through the skeleton scheme.
inline std::vector<double> control_gradient(const CoefficientField& field, const Ensemble& init,
                                            const ControlPath& control, const TargetSpec& target,
                                            double penalty_weight, const RateOptions& opts = {}) {
  return evaluate_rate_objective(field, init, control, target, penalty_weight, opts).gradient;
}

struct RateEstimate {
  double energy = 0.0;
  ControlPath control;
  double constraint_gap = std::numeric_limits<double>::infinity();
  bool converged = false;
  bool infeasible = false;
  std::size_t iterations = 0;
  std::size_t stages = 0;
  double final_penalty = 0.0;
  std::vector<double> stage_gaps;

  /// Rate value: the energy, or +inf when the target was found unreachable.
  double value() const { return infeasible ? std::numeric_limits<double>::infinity() : energy; }
};

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline RateEstimate minimize_from(const CoefficientField& field, const Ensemble& init, const PreparedTarget& pt,
                                  ControlPath h, const RateOptions& opts) {
  RateEstimate est{0.0, h, std::numeric_limits<double>::infinity(), false, false, 0, 0, 0.0, {}};
  const double tol = pt.spec->tolerance;
  const auto lag = static_cast<std::size_t>(std::ceil(6.0 / std::log10(opts.penalty_growth)));
  double penalty = opts.penalty_initial;
  double step = 1.0 / h.grid.dt();
  std::size_t total = 0;

  for (std::size_t stage = 0; stage < opts.max_stages && total < opts.max_iter; ++stage) {
    auto cur = evaluate_objective(field, init, h, pt, penalty, opts, true);
    std::vector<double> prev_h, prev_g;
    for (std::size_t inner = 0; inner < opts.max_inner && total < opts.max_iter; ++inner) {
      ++total;
      if (!prev_h.empty()) {
        std::vector<double> s(h.values.size()), y(h.values.size());
        for (std::size_t e = 0; e < s.size(); ++e) {
          s[e] = h.values[e] - prev_h[e];
          y[e] = cur.gradient[e] - prev_g[e];
        }
        const double sy = dot(s, y);
        if (sy > 0.0) step = dot(s, s) / sy;
      }
      const double gg = dot(cur.gradient, cur.gradient);
      if (gg == 0.0) break;
      // Backtracking line search on the Armijo condition, halving.
      ControlPath trial = h;
      ObjectiveEval next;
      bool accepted = false;
      for (int halvings = 0; halvings < 60; ++halvings) {
        for (std::size_t e = 0; e < h.values.size(); ++e) trial.values[e] = h.values[e] - step * cur.gradient[e];
        try {
          next = evaluate_objective(field, init, trial, pt, penalty, opts, true);
          if (next.objective <= cur.objective - opts.armijo * step * gg) {
            accepted = true;
            break;
          }
        } catch (const BlowUpError&) {
        }
        step *= 0.5;
      }
      if (!accepted) break;
      prev_h = h.values;
      prev_g = cur.gradient;
      const double decrease = cur.objective - next.objective;
      h = trial;
      cur = std::move(next);
      if (decrease <= opts.energy_rtol * std::max(cur.objective, 1e-300)) break;
    }
    est.stage_gaps.push_back(cur.gap);
    est.stages = stage + 1;
    est.final_penalty = penalty;
    est.control = h;
    est.energy = cur.energy;
    est.constraint_gap = cur.gap;
    if (cur.gap <= tol) {
      est.converged = true;
      break;
    }
    if (est.stage_gaps.size() > lag) {
      const double earlier = est.stage_gaps[est.stage_gaps.size() - 1 - lag];
      if (cur.gap > 0.5 * earlier) {
        est.infeasible = true;
        break;
      }
    }
    penalty *= opts.penalty_growth;
  }
  est.iterations = total;
  return est;
}

}  // namespace detail

/// Estimates inf { 1/2 int |h|^2 dt : skeleton endpoint meets `target` } over
/// piecewise-constant controls on `grid`, by quadratic-penalty continuation with
/// gradient descent (Barzilai-Borwein trial step, Armijo backtracking). Starts from
/// h = 0; additional multistarts draw N(0, 1) initial controls. The reported energy
/// approximates the infimum from above on the discrete control class.
inline RateEstimate minimize_rate(const CoefficientField& field, const Ensemble& init, const TargetSpec& target,
                                  const TimeGrid& grid, const RateOptions& opts = {}) {
  detail::require(opts.penalty_growth > 1.0 && opts.penalty_initial > 0.0, "minimize_rate: bad penalty schedule");
  const auto pt = detail::prepare_target(init, target, opts.eval_points);
  RateEstimate best = detail::minimize_from(field, init, pt, ControlPath::zero(grid, field.modes), opts);
  std::mt19937_64 rng(opts.multistart_seed);
  std::normal_distribution<double> normal;
  for (std::size_t s = 1; s < opts.multistart; ++s) {
    ControlPath h0 = ControlPath::zero(grid, field.modes);
    for (double& v : h0.values) v = normal(rng);
    auto est = detail::minimize_from(field, init, pt, h0, opts);
    const bool better = (est.converged && !best.converged) ||
                        (est.converged == best.converged && (est.converged ? est.energy < best.energy
                                                                          : est.constraint_gap < best.constraint_gap));
    est.iterations += best.iterations;
    if (better) {
      best = std::move(est);
    } else {
      best.iterations = est.iterations;
    }
  }
  return best;
}

/// Rate for a terminal measure target, gap = W_2(mu_T, goal).
inline RateEstimate rate_for_measure_target(const CoefficientField& field, const Ensemble& init, const Ensemble& goal,
                                            double tolerance, const TimeGrid& grid, const RateOptions& opts = {}) {
  TargetSpec spec{target::TerminalMeasure{goal}, tolerance};
  return minimize_rate(field, init, spec, grid, opts);
}

}  // namespace cspde
