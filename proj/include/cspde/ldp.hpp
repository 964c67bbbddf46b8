#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "cspde/coefficients.hpp"
#include "cspde/errors.hpp"
#include "cspde/flow.hpp"
#include "cspde/noise.hpp"
#include "cspde/parallel.hpp"
#include "cspde/ratefn.hpp"
#include "cspde/stats.hpp"

namespace cspde {

struct SweepConfig {
  std::vector<double> epsilons;  // strictly decreasing, positive
  std::size_t replicas = 200;
  std::uint64_t seed = 0;
  NormSpec norm;
  double budget = 10.0;  // N of H^N
  std::size_t workers = 1;

  void validate(std::size_t dim) const {
    detail::require(!epsilons.empty(), "sweep: no epsilons");
    for (std::size_t i = 0; i < epsilons.size(); ++i) {
      detail::require(epsilons[i] > 0.0, "sweep: epsilons must be positive");
      if (i > 0) detail::require(epsilons[i] < epsilons[i - 1], "sweep: epsilons must be strictly decreasing");
    }
    detail::require(replicas >= 30, "sweep: replicas must be >= 30");
    detail::require(budget > 0.0, "sweep: budget must be positive");
    norm.validate(dim);
  }
};

// ---------------------------------------------------------------------------
// (LDP1): controlled SDE vs skeleton
// ---------------------------------------------------------------------------

struct Ldp1Row {
  double epsilon = 0.0;
  double mean = 0.0;
  double standard_error = 0.0;
  double q95 = 0.0;
  double max = 0.0;
  double control_energy = 0.0;
};

struct Ldp1Report {
  std::vector<Ldp1Row> rows;
  stats::LineFit slope;  // of log(mean) against log(epsilon); invalid if any mean is 0
  bool all_zero = false;
  bool means_monotone = false;  // mean non-increasing as epsilon decreases
};

using ControlFamily = std::function<ControlPath(double epsilon)>;

/// For each epsilon, pairs Y = solve_controlled(eps, h^eps) with the Euler skeleton
/// Z = solve_skeleton(h^eps) on the same particles and grid, and records
/// ||Y - Z||_{inf,T}. Replica r uses the same noise for every epsilon.
inline Ldp1Report ldp1_sweep(const CoefficientField& field, const Ensemble& init, const ControlFamily& control_family,
                             const SweepConfig& cfg, const TimeGrid& grid, const std::vector<double>& eval_points = {}) {
  cfg.validate(field.dim);
  Ldp1Report rep;
  for (double eps : cfg.epsilons) {
    const ControlPath h = control_family(eps);
    h.validate();
    if (!within_budget(h, cfg.budget)) {
      throw ConfigError("ldp1_sweep: control for eps=" + std::to_string(eps) + " exceeds the energy budget");
    }
    const auto z = solve_skeleton(field, init, h, grid, eval_points, SkeletonScheme::kEuler);
    std::vector<double> norms(cfg.replicas);
    parallel_for(cfg.replicas, cfg.workers, [&](std::size_t r) {
      const auto noise = sample_noise(grid, field.modes, cfg.seed, static_cast<std::uint32_t>(r));
      const auto y = solve_controlled(field, init, noise, eps, h, grid, eval_points);
      norms[r] = weighted_sup_norm(y, z, cfg.norm);
    });
    const auto mv = stats::mean_var(norms);
    rep.rows.push_back({eps, mv.mean, mv.standard_error, stats::quantile(norms, 0.95),
                        *std::max_element(norms.begin(), norms.end()), energy(h)});
  }
  std::vector<double> le, lm;
  rep.all_zero = true;
  rep.means_monotone = true;
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    if (rep.rows[i].mean != 0.0) rep.all_zero = false;
    if (i > 0 && rep.rows[i].mean > rep.rows[i - 1].mean) rep.means_monotone = false;
    le.push_back(rep.rows[i].epsilon);
    lm.push_back(rep.rows[i].mean);
  }
  rep.slope = stats::loglog_fit(le, lm);
  return rep;
}

// ---------------------------------------------------------------------------
// (LDP2): skeleton continuity under weakly converging controls
// ---------------------------------------------------------------------------

/// h + amplitude * sin(2 pi n t) e_mode, using exact cell averages of the sine so
/// that the piecewise-constant path is the L^2 projection of the oscillation.
inline ControlPath oscillating_control(const ControlPath& base, double amplitude, std::size_t mode, double frequency) {
  detail::require(mode < base.modes, "oscillating_control: mode out of range");
  ControlPath out = base;
  const TimeGrid& g = base.grid;
  const double w = 2.0 * std::numbers::pi * frequency;
  for (std::size_t j = 0; j < g.steps(); ++j) {
    const double avg = (std::cos(w * g.node(j)) - std::cos(w * g.node(j + 1))) / (w * g.dt());
    out.at(j)[mode] += amplitude * avg;
  }
  return out;
}

struct Ldp2Row {
  double frequency = 0.0;
  double norm = 0.0;
  double control_energy = 0.0;
};

struct Ldp2Report {
  std::vector<Ldp2Row> rows;
  stats::KendallResult trend;
  double final_norm = 0.0;
  bool final_below_tolerance = false;
  bool decreasing_trend = false;  // tau < 0 with one-sided p < 0.01
};

inline Ldp2Report ldp2_sweep(const CoefficientField& field, const Ensemble& init, const ControlPath& h, double amplitude,
                             std::size_t mode, const std::vector<double>& frequencies, const NormSpec& norm,
                             double tolerance = 1e-2, const std::vector<double>& eval_points = {}) {
  norm.validate(field.dim);
  detail::require(!frequencies.empty(), "ldp2_sweep: empty frequency list");
  const auto base = solve_skeleton(field, init, h, h.grid, eval_points);
  Ldp2Report rep;
  std::vector<double> norms;
  for (double n : frequencies) {
    const auto hn = oscillating_control(h, amplitude, mode, n);
    const auto traj = solve_skeleton(field, init, hn, h.grid, eval_points);
    const double value = weighted_sup_norm(traj, base, norm);
    rep.rows.push_back({n, value, energy(hn)});
    norms.push_back(value);
  }
  rep.trend = stats::kendall_trend(norms);
  rep.final_norm = norms.back();
  rep.final_below_tolerance = rep.final_norm < tolerance;
  rep.decreasing_trend = rep.trend.tau < 0.0 && rep.trend.p_decreasing < 0.01;
  return rep;
}

// ---------------------------------------------------------------------------
// Rare-event probabilities
// ---------------------------------------------------------------------------

/// Terminal event on a tracked point X_T(x0) or on the mean of mu_T.
struct EventSpec {
  enum class Subject { kTrackedPoint, kMeasureMean };
  enum class Shape { kWhole, kHalfSpace, kBall };

  Subject subject = Subject::kTrackedPoint;
  std::vector<double> x0;  // for kTrackedPoint
  Shape shape = Shape::kHalfSpace;
  std::vector<double> direction;  // half-space: direction . X >= threshold
  double threshold = 0.0;
  std::vector<double> center;  // ball: |X - center| <= radius
  double radius = 0.0;

  bool contains(std::span<const double> x) const {
    switch (shape) {
      case Shape::kWhole: return true;
      case Shape::kHalfSpace: {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += direction[i] * x[i];
        return s >= threshold;
      }
      case Shape::kBall: {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - center[i]) * (x[i] - center[i]);
        return std::sqrt(s) <= radius;
      }
    }
    return false;
  }

  void validate(std::size_t dim) const {
    if (subject == Subject::kTrackedPoint) detail::require(x0.size() == dim, "event: x0 has the wrong dimension");
    if (shape == Shape::kHalfSpace) detail::require(direction.size() == dim, "event: direction has the wrong dimension");
    if (shape == Shape::kBall) {
      detail::require(center.size() == dim, "event: center has the wrong dimension");
      detail::require(radius >= 0.0, "event: negative radius");
    }
  }
};

struct RareEventEstimate {
  double p_hat = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double ess = 0.0;
  std::size_t hits = 0;
  std::size_t n_mc = 0;
  bool importance_sampled = false;
  bool reliable = true;  // false when ess < 10
};

namespace detail {

struct EventSetup {
  std::vector<double> eval_points;
  std::size_t index = 0;
};

inline EventSetup event_setup(const Ensemble& init, const EventSpec& ev) {
  EventSetup s;
  if (ev.subject == EventSpec::Subject::kTrackedPoint) s.index = locate_point(init, s.eval_points, ev.x0);
  return s;
}

inline std::vector<double> event_subject(const FlowTrajectory& traj, const EventSpec& ev, std::size_t index) {
  const std::size_t M = traj.grid().steps();
  if (ev.subject == EventSpec::Subject::kTrackedPoint) {
    const auto x = traj.state(M, index);
    return {x.begin(), x.end()};
  }
  return mean(traj.measure_at(M));
}

}  // namespace detail

/// P(event) for the eps-scaled SDE. Without a tilt: naive Monte Carlo with a Wilson
/// interval. With tilt h: samples the controlled SDE and reweights each replica by
/// the discrete likelihood ratio exp(-(1/sqrt eps) sum h_j.dW_j - (1/(2 eps)) sum |h_j|^2 dt),
/// reporting a normal-theory interval and the effective sample size.
inline RareEventEstimate rare_event_probability(const CoefficientField& field, const Ensemble& init,
                                                const EventSpec& event, double epsilon, std::size_t n_mc,
                                                std::uint64_t seed, const TimeGrid& grid,
                                                const std::optional<ControlPath>& tilt = std::nullopt,
                                                std::size_t workers = 1) {
  detail::require(n_mc >= 100, "rare_event_probability: n_mc must be >= 100");
  detail::require(epsilon >= 0.0, "rare_event_probability: epsilon must be >= 0");
  event.validate(field.dim);
  if (tilt) {
    detail::require(epsilon > 0.0, "rare_event_probability: tilting needs epsilon > 0");
    detail::require(tilt->grid == grid && tilt->modes == field.modes, "rare_event_probability: tilt shape mismatch");
  }
  const auto setup = detail::event_setup(init, event);
  const double tilt_energy = tilt ? energy(*tilt) : 0.0;
  std::vector<double> y(n_mc);
  parallel_for(n_mc, workers, [&](std::size_t r) {
    const auto noise = sample_noise(grid, field.modes, seed, static_cast<std::uint32_t>(r));
    if (!tilt) {
      const auto traj = solve_sde(field, init, noise, epsilon, grid, setup.eval_points);
      y[r] = event.contains(detail::event_subject(traj, event, setup.index)) ? 1.0 : 0.0;
      return;
    }
    const auto traj = solve_controlled(field, init, noise, epsilon, *tilt, grid, setup.eval_points);
    if (!event.contains(detail::event_subject(traj, event, setup.index))) {
      y[r] = 0.0;
      return;
    }
    double hw = 0.0;
    for (std::size_t e = 0; e < tilt->values.size(); ++e) hw += tilt->values[e] * noise.increments[e];
    // sum |h|^2 dt / (2 eps) = energy / eps
    y[r] = std::exp(-hw / std::sqrt(epsilon) - tilt_energy / epsilon);
  });
  RareEventEstimate est;
  est.n_mc = n_mc;
  est.hits = static_cast<std::size_t>(std::count_if(y.begin(), y.end(), [](double v) { return v > 0.0; }));
  if (!tilt) {
    est.p_hat = static_cast<double>(est.hits) / static_cast<double>(n_mc);
    const auto ci = stats::wilson_interval(est.hits, n_mc);
    est.ci_low = ci.low;
    est.ci_high = ci.high;
    est.ess = static_cast<double>(n_mc);
    return est;
  }
  est.importance_sampled = true;
  const auto mv = stats::mean_var(y);
  est.p_hat = mv.mean;
  const double half = 1.959963984540054 * mv.standard_error;
  est.ci_low = std::max(0.0, est.p_hat - half);
  est.ci_high = std::min(1.0, est.p_hat + half);
  std::vector<double> y2(n_mc);
  for (std::size_t r = 0; r < n_mc; ++r) y2[r] = y[r] * y[r];
  const double s1 = pairwise_sum(y), s2 = pairwise_sum(y2);
  est.ess = s2 > 0.0 ? s1 * s1 / s2 : 0.0;
  est.reliable = est.ess >= 10.0;
  return est;
}

// ---------------------------------------------------------------------------
// -eps log p against the rate
// ---------------------------------------------------------------------------

struct ScalingRow {
  double epsilon = 0.0;
  RareEventEstimate estimate;
  double neg_eps_log_p = std::numeric_limits<double>::infinity();
};

struct ScalingReport {
  std::vector<ScalingRow> rows;
  RateEstimate rate;
  double rate_value = 0.0;  // I*, +inf when unreachable
  bool strictly_decreasing = false;
  double terminal_gap = std::numeric_limits<double>::infinity();
  bool within_band = false;
  bool all_zero = false;
  bool consistent_unreachable = false;  // I* = inf and every p_hat = 0
};

struct ScalingOptions {
  bool use_tilt = true;
  double band = 0.15;
  RateOptions rate;
  double target_tolerance = 1e-6;
  std::size_t workers = 1;
};

/// Target for the rate function: the point of the event's boundary nearest to the
/// uncontrolled endpoint (exact for isotropic affine dynamics in d = 1). Empty when
/// the uncontrolled endpoint already lies in the event.
inline std::optional<TargetSpec> event_boundary_target(const CoefficientField& field, const Ensemble& init,
                                                       const EventSpec& event, const TimeGrid& grid,
                                                       double tolerance) {
  const auto setup = detail::event_setup(init, event);
  const auto free_run = solve_skeleton(field, init, ControlPath::zero(grid, field.modes), grid, setup.eval_points);
  const auto x = detail::event_subject(free_run, event, setup.index);
  if (event.contains(x)) return std::nullopt;
  std::vector<double> a = x;
  if (event.shape == EventSpec::Shape::kHalfSpace) {
    double ux = 0.0, uu = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      ux += event.direction[i] * x[i];
      uu += event.direction[i] * event.direction[i];
    }
    for (std::size_t i = 0; i < x.size(); ++i) a[i] = x[i] + (event.threshold - ux) / uu * event.direction[i];
  } else if (event.shape == EventSpec::Shape::kBall) {
    double r = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) r += (x[i] - event.center[i]) * (x[i] - event.center[i]);
    r = std::sqrt(r);
    for (std::size_t i = 0; i < x.size(); ++i) a[i] = event.center[i] + event.radius * (x[i] - event.center[i]) / r;
  }
  if (event.subject == EventSpec::Subject::kTrackedPoint) return TargetSpec{target::TerminalPoint{event.x0, a}, tolerance};
  return TargetSpec{target::TerminalMean{a}, tolerance};
}

inline ScalingReport scaling_check(const CoefficientField& field, const Ensemble& init, const EventSpec& event,
                                   const std::vector<double>& epsilons, std::size_t n_mc, std::uint64_t seed,
                                   const TimeGrid& grid, const ScalingOptions& opts = {}) {
  detail::require(!epsilons.empty(), "scaling_check: no epsilons");
  for (std::size_t i = 1; i < epsilons.size(); ++i) {
    detail::require(epsilons[i] < epsilons[i - 1], "scaling_check: epsilons must be strictly decreasing");
  }
  event.validate(field.dim);
  const auto tgt = event_boundary_target(field, init, event, grid, opts.target_tolerance);
  std::optional<ControlPath> tilt;
  RateEstimate rate{0.0, ControlPath::zero(grid, field.modes), 0.0, true, false, 0, 0, 0.0, {}};
  if (tgt) {
    rate = minimize_rate(field, init, *tgt, grid, opts.rate);
    if (opts.use_tilt && !rate.infeasible) tilt = rate.control;
  }
  ScalingReport rep{{}, std::move(rate)};
  rep.rate_value = rep.rate.value();
  for (double eps : epsilons) {
    ScalingRow row;
    row.epsilon = eps;
    row.estimate = rare_event_probability(field, init, event, eps, n_mc, seed, grid, tilt, opts.workers);
    if (row.estimate.p_hat > 0.0) row.neg_eps_log_p = -eps * std::log(row.estimate.p_hat);
    rep.rows.push_back(row);
  }
  rep.all_zero = std::all_of(rep.rows.begin(), rep.rows.end(), [](const ScalingRow& r) { return r.estimate.p_hat == 0.0; });
  rep.strictly_decreasing = !rep.all_zero;
  for (std::size_t i = 1; i < rep.rows.size(); ++i) {
    if (!(rep.rows[i].neg_eps_log_p < rep.rows[i - 1].neg_eps_log_p)) rep.strictly_decreasing = false;
  }
  if (std::isfinite(rep.rate_value)) {
    rep.terminal_gap = std::abs(rep.rows.back().neg_eps_log_p - rep.rate_value);
    rep.within_band = rep.terminal_gap <= opts.band;
  }
  rep.consistent_unreachable = !std::isfinite(rep.rate_value) && rep.all_zero;
  return rep;
}

// ---------------------------------------------------------------------------
// Moment and Lipschitz bounds of the flow
// ---------------------------------------------------------------------------

struct RatioRow {
  double key = 0.0;  // |x| for moments, |x - y| for Lipschitz
  double ratio = 0.0;
};

struct RatioReport {
  std::vector<RatioRow> rows;
  double max_over_min = std::numeric_limits<double>::infinity();
  bool uniform = false;  // min > 0 and max/min <= 10
};

namespace detail {

inline RatioReport summarize_ratios(std::vector<RatioRow> rows) {
  RatioReport rep;
  rep.rows = std::move(rows);
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& r : rep.rows) {
    lo = std::min(lo, r.ratio);
    hi = std::max(hi, r.ratio);
  }
  if (lo > 0.0) rep.max_over_min = hi / lo;
  rep.uniform = lo > 0.0 && rep.max_over_min <= 10.0;
  return rep;
}

inline double norm_pow(std::span<const double> x, int p) {
  double s = 0.0;
  for (double c : x) s += c * c;
  return std::pow(std::sqrt(s), p);
}

}  // namespace detail

/// E[sup_t |X_t(x)|^p] / (1 + |x|^p) for each starting point x (d-vectors, row-major),
/// tracked as zero-weight points alongside `init`.
inline RatioReport moment_bounds_check(const CoefficientField& field, const Ensemble& init,
                                       const std::vector<double>& starts, int p, double epsilon, std::size_t replicas,
                                       std::uint64_t seed, const TimeGrid& grid, std::size_t workers = 1) {
  detail::require(replicas >= 30, "moment_bounds_check: replicas must be >= 30");
  detail::require(p >= 2 && p % 2 == 0, "moment_bounds_check: p must be an even integer");
  const std::size_t d = field.dim, nx = starts.size() / d, n = init.size();
  detail::require(nx >= 1 && starts.size() % d == 0, "moment_bounds_check: bad start points");
  std::vector<double> sup(replicas * nx);
  parallel_for(replicas, workers, [&](std::size_t r) {
    const auto noise = sample_noise(grid, field.modes, seed, static_cast<std::uint32_t>(r));
    const auto traj = solve_sde(field, init, noise, epsilon, grid, starts);
    for (std::size_t e = 0; e < nx; ++e) {
      double best = 0.0;
      for (std::size_t j = 0; j <= grid.steps(); ++j) best = std::max(best, detail::norm_pow(traj.state(j, n + e), p));
      sup[r * nx + e] = best;
    }
  });
  std::vector<RatioRow> rows;
  for (std::size_t e = 0; e < nx; ++e) {
    std::vector<double> col(replicas);
    for (std::size_t r = 0; r < replicas; ++r) col[r] = sup[r * nx + e];
    const auto x = std::span<const double>(starts).subspan(e * d, d);
    rows.push_back({std::pow(detail::norm_pow(x, 2), 0.5), pairwise_mean(col) / (1.0 + detail::norm_pow(x, p))});
  }
  return detail::summarize_ratios(std::move(rows));
}

/// E[sup_t |X_t(x) - X_t(x + s e_1)|^2] / s^2 for each separation s.
inline RatioReport flow_lipschitz_check(const CoefficientField& field, const Ensemble& init, std::vector<double> base,
                                        const std::vector<double>& separations, double epsilon, std::size_t replicas,
                                        std::uint64_t seed, const TimeGrid& grid, std::size_t workers = 1) {
  detail::require(replicas >= 30, "flow_lipschitz_check: replicas must be >= 30");
  const std::size_t d = field.dim, n = init.size(), ns = separations.size();
  detail::require(base.size() == d, "flow_lipschitz_check: base point has the wrong dimension");
  std::vector<double> pts = base;
  for (double s : separations) {
    detail::require(s > 0.0, "flow_lipschitz_check: separations must be positive");
    std::vector<double> y = base;
    y[0] += s;
    pts.insert(pts.end(), y.begin(), y.end());
  }
  std::vector<double> sup(replicas * ns);
  parallel_for(replicas, workers, [&](std::size_t r) {
    const auto noise = sample_noise(grid, field.modes, seed, static_cast<std::uint32_t>(r));
    const auto traj = solve_sde(field, init, noise, epsilon, grid, pts);
    for (std::size_t e = 0; e < ns; ++e) {
      double best = 0.0;
      for (std::size_t j = 0; j <= grid.steps(); ++j) {
        const auto a = traj.state(j, n), b = traj.state(j, n + 1 + e);
        double s2 = 0.0;
        for (std::size_t i = 0; i < d; ++i) s2 += (a[i] - b[i]) * (a[i] - b[i]);
        best = std::max(best, s2);
      }
      sup[r * ns + e] = best;
    }
  });
  std::vector<RatioRow> rows;
  for (std::size_t e = 0; e < ns; ++e) {
    std::vector<double> col(replicas);
    for (std::size_t r = 0; r < replicas; ++r) col[r] = sup[r * ns + e];
    rows.push_back({separations[e], pairwise_mean(col) / (separations[e] * separations[e])});
  }
  return detail::summarize_ratios(std::move(rows));
}

}  // namespace cspde
