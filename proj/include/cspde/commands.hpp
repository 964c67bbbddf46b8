#pragma once

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cspde/config.hpp"
#include "cspde/flow.hpp"
#include "cspde/ldp.hpp"
#include "cspde/ratefn.hpp"
#include "cspde/wasserstein.hpp"
#include "cspde/weakform.hpp"

#ifndef CSPDE_VERSION
#define CSPDE_VERSION "0.1.0"
#endif

namespace cspde {

struct CommandResult {
  bool passed = true;
  json report;
  std::vector<std::string> outputs;
};

struct RunOptions {
  std::size_t workers = 1;
};

namespace detail {

namespace fs = std::filesystem;

inline void write_file(const fs::path& path, const std::function<void(std::ostream&)>& fill) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NumericalError("cannot write " + path.string());
  fill(out);
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline void write_measures_csv(std::ostream& out, const FlowTrajectory& traj, const W2Options& w2) {
  out.precision(17);
  const std::size_t d = traj.dim();
  out << "step,time";
  for (std::size_t k = 0; k < d; ++k) out << ",mean_" << (k + 1);
  out << ",second_moment,w2_to_initial\n";
  const Ensemble& mu0 = traj.initial();
  for (std::size_t j = 0; j <= traj.grid().steps(); ++j) {
    const auto mu = traj.measure_at(j);
    out << j << ',' << traj.grid().node(j);
    for (double m : mean(mu)) out << ',' << m;
    out << ',' << second_moment(mu) << ',' << (j == 0 ? 0.0 : wasserstein2(mu, mu0, w2).value) << '\n';
  }
}

inline void write_control_csv(std::ostream& out, const ControlPath& h) {
  out.precision(17);
  out << "step,time";
  for (std::size_t k = 0; k < h.modes; ++k) out << ",h_" << (k + 1);
  out << '\n';
  for (std::size_t j = 0; j < h.grid.steps(); ++j) {
    out << j << ',' << h.grid.node(j);
    for (double v : h.at(j)) out << ',' << v;
    out << '\n';
  }
}

inline json fit_json(const stats::LineFit& f) {
  return {{"defined", f.valid}, {"slope", f.slope}, {"slope_se", f.slope_se}, {"intercept", f.intercept}};
}

inline json rate_json(const RateEstimate& r) {
  return {{"energy", r.energy},
          {"value", r.value()},
          {"converged", r.converged},
          {"infeasible", r.infeasible},
          {"constraint_gap", r.constraint_gap},
          {"iterations", r.iterations},
          {"stages", r.stages},
          {"final_penalty", r.final_penalty},
          {"stage_gaps", r.stage_gaps}};
}

inline void trajectory_outputs(const fs::path& dir, const FlowTrajectory& traj, const RunConfig& c, CommandResult& res) {
  write_file(dir / "trajectory.csv", [&](std::ostream& o) { write_trajectory_csv(o, traj); });
  write_file(dir / "measures.csv", [&](std::ostream& o) { write_measures_csv(o, traj, c.rate.w2); });
  res.outputs = {"trajectory.csv", "measures.csv"};
}

inline void require_block(bool present, const std::string& command, const std::string& block) {
  if (!present) throw ConfigError("command '" + command + "' needs a '" + block + "' section");
}

inline void write_report(const fs::path& dir, const std::string& name, const json& report, CommandResult& res) {
  write_file(dir / name, [&](std::ostream& o) { o << report.dump(2) << '\n'; });
  res.outputs.push_back(name);
}

}  // namespace detail

inline CommandResult cmd_simulate(const RunConfig& c, const RunOptions&) {
  const auto field = make_field(c);
  const auto init = make_ensemble(c.initial, c.field.dim);
  const auto grid = c.grid();
  const auto noise = sample_noise(grid, c.modes, c.seed, 0);
  const auto traj = solve_sde(field, init, noise, c.epsilon, grid, c.tracked);
  CommandResult res;
  detail::trajectory_outputs(c.output_dir, traj, c, res);
  res.report = {{"particles", init.size()}, {"tracked", traj.tracked()}, {"epsilon", c.epsilon}};
  return res;
}

inline CommandResult cmd_skeleton(const RunConfig& c, const RunOptions&) {
  const auto field = make_field(c);
  const auto init = make_ensemble(c.initial, c.field.dim);
  const auto grid = c.grid();
  const auto h = make_control(c.control.value_or(ControlConfig{}), grid, c.modes);
  const auto traj = solve_skeleton(field, init, h, grid, c.tracked, c.rate.scheme);
  CommandResult res;
  detail::trajectory_outputs(c.output_dir, traj, c, res);
  res.report = {{"particles", init.size()}, {"tracked", traj.tracked()}, {"control_energy", energy(h)}};
  return res;
}

inline CommandResult cmd_rate(const RunConfig& c, const RunOptions&) {
  detail::require_block(c.target.has_value(), "rate", "target");
  const auto field = make_field(c);
  const auto init = make_ensemble(c.initial, c.field.dim);
  const auto grid = c.grid();
  auto opts = c.rate;
  opts.eval_points = c.tracked;
  const auto est = minimize_rate(field, init, make_target(*c.target, c.field.dim), grid, opts);
  CommandResult res;
  res.passed = est.converged;
  res.report = detail::rate_json(est);
  detail::write_file(std::filesystem::path(c.output_dir) / "control.csv",
                     [&](std::ostream& o) { detail::write_control_csv(o, est.control); });
  res.outputs.push_back("control.csv");
  detail::write_report(c.output_dir, "rate.json", res.report, res);
  return res;
}

inline CommandResult cmd_ldp1(const RunConfig& c, const RunOptions& run) {
  detail::require_block(c.sweep.has_value(), "ldp1", "sweep");
  const auto& b = *c.sweep;
  const auto field = make_field(c);
  const auto init = make_ensemble(c.initial, c.field.dim);
  const auto grid = c.grid();
  const auto h = make_control(b.control, grid, c.modes);
  SweepConfig cfg{b.epsilons, b.replicas, c.seed, c.norm, b.budget, run.workers};
  const auto rep = ldp1_sweep(field, init, [&](double) { return h; }, cfg, grid, c.tracked);
  CommandResult res;
  json rows = json::array();
  for (const auto& r : rep.rows) {
    rows.push_back({{"epsilon", r.epsilon}, {"mean", r.mean}, {"standard_error", r.standard_error},
                    {"q95", r.q95}, {"max", r.max}, {"control_energy", r.control_energy}});
  }
  res.passed = rep.slope.valid && rep.slope.slope >= b.slope_low && rep.slope.slope <= b.slope_high;
  res.report = {{"rows", rows},
                {"slope", detail::fit_json(rep.slope)},
                {"slope_band", {b.slope_low, b.slope_high}},
                {"all_zero", rep.all_zero},
                {"means_monotone", rep.means_monotone},
                {"passed", res.passed}};
  detail::write_file(std::filesystem::path(c.output_dir) / "ldp1.csv", [&](std::ostream& o) {
    o.precision(17);
    o << "epsilon,mean,standard_error,q95,max,control_energy\n";
    for (const auto& r : rep.rows) {
      o << r.epsilon << ',' << r.mean << ',' << r.standard_error << ',' << r.q95 << ',' << r.max << ','
        << r.control_energy << '\n';
    }
  });
  res.outputs.push_back("ldp1.csv");
  detail::write_report(c.output_dir, "ldp1.json", res.report, res);
  return res;
}

inline CommandResult cmd_ldp2(const RunConfig& c, const RunOptions&) {
  detail::require_block(c.ldp2.has_value(), "ldp2", "ldp2");
  const auto& b = *c.ldp2;
  const auto field = make_field(c);
  const auto init = make_ensemble(c.initial, c.field.dim);
  const auto grid = c.grid();
  const auto h = make_control(b.control, grid, c.modes);
  const auto rep = ldp2_sweep(field, init, h, b.amplitude, b.mode, b.frequencies, c.norm, b.tolerance, c.tracked);
  CommandResult res;
  json rows = json::array();
  for (const auto& r : rep.rows) rows.push_back({{"frequency", r.frequency}, {"norm", r.norm}, {"control_energy", r.control_energy}});
  res.passed = rep.decreasing_trend && rep.final_below_tolerance;
  res.report = {{"rows", rows},
                {"kendall_tau", rep.trend.tau},
                {"p_decreasing", rep.trend.p_decreasing},
                {"decreasing_trend", rep.decreasing_trend},
                {"final_norm", rep.final_norm},
                {"tolerance", b.tolerance},
                {"final_below_tolerance", rep.final_below_tolerance},
                {"passed", res.passed}};
  detail::write_file(std::filesystem::path(c.output_dir) / "ldp2.csv", [&](std::ostream& o) {
    o.precision(17);
    o << "frequency,norm,control_energy\n";
    for (const auto& r : rep.rows) o << r.frequency << ',' << r.norm << ',' << r.control_energy << '\n';
  });
  res.outputs.push_back("ldp2.csv");
  detail::write_report(c.output_dir, "ldp2.json", res.report, res);
  return res;
}

inline CommandResult cmd_scaling(const RunConfig& c, const RunOptions& run) {
  detail::require_block(c.event.has_value(), "scaling", "event");
  detail::require_block(c.scaling.has_value(), "scaling", "scaling");
  const auto& b = *c.scaling;
  const auto field = make_field(c);
  const auto init = make_ensemble(c.initial, c.field.dim);
  const auto grid = c.grid();
  ScalingOptions opts;
  opts.use_tilt = b.use_tilt;
  opts.band = b.band;
  opts.rate = c.rate;
  opts.workers = run.workers;
  if (c.target) opts.target_tolerance = c.target->tolerance;
  const auto rep = scaling_check(field, init, make_event(*c.event), b.epsilons, b.n_mc, c.seed, grid, opts);
  CommandResult res;
  json rows = json::array();
  for (const auto& r : rep.rows) {
    rows.push_back({{"epsilon", r.epsilon},
                    {"p_hat", r.estimate.p_hat},
                    {"ci_low", r.estimate.ci_low},
                    {"ci_high", r.estimate.ci_high},
                    {"ess", r.estimate.ess},
                    {"hits", r.estimate.hits},
                    {"importance_sampled", r.estimate.importance_sampled},
                    {"reliable", r.estimate.reliable},
                    {"neg_eps_log_p", r.neg_eps_log_p}});
  }
  res.passed = (rep.strictly_decreasing && rep.within_band) || rep.consistent_unreachable;
  res.report = {{"rows", rows},
                {"rate", detail::rate_json(rep.rate)},
                {"rate_infinite", !std::isfinite(rep.rate_value)},
                {"strictly_decreasing", rep.strictly_decreasing},
                {"terminal_gap", rep.terminal_gap},
                {"band", b.band},
                {"within_band", rep.within_band},
                {"all_zero", rep.all_zero},
                {"consistent_unreachable", rep.consistent_unreachable},
                {"passed", res.passed}};
  detail::write_file(std::filesystem::path(c.output_dir) / "scaling.csv", [&](std::ostream& o) {
    o.precision(17);
    o << "epsilon,p_hat,ci_low,ci_high,ess,neg_eps_log_p,rate\n";
    for (const auto& r : rep.rows) {
      o << r.epsilon << ',' << r.estimate.p_hat << ',' << r.estimate.ci_low << ',' << r.estimate.ci_high << ','
        << r.estimate.ess << ',' << r.neg_eps_log_p << ',' << rep.rate_value << '\n';
    }
  });
  res.outputs.push_back("scaling.csv");
  detail::write_report(c.output_dir, "scaling.json", res.report, res);
  return res;
}

inline CommandResult cmd_weakcheck(const RunConfig& c, const RunOptions& run) {
  detail::require_block(c.weak.has_value(), "weakcheck", "weak");
  const auto& w = *c.weak;
  const auto field = make_field(c);
  const auto init = make_ensemble(c.initial, c.field.dim);
  const auto grid = c.grid();
  const std::size_t d = c.field.dim;
  const auto noise = sample_noise(grid, c.modes, c.seed, 0);
  const auto traj = solve_sde(field, init, noise, c.epsilon, grid);
  const double r0 = w.flat_radius > 0.0 ? w.flat_radius : pilot_radius(traj);
  const double r1 = w.support_radius > 0.0 ? w.support_radius : 1.5 * r0;
  const TestFunction phi = w.test_function == "constant" ? bump_constant(d, w.value, r0, r1)
                           : w.test_function == "linear" ? bump_linear(w.direction, r0, r1)
                                                         : bump_square(d, r0, r1);
  const auto residual = weak_residual(traj, field, phi, noise, c.epsilon);
  double max_abs = 0.0;
  bool finite = true;
  for (double v : residual.per_step) {
    max_abs = std::max(max_abs, std::abs(v));
    finite = finite && std::isfinite(v);
  }
  CommandResult res;
  res.passed = residual.per_step.front() == 0.0 && finite;
  res.report = {{"test_function", w.test_function},
                {"flat_radius", r0},
                {"support_radius", r1},
                {"initial_residual", residual.per_step.front()},
                {"terminal_residual", residual.terminal},
                {"max_abs_residual", max_abs}};
  if (w.qv_replicas > 0) {
    const auto qv = quadratic_variation_check(field, init, grid, phi, c.epsilon, w.qv_replicas, c.seed, run.workers);
    const bool ok = std::abs(qv.z_score) <= 3.0;
    res.passed = res.passed && ok;
    res.report["quadratic_variation"] = {{"replicas", qv.replicas},
                                         {"empirical_qv", qv.empirical_qv},
                                         {"predicted_qv", qv.predicted_qv},
                                         {"independent_qv", qv.independent_qv},
                                         {"z_score", qv.z_score},
                                         {"z_independent", qv.z_independent},
                                         {"passed", ok}};
  }
  if (w.refinement_levels > 0) {
    const auto ref = weak_refinement(field, init, c.horizon, c.steps, w.refinement_levels, phi, c.epsilon,
                                     w.refinement_replicas, c.seed, run.workers);
    const auto& f = ref.mean_square_order;
    const bool ok = f.valid && f.slope >= w.order_low && f.slope <= w.order_high;
    res.passed = res.passed && ok;
    json levels = json::array();
    for (const auto& l : ref.levels) {
      levels.push_back({{"steps", l.steps}, {"dt", l.dt}, {"mean_square_max", l.mean_square_max}, {"mean_abs_max", l.mean_abs_max}});
    }
    res.report["refinement"] = {{"levels", levels},
                                {"mean_square_order", detail::fit_json(f)},
                                {"pathwise_order", detail::fit_json(ref.pathwise_order)},
                                {"order_band", {w.order_low, w.order_high}},
                                {"passed", ok}};
  }
  res.report["passed"] = res.passed;
  detail::write_file(std::filesystem::path(c.output_dir) / "residual.csv", [&](std::ostream& o) {
    o.precision(17);
    o << "step,time,residual\n";
    for (std::size_t j = 0; j < residual.per_step.size(); ++j) o << j << ',' << grid.node(j) << ',' << residual.per_step[j] << '\n';
  });
  res.outputs.push_back("residual.csv");
  detail::write_report(c.output_dir, "weak.json", res.report, res);
  return res;
}

inline std::vector<std::string> command_names() {
  return {"simulate", "skeleton", "rate", "ldp1", "ldp2", "scaling", "weakcheck"};
}

/// Runs one command, writing its files and summary.json into c.output_dir.
inline CommandResult run_command(const std::string& name, const RunConfig& c, const RunOptions& run = {}) {
  using Fn = CommandResult (*)(const RunConfig&, const RunOptions&);
  static const std::map<std::string, Fn> table = {{"simulate", cmd_simulate}, {"skeleton", cmd_skeleton},
                                                  {"rate", cmd_rate},         {"ldp1", cmd_ldp1},
                                                  {"ldp2", cmd_ldp2},         {"scaling", cmd_scaling},
                                                  {"weakcheck", cmd_weakcheck}};
  const auto it = table.find(name);
  if (it == table.end()) throw ConfigError("unknown command '" + name + "'");
  std::filesystem::create_directories(c.output_dir);
  CommandResult res = it->second(c, run);
  json summary;
  summary["schema_version"] = kSchemaVersion;
  summary["command"] = name;
  summary["version"] = CSPDE_VERSION;
  summary["seed"] = c.seed;
  summary["config_hash"] = detail::hex64(config_hash(c));
  summary["passed"] = res.passed;
  summary["outputs"] = res.outputs;
  summary["report"] = res.report;
  summary["config"] = resolved_json(c);
  summary["timestamp"] = detail::utc_timestamp();
  detail::write_report(c.output_dir, "summary.json", summary, res);
  return res;
}

}  // namespace cspde
