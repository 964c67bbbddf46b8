#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cspde/coefficients.hpp"
#include "cspde/errors.hpp"
#include "cspde/flow.hpp"
#include "cspde/ldp.hpp"
#include "cspde/measure.hpp"
#include "cspde/noise.hpp"
#include "cspde/ratefn.hpp"
#include "cspde/wasserstein.hpp"

namespace cspde {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

struct FieldConfig {
  std::string name = "constant";
  std::map<std::string, double> params;  // fully materialized from builtin_defaults
  std::size_t dim = 1;
};

struct MeasureConfig {
  std::string kind = "point_mass";  // point_mass | uniform_grid | gaussian | explicit | csv
  std::vector<double> x0;
  std::vector<double> lo, hi;
  std::vector<double> mean;
  double stddev = 1.0;
  std::vector<double> points;   // explicit, row-major
  std::vector<double> weights;  // explicit; empty means equal weights
  std::string path;             // csv
  std::size_t particles = 1;
  std::uint64_t seed = 0;
};

struct ControlConfig {
  std::string kind = "zero";  // zero | constant | values
  std::vector<double> value;  // constant: K entries
  std::vector<double> values;  // values: M x K entries
};

struct TargetConfig {
  std::string kind = "point";  // point | mean | measure
  std::vector<double> x0;
  std::vector<double> a;
  MeasureConfig goal;
  double tolerance = 1e-6;
};

struct SweepBlock {
  std::vector<double> epsilons;
  std::size_t replicas = 200;
  double budget = 10.0;
  ControlConfig control;
  double slope_low = 0.4;
  double slope_high = 0.6;
};

struct Ldp2Block {
  ControlConfig control;
  double amplitude = 1.0;
  std::size_t mode = 0;
  std::vector<double> frequencies = {1, 2, 4, 8, 16, 32, 64};
  double tolerance = 1e-2;
};

struct EventBlock {
  std::string subject = "point";  // point | mean
  std::vector<double> x0;
  std::string shape = "half_space";  // half_space | ball | whole
  std::vector<double> direction;
  double threshold = 0.0;
  std::vector<double> center;
  double radius = 0.0;
};

struct ScalingBlock {
  std::vector<double> epsilons;
  std::size_t n_mc = 100000;
  bool use_tilt = true;
  double band = 0.15;
};

struct WeakBlock {
  std::string test_function = "square";  // square | linear | constant
  double value = 1.0;                    // constant
  std::vector<double> direction;         // linear
  double flat_radius = 0.0;              // 0: twice the pilot state bound
  double support_radius = 0.0;           // 0: 1.5 x flat radius
  std::size_t qv_replicas = 0;
  std::size_t refinement_levels = 0;
  std::size_t refinement_replicas = 200;
  double order_low = 0.8;
  double order_high = 1.2;
};

struct RunConfig {
  int schema_version = kSchemaVersion;
  FieldConfig field;
  MeasureConfig initial;
  double horizon = 1.0;
  std::size_t steps = 100;
  NormSpec norm;
  std::size_t modes = 1;
  std::uint64_t seed = 0;
  double epsilon = 0.1;
  std::vector<double> tracked;  // extra zero-weight evaluation points, row-major
  std::string output_dir = "out";
  RateOptions rate;
  std::optional<ControlConfig> control;
  std::optional<TargetConfig> target;
  std::optional<SweepBlock> sweep;
  std::optional<Ldp2Block> ldp2;
  std::optional<EventBlock> event;
  std::optional<ScalingBlock> scaling;
  std::optional<WeakBlock> weak;

  TimeGrid grid() const { return TimeGrid(horizon, steps); }
};

namespace detail {

/// Cursor over one JSON object that records the key path for diagnostics and
/// rejects keys nobody asked for.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) fail(path_, "expected an object");
  }

  [[noreturn]] static void fail(const std::string& key, const std::string& why) {
    throw ConfigError("config key '" + key + "': " + why);
  }

  std::string key(const std::string& name) const { return path_.empty() ? name : path_ + "." + name; }
  bool has(const std::string& name) const { return node_.contains(name); }

  const json& raw(const std::string& name) {
    seen_.insert(name);
    return node_.at(name);
  }

  template <class T>
  void get(const std::string& name, T& out) {
    if (!has(name)) return;
    const json& v = raw(name);
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) fail(key(name), "expected a number");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) fail(key(name), "expected true or false");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.get<std::int64_t>() < 0 && !v.is_number_unsigned())) {
          fail(key(name), "expected a non-negative integer");
        }
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) fail(key(name), "expected a string");
      } else if constexpr (std::is_same_v<T, std::vector<double>>) {
        if (!v.is_array()) fail(key(name), "expected an array of numbers");
        for (const auto& e : v) {
          if (!e.is_number()) fail(key(name), "expected an array of numbers");
        }
      }
      out = v.get<T>();
    } catch (const json::exception& e) {
      fail(key(name), e.what());
    }
  }

  /// Accepts a flat array or an array of equal-length arrays (points).
  void get_points(const std::string& name, std::vector<double>& out) {
    if (!has(name)) return;
    const json& v = raw(name);
    if (!v.is_array()) fail(key(name), "expected an array");
    out.clear();
    for (const auto& e : v) {
      if (e.is_number()) {
        out.push_back(e.get<double>());
      } else if (e.is_array()) {
        for (const auto& c : e) {
          if (!c.is_number()) fail(key(name), "expected numbers");
          out.push_back(c.get<double>());
        }
      } else {
        fail(key(name), "expected numbers or arrays of numbers");
      }
    }
  }

  Section child(const std::string& name) { return Section(raw(name), key(name)); }

  void finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      if (!seen_.count(it.key())) fail(key(it.key()), "unknown key");
    }
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void require_key(bool ok, const std::string& key, const std::string& why) {
  if (!ok) Section::fail(key, why);
}

inline MeasureConfig parse_measure(Section s, std::size_t dim) {
  MeasureConfig m;
  s.get("kind", m.kind);
  s.get("x0", m.x0);
  s.get("lo", m.lo);
  s.get("hi", m.hi);
  s.get("mean", m.mean);
  s.get("stddev", m.stddev);
  s.get_points("points", m.points);
  s.get("weights", m.weights);
  s.get("path", m.path);
  s.get("particles", m.particles);
  s.get("seed", m.seed);
  s.finish();
  const std::string k = s.key("kind");
  if (m.kind == "point_mass") {
    if (m.x0.empty()) m.x0.assign(dim, 0.0);
    require_key(m.x0.size() == dim, s.key("x0"), "needs " + std::to_string(dim) + " entries");
  } else if (m.kind == "uniform_grid") {
    require_key(m.lo.size() == dim, s.key("lo"), "needs " + std::to_string(dim) + " entries");
    require_key(m.hi.size() == dim, s.key("hi"), "needs " + std::to_string(dim) + " entries");
  } else if (m.kind == "gaussian") {
    if (m.mean.empty()) m.mean.assign(dim, 0.0);
    require_key(m.mean.size() == dim, s.key("mean"), "needs " + std::to_string(dim) + " entries");
    require_key(m.stddev > 0.0, s.key("stddev"), "must be positive");
  } else if (m.kind == "explicit") {
    require_key(!m.points.empty() && m.points.size() % dim == 0, s.key("points"), "needs n x d numbers");
    if (m.weights.empty()) m.weights.assign(m.points.size() / dim, 1.0 / static_cast<double>(m.points.size() / dim));
    require_key(m.weights.size() == m.points.size() / dim, s.key("weights"), "needs one weight per point");
    m.particles = m.weights.size();
  } else if (m.kind == "csv") {
    require_key(!m.path.empty(), s.key("path"), "required for kind csv");
  } else {
    Section::fail(k, "unknown measure kind '" + m.kind + "'");
  }
  require_key(m.particles >= 1, s.key("particles"), "must be >= 1");
  return m;
}

inline ControlConfig parse_control(Section s, std::size_t modes, std::size_t steps) {
  ControlConfig c;
  s.get("kind", c.kind);
  s.get("value", c.value);
  s.get_points("values", c.values);
  s.finish();
  if (c.kind == "zero") {
  } else if (c.kind == "constant") {
    require_key(c.value.size() == modes, s.key("value"), "needs K = " + std::to_string(modes) + " entries");
  } else if (c.kind == "values") {
    require_key(c.values.size() == modes * steps, s.key("values"), "needs M x K = " + std::to_string(modes * steps) + " entries");
  } else {
    Section::fail(s.key("kind"), "unknown control kind '" + c.kind + "'");
  }
  return c;
}

inline void parse_w2(Section s, W2Options& w) {
  std::string method = to_string(w.method);
  s.get("method", method);
  if (method == "auto") w.method = W2Method::kAuto;
  else if (method == "exact_1d") w.method = W2Method::kExact1D;
  else if (method == "assignment") w.method = W2Method::kAssignment;
  else if (method == "entropic") w.method = W2Method::kEntropic;
  else Section::fail(s.key("method"), "unknown method '" + method + "'");
  s.get("reg_relative", w.reg_relative);
  s.get("tolerance", w.tolerance);
  s.get("max_iterations", w.max_iterations);
  s.get("assignment_limit", w.assignment_limit);
  s.finish();
}

inline void parse_rate(Section s, RateOptions& r) {
  s.get("max_iter", r.max_iter);
  s.get("max_inner", r.max_inner);
  s.get("penalty_initial", r.penalty_initial);
  s.get("penalty_growth", r.penalty_growth);
  s.get("max_stages", r.max_stages);
  s.get("armijo", r.armijo);
  s.get("energy_rtol", r.energy_rtol);
  s.get("multistart", r.multistart);
  s.get("multistart_seed", r.multistart_seed);
  std::string scheme = r.scheme == SkeletonScheme::kHeun ? "heun" : "euler";
  s.get("scheme", scheme);
  if (scheme == "heun") r.scheme = SkeletonScheme::kHeun;
  else if (scheme == "euler") r.scheme = SkeletonScheme::kEuler;
  else Section::fail(s.key("scheme"), "expected heun or euler");
  if (s.has("w2")) parse_w2(s.child("w2"), r.w2);
  s.finish();
  require_key(r.penalty_initial > 0.0, s.key("penalty_initial"), "must be positive");
  require_key(r.penalty_growth > 1.0, s.key("penalty_growth"), "must exceed 1");
  require_key(r.multistart >= 1, s.key("multistart"), "must be >= 1");
}

inline void check_eps_list(const std::vector<double>& eps, const std::string& key) {
  require_key(!eps.empty(), key, "must not be empty");
  for (std::size_t i = 0; i < eps.size(); ++i) {
    require_key(eps[i] > 0.0, key, "entries must be positive");
    if (i > 0) require_key(eps[i] < eps[i - 1], key, "must be strictly decreasing");
  }
}

}  // namespace detail

inline RunConfig parse_config(const json& doc) {
  using detail::require_key;
  RunConfig c;
  detail::Section top(doc, "");
  top.get("schema_version", c.schema_version);
  require_key(c.schema_version == kSchemaVersion, "schema_version", "unsupported version " + std::to_string(c.schema_version));

  require_key(top.has("field"), "field", "missing section");
  {
    auto s = top.child("field");
    s.get("name", c.field.name);
    s.get("dim", c.field.dim);
    if (s.has("params")) {
      const json& p = s.raw("params");
      require_key(p.is_object(), s.key("params"), "expected an object");
      for (auto it = p.begin(); it != p.end(); ++it) {
        require_key(it.value().is_number(), s.key("params") + "." + it.key(), "expected a number");
        c.field.params[it.key()] = it.value().get<double>();
      }
    }
    s.finish();
    require_key(c.field.dim >= 1, s.key("dim"), "must be >= 1");
    std::map<std::string, double> merged;
    try {
      merged = fields::builtin_defaults(c.field.name);
    } catch (const ConfigError& e) {
      detail::Section::fail(s.key("name"), e.what());
    }
    for (const auto& [k, v] : c.field.params) {
      require_key(merged.count(k) > 0, s.key("params") + "." + k, "unknown parameter for field '" + c.field.name + "'");
      merged[k] = v;
    }
    c.field.params = merged;
  }
  const std::size_t d = c.field.dim;
  const std::size_t field_modes = fields::builtin(c.field.name, c.field.params, d).modes;

  if (top.has("grid")) {
    auto s = top.child("grid");
    s.get("T", c.horizon);
    s.get("M", c.steps);
    s.finish();
    require_key(c.horizon > 0.0, s.key("T"), "must be positive");
    require_key(c.steps >= 1, s.key("M"), "must be >= 1");
  }
  if (top.has("norm")) {
    auto s = top.child("norm");
    s.get("delta", c.norm.delta);
    s.get("m", c.norm.m);
    s.finish();
  }
  try {
    c.norm.validate(d);
  } catch (const ConfigError& e) {
    detail::Section::fail("norm", e.what());
  }
  c.modes = field_modes;
  if (top.has("noise")) {
    auto s = top.child("noise");
    s.get("K", c.modes);
    s.get("seed", c.seed);
    s.finish();
    require_key(c.modes == field_modes, s.key("K"),
                "field '" + c.field.name + "' uses K = " + std::to_string(field_modes) + " noise modes");
  }
  if (top.has("initial")) {
    c.initial = detail::parse_measure(top.child("initial"), d);
  } else {
    c.initial.x0.assign(d, 0.0);
  }
  top.get("epsilon", c.epsilon);
  require_key(c.epsilon >= 0.0, "epsilon", "must be >= 0");
  top.get_points("tracked", c.tracked);
  require_key(c.tracked.size() % d == 0, "tracked", "needs points of dimension " + std::to_string(d));
  if (top.has("output")) {
    auto s = top.child("output");
    s.get("dir", c.output_dir);
    s.finish();
  }
  if (top.has("rate")) detail::parse_rate(top.child("rate"), c.rate);

  if (top.has("control")) c.control = detail::parse_control(top.child("control"), c.modes, c.steps);
  if (top.has("target")) {
    auto s = top.child("target");
    TargetConfig t;
    s.get("kind", t.kind);
    s.get("x0", t.x0);
    s.get("a", t.a);
    s.get("tolerance", t.tolerance);
    if (t.kind == "measure") {
      require_key(s.has("goal"), s.key("goal"), "required for kind measure");
      t.goal = detail::parse_measure(s.child("goal"), d);
    }
    s.finish();
    require_key(t.tolerance > 0.0, s.key("tolerance"), "must be positive");
    if (t.kind == "point") {
      if (t.x0.empty()) t.x0.assign(d, 0.0);
      require_key(t.x0.size() == d, s.key("x0"), "needs " + std::to_string(d) + " entries");
      require_key(t.a.size() == d, s.key("a"), "needs " + std::to_string(d) + " entries");
    } else if (t.kind == "mean") {
      require_key(t.a.size() == d, s.key("a"), "needs " + std::to_string(d) + " entries");
    } else if (t.kind != "measure") {
      detail::Section::fail(s.key("kind"), "expected point, mean or measure");
    }
    c.target = t;
  }
  if (top.has("sweep")) {
    auto s = top.child("sweep");
    SweepBlock b;
    s.get("epsilons", b.epsilons);
    s.get("replicas", b.replicas);
    s.get("budget", b.budget);
    s.get("slope_low", b.slope_low);
    s.get("slope_high", b.slope_high);
    if (s.has("control")) b.control = detail::parse_control(s.child("control"), c.modes, c.steps);
    s.finish();
    detail::check_eps_list(b.epsilons, s.key("epsilons"));
    require_key(b.replicas >= 30, s.key("replicas"), "must be >= 30");
    require_key(b.budget > 0.0, s.key("budget"), "must be positive");
    c.sweep = b;
  }
  if (top.has("ldp2")) {
    auto s = top.child("ldp2");
    Ldp2Block b;
    s.get("amplitude", b.amplitude);
    s.get("mode", b.mode);
    s.get("frequencies", b.frequencies);
    s.get("tolerance", b.tolerance);
    if (s.has("control")) b.control = detail::parse_control(s.child("control"), c.modes, c.steps);
    s.finish();
    require_key(b.mode < c.modes, s.key("mode"), "must be < K");
    require_key(!b.frequencies.empty(), s.key("frequencies"), "must not be empty");
    c.ldp2 = b;
  }
  if (top.has("event")) {
    auto s = top.child("event");
    EventBlock e;
    s.get("subject", e.subject);
    s.get("x0", e.x0);
    s.get("shape", e.shape);
    s.get("direction", e.direction);
    s.get("threshold", e.threshold);
    s.get("center", e.center);
    s.get("radius", e.radius);
    s.finish();
    if (e.subject == "point") {
      if (e.x0.empty()) e.x0.assign(d, 0.0);
      require_key(e.x0.size() == d, s.key("x0"), "needs " + std::to_string(d) + " entries");
    } else {
      require_key(e.subject == "mean", s.key("subject"), "expected point or mean");
    }
    if (e.shape == "half_space") {
      require_key(e.direction.size() == d, s.key("direction"), "needs " + std::to_string(d) + " entries");
    } else if (e.shape == "ball") {
      require_key(e.center.size() == d, s.key("center"), "needs " + std::to_string(d) + " entries");
      require_key(e.radius >= 0.0, s.key("radius"), "must be >= 0");
    } else {
      require_key(e.shape == "whole", s.key("shape"), "expected half_space, ball or whole");
    }
    c.event = e;
  }
  if (top.has("scaling")) {
    auto s = top.child("scaling");
    ScalingBlock b;
    s.get("epsilons", b.epsilons);
    s.get("n_mc", b.n_mc);
    s.get("use_tilt", b.use_tilt);
    s.get("band", b.band);
    s.finish();
    detail::check_eps_list(b.epsilons, s.key("epsilons"));
    require_key(b.n_mc >= 100, s.key("n_mc"), "must be >= 100");
    c.scaling = b;
  }
  if (top.has("weak")) {
    auto s = top.child("weak");
    WeakBlock w;
    s.get("test_function", w.test_function);
    s.get("value", w.value);
    s.get("direction", w.direction);
    s.get("flat_radius", w.flat_radius);
    s.get("support_radius", w.support_radius);
    s.get("qv_replicas", w.qv_replicas);
    s.get("refinement_levels", w.refinement_levels);
    s.get("refinement_replicas", w.refinement_replicas);
    s.get("order_low", w.order_low);
    s.get("order_high", w.order_high);
    s.finish();
    require_key(w.test_function == "square" || w.test_function == "linear" || w.test_function == "constant",
                s.key("test_function"), "expected square, linear or constant");
    if (w.test_function == "linear") {
      if (w.direction.empty()) w.direction.assign(d, 0.0), w.direction[0] = 1.0;
      require_key(w.direction.size() == d, s.key("direction"), "needs " + std::to_string(d) + " entries");
    }
    require_key(w.flat_radius >= 0.0, s.key("flat_radius"), "must be >= 0");
    require_key(w.support_radius == 0.0 || w.support_radius > w.flat_radius, s.key("support_radius"),
                "must exceed flat_radius");
    require_key(w.qv_replicas == 0 || w.qv_replicas >= 30, s.key("qv_replicas"), "must be 0 or >= 30");
    require_key(w.refinement_levels == 0 || w.refinement_levels >= 2, s.key("refinement_levels"), "must be 0 or >= 2");
    require_key(w.refinement_replicas >= 30, s.key("refinement_replicas"), "must be >= 30");
    c.weak = w;
  }
  top.finish();
  return c;
}

inline RunConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  return parse_config(doc);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

// ---------------------------------------------------------------------------
// Resolved form: every default written out
// ---------------------------------------------------------------------------

namespace detail {

inline json measure_json(const MeasureConfig& m) {
  json j;
  j["kind"] = m.kind;
  if (m.kind == "point_mass") j["x0"] = m.x0;
  if (m.kind == "uniform_grid") {
    j["lo"] = m.lo;
    j["hi"] = m.hi;
  }
  if (m.kind == "gaussian") {
    j["mean"] = m.mean;
    j["stddev"] = m.stddev;
    j["seed"] = m.seed;
  }
  if (m.kind == "explicit") {
    j["points"] = m.points;
    j["weights"] = m.weights;
  }
  if (m.kind == "csv") j["path"] = m.path;
  if (m.kind != "explicit" && m.kind != "csv") j["particles"] = m.particles;
  return j;
}

inline json control_json(const ControlConfig& c) {
  json j;
  j["kind"] = c.kind;
  if (c.kind == "constant") j["value"] = c.value;
  if (c.kind == "values") j["values"] = c.values;
  return j;
}

}  // namespace detail

inline json resolved_json(const RunConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  json params = json::object();
  for (const auto& [k, v] : c.field.params) params[k] = v;
  j["field"] = {{"name", c.field.name}, {"dim", c.field.dim}, {"params", params}};
  j["initial"] = detail::measure_json(c.initial);
  j["grid"] = {{"T", c.horizon}, {"M", c.steps}};
  j["norm"] = {{"delta", c.norm.delta}, {"m", c.norm.m}};
  j["noise"] = {{"K", c.modes}, {"seed", c.seed}};
  j["epsilon"] = c.epsilon;
  j["tracked"] = c.tracked;
  j["output"] = {{"dir", c.output_dir}};
  const auto& r = c.rate;
  j["rate"] = {{"max_iter", r.max_iter},
               {"max_inner", r.max_inner},
               {"penalty_initial", r.penalty_initial},
               {"penalty_growth", r.penalty_growth},
               {"max_stages", r.max_stages},
               {"armijo", r.armijo},
               {"energy_rtol", r.energy_rtol},
               {"multistart", r.multistart},
               {"multistart_seed", r.multistart_seed},
               {"scheme", r.scheme == SkeletonScheme::kHeun ? "heun" : "euler"},
               {"w2",
                {{"method", to_string(r.w2.method)},
                 {"reg_relative", r.w2.reg_relative},
                 {"tolerance", r.w2.tolerance},
                 {"max_iterations", r.w2.max_iterations},
                 {"assignment_limit", r.w2.assignment_limit}}}};
  if (c.control) j["control"] = detail::control_json(*c.control);
  if (c.target) {
    const auto& t = *c.target;
    json tj = {{"kind", t.kind}, {"tolerance", t.tolerance}};
    if (t.kind == "point") tj["x0"] = t.x0;
    if (t.kind != "measure") tj["a"] = t.a;
    if (t.kind == "measure") tj["goal"] = detail::measure_json(t.goal);
    j["target"] = tj;
  }
  if (c.sweep) {
    const auto& s = *c.sweep;
    j["sweep"] = {{"epsilons", s.epsilons},         {"replicas", s.replicas},     {"budget", s.budget},
                  {"control", detail::control_json(s.control)}, {"slope_low", s.slope_low}, {"slope_high", s.slope_high}};
  }
  if (c.ldp2) {
    const auto& s = *c.ldp2;
    j["ldp2"] = {{"control", detail::control_json(s.control)}, {"amplitude", s.amplitude}, {"mode", s.mode},
                 {"frequencies", s.frequencies},               {"tolerance", s.tolerance}};
  }
  if (c.event) {
    const auto& e = *c.event;
    json ej = {{"subject", e.subject}, {"shape", e.shape}};
    if (e.subject == "point") ej["x0"] = e.x0;
    if (e.shape == "half_space") {
      ej["direction"] = e.direction;
      ej["threshold"] = e.threshold;
    }
    if (e.shape == "ball") {
      ej["center"] = e.center;
      ej["radius"] = e.radius;
    }
    j["event"] = ej;
  }
  if (c.scaling) {
    const auto& s = *c.scaling;
    j["scaling"] = {{"epsilons", s.epsilons}, {"n_mc", s.n_mc}, {"use_tilt", s.use_tilt}, {"band", s.band}};
  }
  if (c.weak) {
    const auto& w = *c.weak;
    json wj = {{"test_function", w.test_function}};
    if (w.test_function == "constant") wj["value"] = w.value;
    if (w.test_function == "linear") wj["direction"] = w.direction;
    wj["flat_radius"] = w.flat_radius;
    wj["support_radius"] = w.support_radius;
    wj["qv_replicas"] = w.qv_replicas;
    wj["refinement_levels"] = w.refinement_levels;
    wj["refinement_replicas"] = w.refinement_replicas;
    wj["order_low"] = w.order_low;
    wj["order_high"] = w.order_high;
    j["weak"] = wj;
  }
  return j;
}

// FNV-1a over the compact dump of the resolved config, minus the output location.
inline std::uint64_t config_hash(const RunConfig& c) {
  auto j = resolved_json(c);
  j.erase("output");
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Config -> domain objects
// ---------------------------------------------------------------------------

inline CoefficientField make_field(const RunConfig& c) { return fields::builtin(c.field.name, c.field.params, c.field.dim); }

inline Ensemble make_ensemble(const MeasureConfig& m, std::size_t dim) {
  if (m.kind == "point_mass") return ensemble_from_spec(dist::PointMass{m.x0}, m.particles, m.seed);
  if (m.kind == "uniform_grid") return ensemble_from_spec(dist::UniformGrid{m.lo, m.hi}, m.particles, m.seed);
  if (m.kind == "gaussian") return ensemble_from_spec(dist::Gaussian{m.mean, m.stddev}, m.particles, m.seed);
  if (m.kind == "explicit") return Ensemble(dim, m.points, m.weights);
  auto e = load_ensemble_csv(m.path);
  detail::require(e.dim() == dim, "initial csv: dimension does not match field.dim");
  return e;
}

inline ControlPath make_control(const ControlConfig& c, const TimeGrid& grid, std::size_t modes) {
  if (c.kind == "constant") return ControlPath::constant(grid, c.value);
  if (c.kind == "values") return ControlPath{grid, modes, c.values};
  return ControlPath::zero(grid, modes);
}

inline TargetSpec make_target(const TargetConfig& t, std::size_t dim) {
  if (t.kind == "point") return {target::TerminalPoint{t.x0, t.a}, t.tolerance};
  if (t.kind == "mean") return {target::TerminalMean{t.a}, t.tolerance};
  return {target::TerminalMeasure{make_ensemble(t.goal, dim)}, t.tolerance};
}

inline EventSpec make_event(const EventBlock& e) {
  EventSpec ev;
  ev.subject = e.subject == "point" ? EventSpec::Subject::kTrackedPoint : EventSpec::Subject::kMeasureMean;
  ev.x0 = e.x0;
  ev.shape = e.shape == "half_space" ? EventSpec::Shape::kHalfSpace
             : e.shape == "ball"     ? EventSpec::Shape::kBall
                                     : EventSpec::Shape::kWhole;
  ev.direction = e.direction;
  ev.threshold = e.threshold;
  ev.center = e.center;
  ev.radius = e.radius;
  return ev;
}

}  // namespace cspde
