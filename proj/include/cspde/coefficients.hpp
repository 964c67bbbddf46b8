#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cspde/errors.hpp"
#include "cspde/measure.hpp"
#include "cspde/wasserstein.hpp"

namespace cspde {

using ConstVec = std::span<const double>;
using MutVec = std::span<double>;

/// Drift V(t, x, mu) in R^d and noise coefficient G(t, x, mu) in R^{d x K}, with K
/// truncated noise modes. The measure enters only through the statistic vector
/// s(mu) = sum_i w_i f(x_i) for a declared feature map f : R^d -> R^S.
///
/// Jacobian callbacks are optional; when absent, central differences are used.
/// Layouts (row-major):
///   features_jacobian  S x d
///   drift_dx           d x d           drift_ds     d x S
///   diffusion          d x K
///   diffusion_dx       d blocks of d x K, block l = dG/dx_l
///   diffusion_ds       S blocks of d x K, block r = dG/ds_r
/// All callbacks must be pure and re-entrant.
struct CoefficientField {
  using Features = std::function<void(ConstVec x, MutVec out)>;
  using Eval = std::function<void(double t, ConstVec x, ConstVec s, MutVec out)>;

  std::string name;
  std::size_t dim = 1;
  std::size_t modes = 1;
  std::size_t n_stats = 0;
  std::optional<double> lipschitz_hint;

  Features features;
  Features features_jacobian;
  Eval drift;
  Eval diffusion;
  Eval drift_dx;
  Eval drift_ds;
  Eval diffusion_dx;
  Eval diffusion_ds;
};

/// Statistic vector s(mu) of `ens` for the field's feature map.
inline std::vector<double> statistics(const CoefficientField& field, const Ensemble& ens) {
  std::vector<double> s(field.n_stats, 0.0), f(field.n_stats);
  if (field.n_stats == 0) return s;
  for (std::size_t i = 0; i < ens.size(); ++i) {
    field.features(ens.point(i), f);
    for (std::size_t r = 0; r < field.n_stats; ++r) s[r] += ens.weight(i) * f[r];
  }
  return s;
}

inline std::vector<double> eval_drift(const CoefficientField& field, double t, ConstVec x, const Ensemble& mu) {
  const auto s = statistics(field, mu);
  std::vector<double> v(field.dim);
  field.drift(t, x, s, v);
  return v;
}

inline std::vector<double> eval_diffusion(const CoefficientField& field, double t, ConstVec x, const Ensemble& mu) {
  const auto s = statistics(field, mu);
  std::vector<double> g(field.dim * field.modes);
  field.diffusion(t, x, s, g);
  return g;
}

/// A = G G^T (d x d, row-major): entries <G_i, G_j> over the K modes.
inline std::vector<double> diffusion_matrix(const CoefficientField& field, double t, ConstVec x, const Ensemble& mu) {
  const auto g = eval_diffusion(field, t, x, mu);
  const std::size_t d = field.dim, K = field.modes;
  std::vector<double> a(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) s += g[i * K + k] * g[j * K + k];
      a[i * d + j] = s;
      a[j * d + i] = s;
    }
  }
  return a;
}

namespace detail {

inline double fd_step(double v) { return 1e-6 * (1.0 + std::abs(v)); }

}  // namespace detail

/// Jacobian accessors with finite-difference fallback. `out` layouts as documented
/// on CoefficientField.
inline void features_jacobian(const CoefficientField& field, ConstVec x, MutVec out) {
  if (field.features_jacobian) {
    field.features_jacobian(x, out);
    return;
  }
  const std::size_t d = field.dim, S = field.n_stats;
  std::vector<double> xp(x.begin(), x.end()), fp(S), fm(S);
  for (std::size_t l = 0; l < d; ++l) {
    const double h = detail::fd_step(x[l]);
    xp[l] = x[l] + h;
    field.features(xp, fp);
    xp[l] = x[l] - h;
    field.features(xp, fm);
    xp[l] = x[l];
    for (std::size_t r = 0; r < S; ++r) out[r * d + l] = (fp[r] - fm[r]) / (2.0 * h);
  }
}

inline void drift_dx(const CoefficientField& field, double t, ConstVec x, ConstVec s, MutVec out) {
  if (field.drift_dx) {
    field.drift_dx(t, x, s, out);
    return;
  }
  const std::size_t d = field.dim;
  std::vector<double> xp(x.begin(), x.end()), vp(d), vm(d);
  for (std::size_t l = 0; l < d; ++l) {
    const double h = detail::fd_step(x[l]);
    xp[l] = x[l] + h;
    field.drift(t, xp, s, vp);
    xp[l] = x[l] - h;
    field.drift(t, xp, s, vm);
    xp[l] = x[l];
    for (std::size_t i = 0; i < d; ++i) out[i * d + l] = (vp[i] - vm[i]) / (2.0 * h);
  }
}

inline void drift_ds(const CoefficientField& field, double t, ConstVec x, ConstVec s, MutVec out) {
  if (field.drift_ds) {
    field.drift_ds(t, x, s, out);
    return;
  }
  const std::size_t d = field.dim, S = field.n_stats;
  std::vector<double> sp(s.begin(), s.end()), vp(d), vm(d);
  for (std::size_t r = 0; r < S; ++r) {
    const double h = detail::fd_step(s[r]);
    sp[r] = s[r] + h;
    field.drift(t, x, sp, vp);
    sp[r] = s[r] - h;
    field.drift(t, x, sp, vm);
    sp[r] = s[r];
    for (std::size_t i = 0; i < d; ++i) out[i * S + r] = (vp[i] - vm[i]) / (2.0 * h);
  }
}

inline void diffusion_dx(const CoefficientField& field, double t, ConstVec x, ConstVec s, MutVec out) {
  if (field.diffusion_dx) {
    field.diffusion_dx(t, x, s, out);
    return;
  }
  const std::size_t d = field.dim, dk = field.dim * field.modes;
  std::vector<double> xp(x.begin(), x.end()), gp(dk), gm(dk);
  for (std::size_t l = 0; l < d; ++l) {
    const double h = detail::fd_step(x[l]);
    xp[l] = x[l] + h;
    field.diffusion(t, xp, s, gp);
    xp[l] = x[l] - h;
    field.diffusion(t, xp, s, gm);
    xp[l] = x[l];
    for (std::size_t e = 0; e < dk; ++e) out[l * dk + e] = (gp[e] - gm[e]) / (2.0 * h);
  }
}

inline void diffusion_ds(const CoefficientField& field, double t, ConstVec x, ConstVec s, MutVec out) {
  if (field.diffusion_ds) {
    field.diffusion_ds(t, x, s, out);
    return;
  }
  const std::size_t S = field.n_stats, dk = field.dim * field.modes;
  std::vector<double> sp(s.begin(), s.end()), gp(dk), gm(dk);
  for (std::size_t r = 0; r < S; ++r) {
    const double h = detail::fd_step(s[r]);
    sp[r] = s[r] + h;
    field.diffusion(t, x, sp, gp);
    sp[r] = s[r] - h;
    field.diffusion(t, x, sp, gm);
    sp[r] = s[r];
    for (std::size_t e = 0; e < dk; ++e) out[r * dk + e] = (gp[e] - gm[e]) / (2.0 * h);
  }
}

// ---------------------------------------------------------------------------
// Built-in fields
// ---------------------------------------------------------------------------

namespace fields {

namespace detail {

inline CoefficientField::Features identity_features(std::size_t d) {
  return [d](ConstVec x, MutVec out) {
    for (std::size_t k = 0; k < d; ++k) out[k] = x[k];
  };
}

inline CoefficientField::Features identity_features_jacobian(std::size_t d) {
  return [d](ConstVec, MutVec out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t k = 0; k < d; ++k) out[k * d + k] = 1.0;
  };
}

inline CoefficientField::Eval zeros() {
  return [](double, ConstVec, ConstVec, MutVec out) { std::fill(out.begin(), out.end(), 0.0); };
}

inline CoefficientField::Eval scaled_identity(std::size_t d, double scale) {
  return [d, scale](double, ConstVec, ConstVec, MutVec out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t k = 0; k < d; ++k) out[k * d + k] = scale;
  };
}

}  // namespace detail

/// V = v (every coordinate), G = sigma * I_d, K = d. No measure dependence.
inline CoefficientField constant(double sigma, double v, std::size_t d = 1) {
  CoefficientField f;
  f.name = "constant";
  f.dim = d;
  f.modes = d;
  f.n_stats = 0;
  f.lipschitz_hint = (std::abs(v) + std::abs(sigma)) * std::sqrt(static_cast<double>(d));
  f.features = [](ConstVec, MutVec) {};
  f.features_jacobian = [](ConstVec, MutVec) {};
  f.drift = [v](double, ConstVec, ConstVec, MutVec out) { std::fill(out.begin(), out.end(), v); };
  f.diffusion = detail::scaled_identity(d, sigma);
  f.drift_dx = detail::zeros();
  f.drift_ds = detail::zeros();
  f.diffusion_dx = detail::zeros();
  f.diffusion_ds = detail::zeros();
  return f;
}

/// V = a x, G = sigma * I_d.
inline CoefficientField linear(double a, double sigma, std::size_t d = 1) {
  CoefficientField f = constant(sigma, 0.0, d);
  f.name = "linear";
  f.lipschitz_hint = std::max(std::abs(a), std::abs(sigma) * std::sqrt(static_cast<double>(d)));
  f.drift = [a, d](double, ConstVec x, ConstVec, MutVec out) {
    for (std::size_t k = 0; k < d; ++k) out[k] = a * x[k];
  };
  f.drift_dx = detail::scaled_identity(d, a);
  return f;
}

/// V = a x + b <id, mu>, G = sigma * I_d. Statistic: the mean of mu.
inline CoefficientField mean_field(double a, double b, double sigma, std::size_t d = 1) {
  CoefficientField f = constant(sigma, 0.0, d);
  f.name = "mean_field";
  f.n_stats = d;
  f.lipschitz_hint = std::max({std::abs(a), std::abs(b), std::abs(sigma) * std::sqrt(static_cast<double>(d))});
  f.features = detail::identity_features(d);
  f.features_jacobian = detail::identity_features_jacobian(d);
  f.drift = [a, b, d](double, ConstVec x, ConstVec s, MutVec out) {
    for (std::size_t k = 0; k < d; ++k) out[k] = a * x[k] + b * s[k];
  };
  f.drift_dx = detail::scaled_identity(d, a);
  f.drift_ds = detail::scaled_identity(d, b);
  return f;
}

/// Smooth bounded time dependence with state- and measure-dependent noise:
///   V = -x + 0.5 sin(2 pi t) m,
///   G = sigma (1 + 0.5 sin(2 pi t)) diag(1 + 0.25 tanh(x_k) + 0.25 tanh(m_k)),
/// where m is the mean of mu. K = d.
inline CoefficientField time_varying(double sigma, std::size_t d = 1) {
  CoefficientField f;
  f.name = "time_varying";
  f.dim = d;
  f.modes = d;
  f.n_stats = d;
  f.lipschitz_hint = std::max(1.0 + 0.375 * std::abs(sigma), 1.5 * std::abs(sigma) * std::sqrt(static_cast<double>(d)));
  f.features = detail::identity_features(d);
  f.features_jacobian = detail::identity_features_jacobian(d);
  auto amp = [](double t) { return std::sin(2.0 * std::numbers::pi * t); };
  f.drift = [d, amp](double t, ConstVec x, ConstVec s, MutVec out) {
    for (std::size_t k = 0; k < d; ++k) out[k] = -x[k] + 0.5 * amp(t) * s[k];
  };
  f.drift_dx = detail::scaled_identity(d, -1.0);
  f.drift_ds = [d, amp](double t, ConstVec, ConstVec, MutVec out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t k = 0; k < d; ++k) out[k * d + k] = 0.5 * amp(t);
  };
  f.diffusion = [d, sigma, amp](double t, ConstVec x, ConstVec s, MutVec out) {
    std::fill(out.begin(), out.end(), 0.0);
    const double c = sigma * (1.0 + 0.5 * amp(t));
    for (std::size_t k = 0; k < d; ++k) out[k * d + k] = c * (1.0 + 0.25 * std::tanh(x[k]) + 0.25 * std::tanh(s[k]));
  };
  auto sech2 = [](double u) {
    const double th = std::tanh(u);
    return 1.0 - th * th;
  };
  f.diffusion_dx = [d, sigma, amp, sech2](double t, ConstVec x, ConstVec, MutVec out) {
    std::fill(out.begin(), out.end(), 0.0);
    const double c = sigma * (1.0 + 0.5 * amp(t));
    for (std::size_t l = 0; l < d; ++l) out[l * d * d + l * d + l] = c * 0.25 * sech2(x[l]);
  };
  f.diffusion_ds = [d, sigma, amp, sech2](double t, ConstVec, ConstVec s, MutVec out) {
    std::fill(out.begin(), out.end(), 0.0);
    const double c = sigma * (1.0 + 0.5 * amp(t));
    for (std::size_t r = 0; r < d; ++r) out[r * d * d + r * d + r] = c * 0.25 * sech2(s[r]);
  };
  return f;
}

/// Names accepted by `builtin`.
inline std::vector<std::string> builtin_names() { return {"constant", "linear", "mean_field", "time_varying"}; }

/// Parameter defaults per built-in field; every key a field reads is listed here.
inline std::map<std::string, double> builtin_defaults(const std::string& name) {
  if (name == "constant") return {{"sigma", 1.0}, {"v", 0.0}};
  if (name == "linear") return {{"a", -1.0}, {"sigma", 1.0}};
  if (name == "mean_field") return {{"a", -1.0}, {"b", 1.0}, {"sigma", 1.0}};
  if (name == "time_varying") return {{"sigma", 1.0}};
  throw ConfigError("unknown field: " + name);
}

/// Looks a field up by name; parameters missing from `params` take their defaults,
/// unknown parameter names are rejected.
inline CoefficientField builtin(const std::string& name, const std::map<std::string, double>& params,
                                std::size_t d = 1) {
  auto p = builtin_defaults(name);
  for (const auto& [key, value] : params) {
    if (!p.count(key)) throw ConfigError("field '" + name + "' has no parameter '" + key + "'");
    p[key] = value;
  }
  if (name == "constant") return constant(p["sigma"], p["v"], d);
  if (name == "linear") return linear(p["a"], p["sigma"], d);
  if (name == "mean_field") return mean_field(p["a"], p["b"], p["sigma"], d);
  return time_varying(p["sigma"], d);
}

}  // namespace fields

// ---------------------------------------------------------------------------
// Regularity probe
// ---------------------------------------------------------------------------

struct LipschitzEstimate {
  double L_hat_x = 0.0;     // ratio over pairs differing in x only
  double L_hat_mu = 0.0;    // ratio over pairs differing in mu only
  double L_hat_joint = 0.0; // ratio over pairs differing in both
  double growth_hat = 0.0;  // (|V| + ||G||_F) / (1 + |x| + W_2(mu, delta_0))
  std::size_t pairs_used = 0;
};

struct ProbeOptions {
  double t_max = 1.0;
  std::size_t ensemble_size = 5;
};

/// Samples random (t, x, y, mu, nu) with coordinates in [-radius, radius] and returns
/// the largest observed difference ratios. Degenerate pairs are skipped.
inline LipschitzEstimate lipschitz_probe(const CoefficientField& field, std::size_t n_pairs, double radius,
                                         std::uint64_t seed, const ProbeOptions& opts = {}) {
  detail::require(n_pairs >= 1, "lipschitz_probe: n_pairs must be >= 1");
  const std::size_t d = field.dim, K = field.modes;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(-radius, radius);
  std::uniform_real_distribution<double> time(0.0, opts.t_max);
  auto random_point = [&] {
    std::vector<double> x(d);
    for (auto& c : x) c = coord(rng);
    return x;
  };
  auto random_ensemble = [&] {
    std::vector<double> pts(opts.ensemble_size * d);
    for (auto& c : pts) c = coord(rng);
    return Ensemble::uniform(d, std::move(pts));
  };
  auto norm = [](ConstVec v) {
    double s = 0.0;
    for (double c : v) s += c * c;
    return std::sqrt(s);
  };
  auto diff_norm = [](ConstVec a, ConstVec b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  };
  std::vector<double> v1(d), v2(d), g1(d * K), g2(d * K);
  auto response = [&](double t, ConstVec x, ConstVec sx, ConstVec y, ConstVec sy) {
    field.drift(t, x, sx, v1);
    field.drift(t, y, sy, v2);
    field.diffusion(t, x, sx, g1);
    field.diffusion(t, y, sy, g2);
    return diff_norm(v1, v2) + diff_norm(g1, g2);
  };

  LipschitzEstimate est;
  const std::vector<double> origin(d, 0.0);
  const Ensemble delta0 = Ensemble::point_mass(origin);
  for (std::size_t p = 0; p < n_pairs; ++p) {
    const double t = time(rng);
    const auto x = random_point();
    const auto y = random_point();
    const Ensemble mu = random_ensemble();
    const Ensemble nu = random_ensemble();
    const auto smu = statistics(field, mu);
    const auto snu = statistics(field, nu);
    const double dx = diff_norm(x, y);
    const double dmu = wasserstein2(mu, nu).value;
    bool used = false;
    if (dx > 0.0) {
      est.L_hat_x = std::max(est.L_hat_x, response(t, x, smu, y, smu) / dx);
      used = true;
    }
    if (dmu > 0.0) {
      est.L_hat_mu = std::max(est.L_hat_mu, response(t, x, smu, x, snu) / dmu);
      used = true;
    }
    if (dx + dmu > 0.0) est.L_hat_joint = std::max(est.L_hat_joint, response(t, x, smu, y, snu) / (dx + dmu));
    field.drift(t, x, smu, v1);
    field.diffusion(t, x, smu, g1);
    const double bound = 1.0 + norm(x) + wasserstein2(mu, delta0).value;
    est.growth_hat = std::max(est.growth_hat, (norm(v1) + norm(g1)) / bound);
    if (used) ++est.pairs_used;
  }
  return est;
}

}  // namespace cspde
