#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "cspde/errors.hpp"
#include "cspde/measure.hpp"

namespace cspde {

enum class W2Method { kAuto, kExact1D, kAssignment, kEntropic };

inline const char* to_string(W2Method m) {
  switch (m) {
    case W2Method::kAuto: return "auto";
    case W2Method::kExact1D: return "exact_1d";
    case W2Method::kAssignment: return "assignment";
    case W2Method::kEntropic: return "entropic";
  }
  return "unknown";
}

struct W2Options {
  W2Method method = W2Method::kAuto;
  /// Entropic regularization as a fraction of the largest pairwise cost.
  double reg_relative = 1e-3;
  /// L1 marginal violation accepted by the entropic solver.
  double tolerance = 1e-6;
  std::size_t max_iterations = 200000;
  std::size_t assignment_limit = 256;
};

struct W2Result {
  double value = 0.0;
  W2Method method = W2Method::kExact1D;
  double reg = 0.0;  // absolute regularization actually used; 0 for exact methods
  std::size_t iterations = 0;
  double residual = 0.0;
};

struct TransportEntry {
  std::size_t i;
  std::size_t j;
  double mass;
};

namespace detail {

inline double squared_distance(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double diff = x[k] - y[k];
    s += diff * diff;
  }
  return s;
}

/// Monotone (quantile) coupling of two weighted 1-d measures.
inline std::vector<TransportEntry> quantile_coupling(const Ensemble& a, const Ensemble& b) {
  auto order = [](const Ensemble& e) {
    std::vector<std::size_t> idx(e.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t l, std::size_t r) { return e.point(l)[0] < e.point(r)[0]; });
    return idx;
  };
  const auto ia = order(a);
  const auto ib = order(b);
  std::vector<TransportEntry> plan;
  plan.reserve(a.size() + b.size());
  std::size_t p = 0, q = 0;
  double ra = a.weight(ia[0]);
  double rb = b.weight(ib[0]);
  while (p < ia.size() && q < ib.size()) {
    if (ra < rb) {
      if (ra > 0.0) plan.push_back({ia[p], ib[q], ra});
      rb -= ra;
      if (++p < ia.size()) ra = a.weight(ia[p]);
    } else if (rb < ra) {
      if (rb > 0.0) plan.push_back({ia[p], ib[q], rb});
      ra -= rb;
      if (++q < ib.size()) rb = b.weight(ib[q]);
    } else {
      if (ra > 0.0) plan.push_back({ia[p], ib[q], ra});
      if (++p < ia.size()) ra = a.weight(ia[p]);
      if (++q < ib.size()) rb = b.weight(ib[q]);
    }
  }
  return plan;
}

/// Hungarian algorithm (shortest augmenting paths with potentials), O(n^3).
/// Returns assignment[row] = column minimizing the total cost.
inline std::vector<std::size_t> solve_assignment(const std::vector<double>& cost, std::size_t n) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t row = 1; row <= n; ++row) {
    match[0] = row;
    std::size_t col0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[col0] = 1;
      const std::size_t r0 = match[col0];
      double delta = inf;
      std::size_t col1 = 0;
      for (std::size_t c = 1; c <= n; ++c) {
        if (used[c]) continue;
        const double cur = cost[(r0 - 1) * n + (c - 1)] - u[r0] - v[c];
        if (cur < minv[c]) {
          minv[c] = cur;
          way[c] = col0;
        }
        if (minv[c] < delta) {
          delta = minv[c];
          col1 = c;
        }
      }
      for (std::size_t c = 0; c <= n; ++c) {
        if (used[c]) {
          u[match[c]] += delta;
          v[c] -= delta;
        } else {
          minv[c] -= delta;
        }
      }
      col0 = col1;
    } while (match[col0] != 0);
    do {
      const std::size_t col1 = way[col0];
      match[col0] = match[col1];
      col0 = col1;
    } while (col0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t c = 1; c <= n; ++c) assignment[match[c] - 1] = c - 1;
  return assignment;
}

struct SinkhornState {
  std::vector<double> plan;  // na x nb, row-major
  double value = 0.0;        // regularized dual objective
  std::size_t iterations = 0;
  double residual = 0.0;
};

inline double log_sum_exp(const std::vector<double>& v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

/// Log-domain Sinkhorn with geometric regularization annealing down to `reg`.
/// Entries with zero weight are expected to be removed by the caller.
inline SinkhornState sinkhorn(const std::vector<double>& wa, const std::vector<double>& wb,
                              const std::vector<double>& cost, double reg, double max_cost,
                              const W2Options& opts) {
  const std::size_t na = wa.size(), nb = wb.size();
  std::vector<double> f(na, 0.0), g(nb, 0.0), la(na), lb(nb), buf;
  for (std::size_t i = 0; i < na; ++i) la[i] = std::log(wa[i]);
  for (std::size_t j = 0; j < nb; ++j) lb[j] = std::log(wb[j]);

  SinkhornState st;
  auto row_residual = [&](double eps) {
    double r = 0.0;
    for (std::size_t i = 0; i < na; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < nb; ++j) {
        row += std::exp(la[i] + lb[j] + (f[i] + g[j] - cost[i * nb + j]) / eps);
      }
      r += std::abs(row - wa[i]);
    }
    return r;
  };

  double eps = std::max(reg, max_cost);
  while (true) {
    const bool final_level = eps <= reg;
    const double level_tol = final_level ? opts.tolerance : 1e-3;
    const std::size_t level_cap = final_level ? opts.max_iterations : 2000;
    std::size_t it = 0;
    double res = std::numeric_limits<double>::infinity();
    while (it < level_cap) {
      buf.resize(nb);
      for (std::size_t i = 0; i < na; ++i) {
        for (std::size_t j = 0; j < nb; ++j) buf[j] = lb[j] + (g[j] - cost[i * nb + j]) / eps;
        f[i] = -eps * log_sum_exp(buf);
      }
      buf.resize(na);
      for (std::size_t j = 0; j < nb; ++j) {
        for (std::size_t i = 0; i < na; ++i) buf[i] = la[i] + (f[i] - cost[i * nb + j]) / eps;
        g[j] = -eps * log_sum_exp(buf);
      }
      ++it;
      if (it % 10 == 0 || it == level_cap) {
        res = row_residual(eps);
        if (res <= level_tol) break;
      }
    }
    st.iterations += it;
    if (final_level) {
      st.residual = res;
      if (!(res <= opts.tolerance)) {
        throw ConvergenceError("entropic W2 solver did not converge", st.iterations, res);
      }
      break;
    }
    eps = std::max(reg, eps * 0.5);
  }
  st.plan.assign(na * nb, 0.0);
  double dual = 0.0;
  for (std::size_t i = 0; i < na; ++i) dual += wa[i] * f[i];
  for (std::size_t j = 0; j < nb; ++j) dual += wb[j] * g[j];
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      st.plan[i * nb + j] = std::exp(la[i] + lb[j] + (f[i] + g[j] - cost[i * nb + j]) / reg);
    }
  }
  st.value = dual;
  return st;
}

inline W2Method resolve_method(const Ensemble& a, const Ensemble& b, const W2Options& opts) {
  if (opts.method != W2Method::kAuto) return opts.method;
  if (a.dim() == 1) return W2Method::kExact1D;
  if (a.size() == b.size() && a.size() <= opts.assignment_limit && a.equal_weights() && b.equal_weights()) {
    return W2Method::kAssignment;
  }
  return W2Method::kEntropic;
}

struct Support {
  std::vector<std::size_t> index;
  std::vector<double> weights;
};

inline Support positive_support(const Ensemble& e) {
  Support s;
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (e.weight(i) > 0.0) {
      s.index.push_back(i);
      s.weights.push_back(e.weight(i));
    }
  }
  return s;
}

struct EntropicPiece {
  std::vector<TransportEntry> plan;
  double value = 0.0;
  std::size_t iterations = 0;
  double residual = 0.0;
};

inline EntropicPiece entropic_piece(const Ensemble& a, const Ensemble& b, double reg, double max_cost,
                                    const W2Options& opts) {
  const auto sa = positive_support(a);
  const auto sb = positive_support(b);
  std::vector<double> cost(sa.index.size() * sb.index.size());
  for (std::size_t i = 0; i < sa.index.size(); ++i) {
    for (std::size_t j = 0; j < sb.index.size(); ++j) {
      cost[i * sb.index.size() + j] = squared_distance(a.point(sa.index[i]), b.point(sb.index[j]));
    }
  }
  const auto st = sinkhorn(sa.weights, sb.weights, cost, reg, max_cost, opts);
  EntropicPiece out;
  out.value = st.value;
  out.iterations = st.iterations;
  out.residual = st.residual;
  for (std::size_t i = 0; i < sa.index.size(); ++i) {
    for (std::size_t j = 0; j < sb.index.size(); ++j) {
      out.plan.push_back({sa.index[i], sb.index[j], st.plan[i * sb.index.size() + j]});
    }
  }
  return out;
}

inline double max_pairwise_cost(const Ensemble& a, const Ensemble& b) {
  double mx = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) mx = std::max(mx, squared_distance(a.point(i), b.point(j)));
  }
  return mx;
}

struct W2Work {
  W2Result result;
  std::vector<TransportEntry> plan_ab;
  std::vector<TransportEntry> plan_aa;  // only for the debiased entropic route
};

inline W2Work w2_work(const Ensemble& a, const Ensemble& b, const W2Options& opts) {
  require(a.dim() == b.dim(), "wasserstein2: dimension mismatch");
  W2Work w;
  w.result.method = resolve_method(a, b, opts);
  switch (w.result.method) {
    case W2Method::kExact1D: {
      require(a.dim() == 1, "exact_1d W2 requires d = 1");
      w.plan_ab = quantile_coupling(a, b);
      break;
    }
    case W2Method::kAssignment: {
      require(a.size() == b.size() && a.equal_weights() && b.equal_weights(),
              "assignment W2 requires equal sizes and equal weights");
      const std::size_t n = a.size();
      std::vector<double> cost(n * n);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = squared_distance(a.point(i), b.point(j));
      }
      const auto assign = solve_assignment(cost, n);
      for (std::size_t i = 0; i < n; ++i) w.plan_ab.push_back({i, assign[i], a.weight(i)});
      break;
    }
    case W2Method::kEntropic: {
      const double scale = std::max({max_pairwise_cost(a, b), max_pairwise_cost(a, a),
                                     max_pairwise_cost(b, b)});
      if (scale == 0.0) {
        w.result.value = 0.0;
        return w;
      }
      const double reg = opts.reg_relative * scale;
      const auto ab = entropic_piece(a, b, reg, scale, opts);
      const auto aa = entropic_piece(a, a, reg, scale, opts);
      const auto bb = entropic_piece(b, b, reg, scale, opts);
      const double divergence = ab.value - 0.5 * aa.value - 0.5 * bb.value;
      w.result.value = std::sqrt(std::max(0.0, divergence));
      w.result.reg = reg;
      w.result.iterations = ab.iterations + aa.iterations + bb.iterations;
      w.result.residual = std::max({ab.residual, aa.residual, bb.residual});
      w.plan_ab = ab.plan;
      w.plan_aa = aa.plan;
      return w;
    }
    case W2Method::kAuto: break;
  }
  double cost = 0.0;
  for (const auto& e : w.plan_ab) cost += e.mass * squared_distance(a.point(e.i), b.point(e.j));
  w.result.value = std::sqrt(std::max(0.0, cost));
  return w;
}

}  // namespace detail

/// W_2 between two ensembles. d = 1 uses the exact quantile coupling; equal-weight
/// ensembles of the same size n <= assignment_limit use an exact assignment; anything
/// else uses debiased entropic OT, and the regularization is reported in the result.
inline W2Result wasserstein2(const Ensemble& a, const Ensemble& b, const W2Options& opts = {}) {
  return detail::w2_work(a, b, opts).result;
}

struct W2Gradient {
  W2Result result;
  std::vector<double> gradient;  // d(W_2^2)/d(points of a), n_a x d row-major
};

/// Gradient of W_2(a, b)^2 with respect to the points of `a`, holding the
/// optimal plan fixed (exact almost everywhere for the exact routes; for the
/// entropic route this differentiates the debiased divergence).
inline W2Gradient wasserstein2_squared_gradient(const Ensemble& a, const Ensemble& b, const W2Options& opts = {}) {
  const auto w = detail::w2_work(a, b, opts);
  W2Gradient out;
  out.result = w.result;
  out.gradient.assign(a.size() * a.dim(), 0.0);
  const std::size_t d = a.dim();
  for (const auto& e : w.plan_ab) {
    const auto x = a.point(e.i);
    const auto y = b.point(e.j);
    for (std::size_t k = 0; k < d; ++k) out.gradient[e.i * d + k] += 2.0 * e.mass * (x[k] - y[k]);
  }
  for (const auto& e : w.plan_aa) {
    const auto xi = a.point(e.i);
    const auto xj = a.point(e.j);
    for (std::size_t k = 0; k < d; ++k) {
      // d/dx of -1/2 OT(a,a): both arguments move.
      out.gradient[e.i * d + k] -= e.mass * (xi[k] - xj[k]);
      out.gradient[e.j * d + k] -= e.mass * (xj[k] - xi[k]);
    }
  }
  return out;
}

}  // namespace cspde
