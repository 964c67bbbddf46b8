#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "cspde/errors.hpp"
#include "cspde/parallel.hpp"

namespace cspde::stats {

/// Upper tail of the standard normal, P(Z > z).
inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

/// Wilson score interval for a binomial proportion at critical value z.
inline Interval wilson_interval(std::size_t successes, std::size_t trials, double z = 1.959963984540054) {
  detail::require(trials > 0, "wilson_interval: zero trials");
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / (1.0 + z2 / n);
  return {successes == 0 ? 0.0 : std::max(0.0, centre - half), successes == trials ? 1.0 : std::min(1.0, centre + half)};
}

struct MeanVar {
  double mean = 0.0;
  double variance = 0.0;  // unbiased
  double standard_error = 0.0;
};

inline MeanVar mean_var(std::span<const double> xs) {
  MeanVar out;
  if (xs.empty()) return out;
  out.mean = pairwise_mean(xs);
  if (xs.size() < 2) return out;
  std::vector<double> sq(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) sq[i] = (xs[i] - out.mean) * (xs[i] - out.mean);
  out.variance = pairwise_sum(sq) / static_cast<double>(xs.size() - 1);
  out.standard_error = std::sqrt(out.variance / static_cast<double>(xs.size()));
  return out;
}

/// Linear-interpolated empirical quantile, q in [0, 1].
inline double quantile(std::vector<double> xs, double q) {
  detail::require(!xs.empty(), "quantile of empty sample");
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return xs[lo] + frac * (xs[hi] - xs[lo]);
}

struct LineFit {
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  double slope_se = std::numeric_limits<double>::quiet_NaN();
  bool valid = false;
};

/// Ordinary least squares y = intercept + slope * x. Needs at least two distinct x.
inline LineFit ols(std::span<const double> x, std::span<const double> y) {
  detail::require(x.size() == y.size(), "ols: length mismatch");
  LineFit fit;
  const std::size_t n = x.size();
  if (n < 2) return fit;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) return fit;
  }
  const double mx = pairwise_mean(x);
  const double my = pairwise_mean(y);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0.0) return fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.valid = true;
  if (n > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - fit.intercept - fit.slope * x[i];
      rss += r * r;
    }
    fit.slope_se = std::sqrt(rss / static_cast<double>(n - 2) / sxx);
  } else {
    fit.slope_se = 0.0;
  }
  return fit;
}

/// Slope of log(y) against log(x); all values must be positive.
inline LineFit loglog_fit(std::span<const double> x, std::span<const double> y) {
  std::vector<double> lx(x.size()), ly(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) return {};
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  return ols(lx, ly);
}

struct KendallResult {
  double tau = 0.0;
  double p_decreasing = 1.0;  // one-sided p-value for a decreasing trend
  double p_increasing = 1.0;
};

/// Kendall rank correlation of y against its index order. Exact null
/// distribution (Mahonian numbers) for n <= 30, normal approximation beyond.
inline KendallResult kendall_trend(std::span<const double> y) {
  KendallResult out;
  const std::size_t n = y.size();
  if (n < 2) return out;
  long long concordant = 0, discordant = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (y[j] > y[i]) ++concordant;
      else if (y[j] < y[i]) ++discordant;
    }
  }
  const long long pairs = static_cast<long long>(n * (n - 1) / 2);
  out.tau = static_cast<double>(concordant - discordant) / static_cast<double>(pairs);
  if (n <= 30) {
    // counts[k] / n! = P(#inversions = k) under exchangeability.
    std::vector<double> counts{1.0};
    for (std::size_t m = 2; m <= n; ++m) {
      std::vector<double> next(counts.size() + m - 1, 0.0);
      for (std::size_t k = 0; k < counts.size(); ++k) {
        for (std::size_t s = 0; s < m; ++s) next[k + s] += counts[k];
      }
      counts = std::move(next);
      double total = 0.0;
      for (double c : counts) total += c;
      for (double& c : counts) c /= total;
    }
    const auto disc = static_cast<std::size_t>(discordant);
    const auto conc = static_cast<std::size_t>(concordant);
    double upper = 0.0, lower = 0.0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
      if (k >= disc) upper += counts[k];
      if (k >= conc) lower += counts[k];
    }
    out.p_decreasing = std::min(1.0, upper);
    out.p_increasing = std::min(1.0, lower);
  } else {
    const double nn = static_cast<double>(n);
    const double sd = std::sqrt(nn * (nn - 1.0) * (2.0 * nn + 5.0) / 18.0);
    const double s = static_cast<double>(concordant - discordant);
    out.p_decreasing = normal_cdf((s + 1.0) / sd);
    out.p_increasing = normal_sf((s - 1.0) / sd);
  }
  return out;
}

}  // namespace cspde::stats
