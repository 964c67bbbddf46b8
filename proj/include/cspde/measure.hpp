#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "cspde/errors.hpp"
#include "cspde/random.hpp"

namespace cspde {

inline constexpr double kWeightSumTolerance = 1e-12;

/// Finitely supported probability measure on R^d: points stored row-major (n x d).
/// Immutable after construction; invariants are checked once in the constructor.
class Ensemble {
 public:
  Ensemble(std::size_t dim, std::vector<double> points, std::vector<double> weights)
      : dim_(dim), points_(std::move(points)), weights_(std::move(weights)) {
    detail::require(dim_ >= 1, "Ensemble: dimension must be >= 1");
    detail::require(!weights_.empty(), "Ensemble: needs at least one point");
    detail::require(points_.size() == weights_.size() * dim_,
                    "Ensemble: points/weights size mismatch");
    double total = 0.0;
    for (double w : weights_) {
      detail::require(std::isfinite(w) && w >= 0.0, "Ensemble: weights must be finite and >= 0");
      total += w;
    }
    detail::require(std::abs(total - 1.0) <= kWeightSumTolerance,
                    "Ensemble: weights must sum to 1 (got " + std::to_string(total) + ")");
    for (double x : points_) detail::require(std::isfinite(x), "Ensemble: non-finite coordinate");
  }

  /// Equal weights 1/n.
  static Ensemble uniform(std::size_t dim, std::vector<double> points) {
    detail::require(dim >= 1 && !points.empty() && points.size() % dim == 0,
                    "Ensemble::uniform: bad point array");
    const std::size_t n = points.size() / dim;
    return Ensemble(dim, std::move(points), std::vector<double>(n, 1.0 / static_cast<double>(n)));
  }

  static Ensemble point_mass(std::span<const double> x) {
    return Ensemble(x.size(), std::vector<double>(x.begin(), x.end()), {1.0});
  }

  std::size_t size() const noexcept { return weights_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const double> point(std::size_t i) const { return {points_.data() + i * dim_, dim_}; }
  double weight(std::size_t i) const { return weights_[i]; }
  std::span<const double> points() const noexcept { return points_; }
  std::span<const double> weights() const noexcept { return weights_; }

  bool equal_weights() const noexcept {
    for (double w : weights_) {
      if (w != weights_.front()) return false;
    }
    return true;
  }

  friend bool operator==(const Ensemble&, const Ensemble&) = default;

 private:
  std::size_t dim_;
  std::vector<double> points_;
  std::vector<double> weights_;
};

namespace dist {

struct PointMass {
  std::vector<double> x0;
};

/// n points per axis, endpoints included, on the box [lo, hi].
struct UniformGrid {
  std::vector<double> lo;
  std::vector<double> hi;
};

struct Gaussian {
  std::vector<double> mean;
  double stddev = 1.0;
};

struct Explicit {
  std::size_t dim = 1;
  std::vector<double> points;
  std::vector<double> weights;
};

}  // namespace dist

using DistributionSpec = std::variant<dist::PointMass, dist::UniformGrid, dist::Gaussian, dist::Explicit>;

/// Builds an ensemble deterministically from (spec, n, seed).
///  - PointMass: n coincident particles of weight 1/n.
///  - UniformGrid: n nodes per axis, so n^d points with equal weights.
///  - Gaussian: n iid N(mean, stddev^2 I) samples from the keyed generator.
///  - Explicit: used as given (n is ignored), validated.
inline Ensemble ensemble_from_spec(const DistributionSpec& spec, std::size_t n, std::uint64_t seed) {
  detail::require(n >= 1, "ensemble_from_spec: n must be >= 1");
  struct Builder {
    std::size_t n;
    std::uint64_t seed;

    Ensemble operator()(const dist::PointMass& s) const {
      detail::require(!s.x0.empty(), "point mass: empty location");
      std::vector<double> pts;
      pts.reserve(n * s.x0.size());
      for (std::size_t i = 0; i < n; ++i) pts.insert(pts.end(), s.x0.begin(), s.x0.end());
      return Ensemble::uniform(s.x0.size(), std::move(pts));
    }

    Ensemble operator()(const dist::UniformGrid& s) const {
      detail::require(!s.lo.empty() && s.lo.size() == s.hi.size(), "uniform grid: bad box");
      const std::size_t d = s.lo.size();
      std::size_t total = 1;
      for (std::size_t k = 0; k < d; ++k) total *= n;
      std::vector<double> pts(total * d);
      for (std::size_t idx = 0; idx < total; ++idx) {
        std::size_t rem = idx;
        for (std::size_t k = d; k-- > 0;) {
          const std::size_t a = rem % n;
          rem /= n;
          const double frac = n == 1 ? 0.5 : static_cast<double>(a) / static_cast<double>(n - 1);
          pts[idx * d + k] = s.lo[k] + frac * (s.hi[k] - s.lo[k]);
        }
      }
      return Ensemble::uniform(d, std::move(pts));
    }

    Ensemble operator()(const dist::Gaussian& s) const {
      detail::require(!s.mean.empty(), "gaussian: empty mean");
      detail::require(s.stddev >= 0.0, "gaussian: negative stddev");
      const std::size_t d = s.mean.size();
      std::vector<double> pts(n * d);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < d; ++k) {
          pts[i * d + k] = s.mean[k] + s.stddev * keyed_normal(seed, Stream::kEnsemble, 0,
                                                              static_cast<std::uint32_t>(i),
                                                              static_cast<std::uint32_t>(k));
        }
      }
      return Ensemble::uniform(d, std::move(pts));
    }

    Ensemble operator()(const dist::Explicit& s) const { return Ensemble(s.dim, s.points, s.weights); }
  };
  return std::visit(Builder{n, seed}, spec);
}

/// Pushforward of `ens` under the map x_i -> images_i. Weights are carried over
/// unchanged, so total mass is conserved exactly.
inline Ensemble pushforward(const Ensemble& ens, std::vector<double> images) {
  detail::require(images.size() == ens.points().size(), "pushforward: image count mismatch");
  return Ensemble(ens.dim(), std::move(images), std::vector<double>(ens.weights().begin(), ens.weights().end()));
}

/// Sum_i w_i |x_i|^2, i.e. W_2(ens, delta_0)^2.
inline double second_moment(const Ensemble& ens) {
  double s = 0.0;
  for (std::size_t i = 0; i < ens.size(); ++i) {
    double r2 = 0.0;
    for (double x : ens.point(i)) r2 += x * x;
    s += ens.weight(i) * r2;
  }
  return s;
}

inline std::vector<double> mean(const Ensemble& ens) {
  std::vector<double> m(ens.dim(), 0.0);
  for (std::size_t i = 0; i < ens.size(); ++i) {
    const auto p = ens.point(i);
    for (std::size_t k = 0; k < ens.dim(); ++k) m[k] += ens.weight(i) * p[k];
  }
  return m;
}

/// Reads an explicit ensemble: header row, then `x_1,...,x_d,weight` per point.
inline Ensemble load_ensemble_csv(std::istream& in) {
  std::string line;
  detail::require(static_cast<bool>(std::getline(in, line)), "ensemble csv: missing header");
  std::size_t columns = 1;
  for (char c : line) columns += (c == ',');
  detail::require(columns >= 2, "ensemble csv: need x_1..x_d and weight columns");
  const std::size_t d = columns - 1;
  std::vector<double> pts, wts;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) {
      try {
        vals.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ConfigError("ensemble csv: bad number at row " + std::to_string(row));
      }
    }
    detail::require(vals.size() == columns, "ensemble csv: wrong column count at row " + std::to_string(row));
    pts.insert(pts.end(), vals.begin(), vals.begin() + static_cast<std::ptrdiff_t>(d));
    wts.push_back(vals.back());
  }
  return Ensemble(d, std::move(pts), std::move(wts));
}

inline Ensemble load_ensemble_csv(const std::string& path) {
  std::ifstream in(path);
  detail::require(in.good(), "cannot open ensemble csv: " + path);
  return load_ensemble_csv(in);
}

}  // namespace cspde
