#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "cspde/errors.hpp"
#include "cspde/random.hpp"

namespace cspde {

/// Uniform grid t_j = j T / M on [0, T].
class TimeGrid {
 public:
  TimeGrid(double horizon, std::size_t steps) : horizon_(horizon), steps_(steps) {
    detail::require(std::isfinite(horizon) && horizon > 0.0, "TimeGrid: T must be > 0");
    detail::require(steps >= 1, "TimeGrid: M must be >= 1");
  }

  double horizon() const noexcept { return horizon_; }
  std::size_t steps() const noexcept { return steps_; }
  double dt() const noexcept { return horizon_ / static_cast<double>(steps_); }
  double node(std::size_t j) const noexcept {
    return j == steps_ ? horizon_ : horizon_ * static_cast<double>(j) / static_cast<double>(steps_);
  }

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

 private:
  double horizon_;
  std::size_t steps_;
};

/// M x K Brownian increments dW_j ~ N(0, dt I_K) for the truncated cylindrical noise.
struct NoisePath {
  TimeGrid grid;
  std::size_t modes = 1;
  std::uint64_t seed = 0;
  std::uint32_t replica = 0;
  std::vector<double> increments;  // row-major, row j = step j

  std::span<const double> increment(std::size_t step) const { return {increments.data() + step * modes, modes}; }
};

/// Increments are keyed by (seed, replica, step, mode), so regeneration is
/// bit-identical and independent of generation order or worker count.
inline NoisePath sample_noise(const TimeGrid& grid, std::size_t modes, std::uint64_t seed, std::uint32_t replica = 0) {
  detail::require(modes >= 1, "sample_noise: K must be >= 1");
  NoisePath path{grid, modes, seed, replica, std::vector<double>(grid.steps() * modes)};
  const double scale = std::sqrt(grid.dt());
  for (std::size_t j = 0; j < grid.steps(); ++j) {
    for (std::size_t k = 0; k < modes; ++k) {
      path.increments[j * modes + k] =
          scale * keyed_normal(seed, Stream::kNoise, replica, static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(k));
    }
  }
  return path;
}

/// A zero path with the same shape; used where the noise term must vanish identically.
inline NoisePath zero_noise(const TimeGrid& grid, std::size_t modes) {
  return NoisePath{grid, modes, 0, 0, std::vector<double>(grid.steps() * modes, 0.0)};
}

inline void write_noise_csv(std::ostream& out, const NoisePath& noise) {
  out.precision(17);
  out << "step,time";
  for (std::size_t k = 0; k < noise.modes; ++k) out << ",dW_" << (k + 1);
  out << '\n';
  for (std::size_t j = 0; j < noise.grid.steps(); ++j) {
    out << j << ',' << noise.grid.node(j);
    for (double v : noise.increment(j)) out << ',' << v;
    out << '\n';
  }
}

}  // namespace cspde
