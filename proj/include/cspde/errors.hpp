#pragma once

#include <cstddef>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace cspde {

/// Bad input: malformed configuration, inconsistent shapes, violated preconditions.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical routine could not produce a trustworthy result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a particle state becomes non-finite. Runs are aborted, never clamped.
class BlowUpError : public NumericalError {
 public:
  BlowUpError(std::size_t step, std::size_t particle)
      : NumericalError("non-finite state at step " + std::to_string(step) + ", particle " +
                       std::to_string(particle)),
        step_(step),
        particle_(particle) {}

  std::size_t step() const noexcept { return step_; }
  std::size_t particle() const noexcept { return particle_; }

 private:
  std::size_t step_;
  std::size_t particle_;
};

/// Iterative solver stopped before reaching its tolerance.
class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, std::size_t iterations, double residual)
      : NumericalError(what + " (iterations=" + std::to_string(iterations) + ", residual=" + format(residual) + ")"),
        iterations_(iterations),
        residual_(residual) {}

  std::size_t iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }

 private:
  static std::string format(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
  }

  std::size_t iterations_;
  double residual_;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ConfigError(message);
}

}  // namespace detail
}  // namespace cspde
