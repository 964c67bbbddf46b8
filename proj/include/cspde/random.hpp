#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace cspde {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Every output block
/// is a pure function of (key, counter), so draws can be regenerated in any order.
class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;

  explicit Philox4x32(std::uint64_t seed) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  Block operator()(Block counter) const noexcept {
    std::array<std::uint32_t, 2> key = key_;
    for (int round = 0; round < 10; ++round) {
      counter = single_round(counter, key);
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    return counter;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static Block single_round(const Block& c, const std::array<std::uint32_t, 2>& k) noexcept {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }

  std::array<std::uint32_t, 2> key_;
};

/// Independent draw families sharing one seed.
enum class Stream : std::uint32_t {
  kNoise = 0,
  kEnsemble = 1,
  kProbe = 2,
};

/// Standard normal keyed by (seed, stream, replica, step, mode); Box-Muller on two
/// 53-bit uniforms from one Philox block.
inline double keyed_normal(std::uint64_t seed, Stream stream, std::uint32_t replica,
                           std::uint32_t step, std::uint32_t mode) noexcept {
  const Philox4x32 gen(seed);
  const auto out = gen({step, mode, replica, static_cast<std::uint32_t>(stream)});
  constexpr double kScale = 1.0 / 9007199254740992.0;  // 2^-53
  const std::uint64_t a = ((static_cast<std::uint64_t>(out[0]) << 32) | out[1]) >> 11;
  const std::uint64_t b = ((static_cast<std::uint64_t>(out[2]) << 32) | out[3]) >> 11;
  const double u1 = (static_cast<double>(a) + 0.5) * kScale;
  const double u2 = static_cast<double>(b) * kScale;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace cspde
