#pragma once

// Counter-based random numbers (Philox4x32-10). Every draw is a pure function
// of (seed, path, step, block), so paths can be generated in any order and on
// any number of workers with identical results.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

#include <Eigen/Dense>

namespace vlift {

class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr int kRounds = 10;

  static Counter apply(Counter ctr, Key key) noexcept {
    for (int r = 0; r < kRounds; ++r) {
      if (r > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      ctr = round(ctr, key);
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;

  static Counter round(const Counter& c, const Key& k) noexcept {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }
};

/// Gaussian draws addressed by (path, step). One Philox block yields two
/// standard normals through Box-Muller on 53-bit uniforms.
class PathNoise {
 public:
  explicit PathNoise(std::uint64_t seed) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  /// Standard normal vector of dimension `dim` for (path, step, stream).
  /// `stream` separates independent uses of the same (path, step) slot.
  Eigen::VectorXd normals(std::uint64_t path, std::uint64_t step, int dim,
                          std::uint32_t stream = 0) const {
    Eigen::VectorXd out(dim);
    for (int b = 0; 2 * b < dim; ++b) {
      const auto [z0, z1] = pair(path, step, stream, static_cast<std::uint32_t>(b));
      out[2 * b] = z0;
      if (2 * b + 1 < dim) out[2 * b + 1] = z1;
    }
    return out;
  }

  /// Brownian increment with variance dt per component.
  Eigen::VectorXd increment(std::uint64_t path, std::uint64_t step, int dim, double dt,
                            std::uint32_t stream = 0) const {
    return std::sqrt(dt) * normals(path, step, dim, stream);
  }

 private:
  Philox4x32::Key key_;

  std::pair<double, double> pair(std::uint64_t path, std::uint64_t step, std::uint32_t stream,
                                 std::uint32_t block) const noexcept {
    // counter words: path | step | (stream << 16 | block) | path high bits
    const Philox4x32::Counter ctr{static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(step),
                                  (stream << 16) ^ block,
                                  static_cast<std::uint32_t>(path >> 32) ^
                                      (static_cast<std::uint32_t>(step >> 32) << 16)};
    const auto r = Philox4x32::apply(ctr, key_);
    const double u1 = to_unit(r[0], r[1]);
    const double u2 = to_unit(r[2], r[3]);
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * std::numbers::pi * u2;
    return {rad * std::cos(ang), rad * std::sin(ang)};
  }

  // (0, 1], never exactly zero so the logarithm is finite.
  static double to_unit(std::uint32_t hi, std::uint32_t lo) noexcept {
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
  }
};

}  // namespace vlift
