#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>

namespace eos {

/// Counter-based deterministic generator (splitmix64 core).
///
/// Streams are keyed by (seed, stream): the same key always yields the same
/// sequence, independent of platform or standard-library implementation.
/// Cheap to construct, so callers key one generator per logical use site
/// (e.g. per Lanczos restart, per trajectory step).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : state_(mix(mix(seed ^ 0x9e3779b97f4a7c15ull) ^ mix(stream))) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  /// Uniform in [0, 1), 53-bit resolution.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Standard normal via Box-Muller (no cached spare, for reproducibility
  /// independent of call parity).
  double normal() {
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  Eigen::VectorXd normal_vector(Eigen::Index dim) {
    Eigen::VectorXd v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) v[i] = normal();
    return v;
  }

  Eigen::VectorXd unit_vector(Eigen::Index dim) {
    Eigen::VectorXd v = normal_vector(dim);
    double n = v.norm();
    while (n == 0.0) {  // astronomically unlikely
      v = normal_vector(dim);
      n = v.norm();
    }
    return v / n;
  }

 private:
  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace eos
