#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace kenkf {

/// Counter-keyed random stream.
///
/// Every consumer derives its own stream from a root seed plus integer keys
/// (iteration, particle, purpose tag, ...). Streams with distinct keys are
/// statistically independent, and a particle's draws depend only on its own
/// key, never on how work is scheduled across threads. The generator is
/// splitmix64; normal deviates come from Box-Muller with a cached spare.
class RngStream {
 public:
  explicit RngStream(std::uint64_t key) : state_(key) {}

  /// Mix an ordered key tuple into a stream. Each field passes through the
  /// splitmix64 finalizer so (1,2) and (2,1) land far apart.
  static RngStream keyed(std::uint64_t seed, std::uint64_t a = 0,
                         std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t k = mix(seed);
    k = mix(k ^ (0x9e3779b97f4a7c15ULL + a));
    k = mix(k ^ (0xbf58476d1ce4e5b9ULL + b));
    k = mix(k ^ (0x94d049bb133111ebULL + c));
    return RngStream(k);
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  /// Uniform on (0, 1]: 53 bits, never exactly zero (safe under log()).
  double uniform01() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_below(std::uint64_t n) {
    // Lemire multiply-shift; the slight modulo bias of the plain remainder
    // trick is avoided without rejection loops.
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    return static_cast<std::uint64_t>(m >> 64);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal deviate.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  /// First M entries of a uniformly random M-subset of {0, ..., n-1},
  /// without repetition (partial Fisher-Yates, O(M) swaps).
  /// `pool` must hold the identity permutation of size n on entry and is
  /// restored before returning, so callers can reuse it across particles.
  void sample_without_replacement(std::size_t m, std::vector<std::uint32_t>& pool,
                                  std::vector<std::uint32_t>& out) {
    const std::size_t n = pool.size();
    out.resize(m);
    swap_log_.resize(m);
    for (std::size_t k = 0; k < m; ++k) {
      const std::size_t r = k + static_cast<std::size_t>(uniform_below(n - k));
      swap_log_[k] = static_cast<std::uint32_t>(r);
      std::swap(pool[k], pool[r]);
      out[k] = pool[k];
    }
    for (std::size_t k = m; k-- > 0;) std::swap(pool[k], pool[swap_log_[k]]);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
  std::vector<std::uint32_t> swap_log_;
};

/// Purpose tags keeping independent stream families apart.
namespace rng_tag {
inline constexpr std::uint64_t kPrior = 0x50524952;     // ensemble init
inline constexpr std::uint64_t kData = 0x44415441;      // synthetic observation noise
inline constexpr std::uint64_t kUpdate = 0x55504454;    // per-iteration particle updates
inline constexpr std::uint64_t kEnkf = 0x454e4b46;      // discrete EnKF perturbations
}  // namespace rng_tag

}  // namespace kenkf
