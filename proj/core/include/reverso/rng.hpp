#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace reverso {

/// Deterministic 64-bit generator used for every random decision in the
/// toolkit (partitions, shuffles, sampling, parameter init, dropout).
///
/// The update is Marsaglia/Vigna xorshift64* with the canonical constants:
///
///   s ^= s >> 12;  s ^= s << 25;  s ^= s >> 27;  return s * 0x2545F4914F6CDD1D
///
/// and the seed is pre-mixed through one round of splitmix64
/// (gamma 0x9E3779B97F4A7C15, finalizer 0xBF58476D1CE4E5B9 / 0x94D049BB133111EB)
/// so that small consecutive seeds yield unrelated streams and seed 0 maps to
/// a nonzero state. Streams are therefore bit-reproducible across platforms
/// for a given (seed, call sequence).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix(seed)) {}

  /// Next raw 64-bit value.
  std::uint64_t next_u64() {
    std::uint64_t s = state_;
    s ^= s >> 12;
    s ^= s << 25;
    s ^= s >> 27;
    state_ = s;
    return s * 0x2545F4914F6CDD1DULL;
  }

  /// Uniform integer in [0, n). Lemire multiply-shift reduction: the high
  /// 64 bits of next_u64() * n. n must be >= 1.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double real() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller (polar-free, two uniforms per call).
  double normal() {
    double u1 = real();
    while (u1 <= 0.0) u1 = real();  // log(0) guard
    const double u2 = real();
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      using std::swap;
      swap(v[i - 1], v[j]);
    }
  }

  /// Derives a decorrelated child seed for an independent logical stream,
  /// without consuming state. Used to give each pipeline stage (entity
  /// generation, pairing, shuffle, dropout, ...) its own stream from one
  /// user-facing seed.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    return mix(seed + 0x9E3779B97F4A7C15ULL * (stream + 1));
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace reverso
