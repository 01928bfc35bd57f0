#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

#include "qgeom/common.hpp"

// Counter-based deterministic random streams.  A stream is keyed by
// (seed, tag); draw i is a pure function splitmix64(key + i * golden), so a
// stream's history is independent of every other stream and reruns are
// bit-identical.  Tags keep data generation, initialization, orbit sampling,
// and perturbations on non-overlapping streams.

namespace qgeom {

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

/// SplitMix64 output function: a bijective avalanche mix of the state.
inline std::uint64_t splitmix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// FNV-1a over the tag bytes, to fold a stream name into the key.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (const char ch : s) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace detail

class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view tag)
      : key_(detail::splitmix64((seed + detail::kGolden) ^
                                detail::splitmix64(detail::fnv1a(tag)))) {}

  std::uint64_t next_u64() {
    ++counter_;
    return detail::splitmix64(key_ + counter_ * detail::kGolden);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; consumes two uniforms per call.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]: keeps the log finite
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Unbiased integer in [0, bound) by rejection.
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) throw ValidationError("RngStream::below: bound must be > 0");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % bound;
  }

  /// Uniform random permutation of {0, ..., m-1} (Fisher-Yates).
  std::vector<int> permutation(int m) {
    std::vector<int> p(m);
    for (int i = 0; i < m; ++i) p[i] = i;
    for (int i = m - 1; i > 0; --i) {
      const int j = static_cast<int>(below(static_cast<std::uint64_t>(i) + 1));
      std::swap(p[i], p[j]);
    }
    return p;
  }

  dvec normal_vec(int k) {
    dvec v(k);
    for (int i = 0; i < k; ++i) v(i) = normal();
    return v;
  }

  dmat normal_mat(int rows, int cols) {
    dmat M(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) M(r, c) = normal();
    return M;
  }

  /// Uniform on the unit sphere in R^d (normalized Gaussian; resampled in the
  /// measure-zero event of a near-zero draw).
  dvec sphere_vec(int d) {
    for (;;) {
      dvec v = normal_vec(d);
      const double norm = v.norm();
      if (norm > 1e-12) return v / norm;
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace qgeom
