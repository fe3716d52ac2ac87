#pragma once

// Portable seeded random stream.
//
// Every sampled quantity in the library is drawn from `Rng`, which wraps
// std::mt19937_64 (its output sequence is fixed by the standard) and derives
// uniforms and normals with explicit formulas instead of the
// implementation-defined std:: distributions:
//   uniform  = (next() >> 11) * 2^-53                         in [0, 1)
//   normal   = Box-Muller on two uniforms, cos branch first, sin branch cached
// Sub-streams (restart r of a seed s) are seeded with splitmix64(s ^ splitmix64(r)).

#include "darwinbounds/core.hpp"

#include <cstdint>
#include <limits>
#include <random>

namespace darwinbounds {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30U)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27U)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31U);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream derived from (seed, stream index).
  static Rng substream(std::uint64_t seed, std::uint64_t stream) {
    return Rng(splitmix64(seed ^ splitmix64(stream)));
  }

  std::uint64_t next() { return engine_(); }

  double uniform() { return static_cast<double>(next() >> 11U) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw Error("Rng::below: empty range");
    // Rejection keeps the draw unbiased and the stream portable.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v = next();
    while (v >= limit) v = next();
    return v % n;
  }

  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(phi);
    has_cached_ = true;
    return r * std::cos(phi);
  }

  Complex complex_normal() {
    const double re = normal();
    const double im = normal();
    return {re, im};
  }

  /// Haar-random unit vector in C^d.
  CVector unit_vector(Eigen::Index d) {
    CVector v(d);
    for (Eigen::Index i = 0; i < d; ++i) v[i] = complex_normal();
    return v / v.norm();
  }

  /// Haar-random unitary: QR of a complex Ginibre matrix with the phase of
  /// R's diagonal absorbed into Q.
  CMatrix unitary(Eigen::Index d) {
    CMatrix g(d, d);
    for (Eigen::Index c = 0; c < d; ++c)
      for (Eigen::Index r = 0; r < d; ++r) g(r, c) = complex_normal();
    Eigen::HouseholderQR<CMatrix> qr(g);
    CMatrix q = qr.householderQ();
    const CMatrix& rr = qr.matrixQR();
    for (Eigen::Index c = 0; c < d; ++c) {
      const Complex diag = rr(c, c);
      const double mag = std::abs(diag);
      if (mag > 0.0) q.col(c) *= diag / mag;
    }
    return q;
  }

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace darwinbounds
