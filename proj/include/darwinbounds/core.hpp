#pragma once

// Shared numeric types, tolerances and entropy helpers.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>

namespace darwinbounds {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;

/// Raised for every contract violation (bad dimensions, invalid states, ...).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace tol {
inline constexpr double kNorm = 1e-12;        // pure-state normalization
inline constexpr double kHermitian = 1e-10;   // max |rho - rho^dag| element
inline constexpr double kTrace = 1e-10;
inline constexpr double kPsd = 1e-10;         // eigenvalues below -kPsd are an error
inline constexpr double kEigenZero = 1e-12;   // eigenvalues below this carry no entropy
inline constexpr double kUnitary = 1e-10;
inline constexpr double kRank = 1e-10;        // third eigenvalue below this => rank two
inline constexpr double kOrthonormal = 1e-10;
inline constexpr double kDegenerate = 1e-9;   // H(S) below this => degenerate deficit
}  // namespace tol

inline constexpr std::size_t kDefaultDenseCap = std::size_t{1} << 16;

/// -p log2 p with the 0 log 0 = 0 convention.
inline double neg_xlog2x(double p) {
  if (p <= 0.0) return 0.0;
  return -p * std::log2(p);
}

/// Binary entropy of a probability in bits.
inline double h_bin(double p) {
  p = std::clamp(p, 0.0, 1.0);
  const double q = std::min(p, 1.0 - p);
  if (q <= 0.0) return 0.0;
  // (1-q) log2(1-q) through log1p for small q.
  return -q * std::log2(q) - (1.0 - q) * std::log1p(-q) / std::numbers::ln2;
}

/// Symmetric parameterization h(x) = h_bin((1+x)/2), x in [-1, 1].
/// Evaluated from (1-|x|)/2 directly to keep precision as |x| -> 1.
inline double h_sym(double x) {
  const double ax = std::min(std::abs(x), 1.0);
  const double eps = 0.5 * (1.0 - ax);
  if (eps <= 0.0) return 0.0;
  return -eps * std::log2(eps) - (1.0 - eps) * std::log1p(-eps) / std::numbers::ln2;
}

inline double shannon_entropy(std::span<const double> probabilities) {
  double h = 0.0;
  for (double p : probabilities) h += neg_xlog2x(p);
  return h;
}

/// Von Neumann entropy (bits) of a spectrum. Eigenvalues in [-kPsd, 0] are
/// clipped; anything more negative means the input was not a state.
inline double entropy_from_spectrum(const RVector& eigenvalues) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
    const double lam = eigenvalues[i];
    if (lam < -tol::kPsd) {
      throw Error("negative eigenvalue " + std::to_string(lam) + " in density matrix spectrum");
    }
    if (lam < tol::kEigenZero) continue;
    h += neg_xlog2x(lam);
  }
  return std::max(h, 0.0);
}

/// Eigenvalues (ascending) of a 2x2 Hermitian matrix, computed so that the
/// small eigenvalue keeps its relative accuracy.
inline std::array<double, 2> hermitian2_eigenvalues(double a, double d, Complex b) {
  const double tr = a + d;
  const double det = a * d - std::norm(b);
  const double disc = std::sqrt(std::max(0.0, 0.25 * (a - d) * (a - d) + std::norm(b)));
  const double hi = 0.5 * tr + disc;
  const double lo = hi > 0.0 ? det / hi : 0.5 * tr - disc;
  return {lo, hi};
}

inline double ipow(double base, std::size_t exponent) {
  double result = 1.0;
  while (exponent > 0) {
    if (exponent & 1U) result *= base;
    base *= base;
    exponent >>= 1U;
  }
  return result;
}

inline Complex ipow(Complex base, std::size_t exponent) {
  Complex result{1.0, 0.0};
  while (exponent > 0) {
    if (exponent & 1U) result *= base;
    base *= base;
    exponent >>= 1U;
  }
  return result;
}

}  // namespace darwinbounds
