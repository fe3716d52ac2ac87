#pragma once

// Brute-force reference implementations used only by the tests. They work on
// explicit dense matrices with index loops and share no code paths with the
// library beyond the basic Eigen types.

#include "darwinbounds/core.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <vector>

namespace oracle {

using darwinbounds::CMatrix;
using darwinbounds::Complex;
using darwinbounds::CVector;

/// Row-major multi-index digits of `flat` (site 0 most significant).
inline std::vector<std::size_t> digits(std::size_t flat, const std::vector<std::size_t>& dims) {
  std::vector<std::size_t> d(dims.size());
  for (std::size_t i = dims.size(); i-- > 0;) {
    d[i] = flat % dims[i];
    flat /= dims[i];
  }
  return d;
}

inline std::size_t flatten(const std::vector<std::size_t>& d, const std::vector<std::size_t>& dims) {
  std::size_t f = 0;
  for (std::size_t i = 0; i < dims.size(); ++i) f = f * dims[i] + d[i];
  return f;
}

inline std::size_t total(const std::vector<std::size_t>& dims) {
  std::size_t t = 1;
  for (auto d : dims) t *= d;
  return t;
}

/// Reduced density matrix of |psi> on `keep` (sorted), by explicit summation.
inline CMatrix reduced(const CVector& psi, const std::vector<std::size_t>& dims, const std::vector<std::size_t>& keep) {
  std::vector<std::size_t> kd;
  for (auto k : keep) kd.push_back(dims[k]);
  const std::size_t dk = total(kd);
  CMatrix rho = CMatrix::Zero(static_cast<Eigen::Index>(dk), static_cast<Eigen::Index>(dk));
  const std::size_t n = total(dims);
  for (std::size_t i = 0; i < n; ++i) {
    const auto di = digits(i, dims);
    for (std::size_t j = 0; j < n; ++j) {
      const auto dj = digits(j, dims);
      bool same = true;
      for (std::size_t s = 0; s < dims.size() && same; ++s)
        if (std::find(keep.begin(), keep.end(), s) == keep.end() && di[s] != dj[s]) same = false;
      if (!same) continue;
      std::vector<std::size_t> ri, rj;
      for (auto k : keep) {
        ri.push_back(di[k]);
        rj.push_back(dj[k]);
      }
      rho(static_cast<Eigen::Index>(flatten(ri, kd)), static_cast<Eigen::Index>(flatten(rj, kd))) +=
          psi[static_cast<Eigen::Index>(i)] * std::conj(psi[static_cast<Eigen::Index>(j)]);
    }
  }
  return rho;
}

inline double entropy(const CMatrix& rho) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(rho);
  double s = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double p = es.eigenvalues()[i];
    if (p > 1e-14) s -= p * std::log(p) / std::log(2.0);
  }
  return s;
}

inline double entropy_of(const CVector& psi, const std::vector<std::size_t>& dims, const std::vector<std::size_t>& keep) {
  if (keep.empty()) return 0.0;
  return entropy(reduced(psi, dims, keep));
}

/// Wootters concurrence from the non-Hermitian product rho * rho~, in long
/// double: the square roots amplify eigenvalue round-off near zero.
inline double concurrence(const CMatrix& rho) {
  using LMatrix = Eigen::Matrix<std::complex<long double>, 4, 4>;
  LMatrix r, yy = LMatrix::Zero();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) r(i, j) = {rho(i, j).real(), rho(i, j).imag()};
  yy(0, 3) = -1.0L;
  yy(1, 2) = 1.0L;
  yy(2, 1) = 1.0L;
  yy(3, 0) = -1.0L;
  const LMatrix tilde = yy * r.conjugate() * yy;
  Eigen::ComplexEigenSolver<LMatrix> es(r * tilde);
  std::vector<long double> l;
  for (Eigen::Index i = 0; i < 4; ++i) l.push_back(std::sqrt(std::max(0.0L, es.eigenvalues()[i].real())));
  std::sort(l.rbegin(), l.rend());
  return static_cast<double>(std::max(0.0L, l[0] - l[1] - l[2] - l[3]));
}

/// The closed-form binary entropies written out directly.
inline long double h_bin(long double p) {
  auto t = [](long double x) { return x <= 0 ? 0.0L : -x * std::log2(x); };
  return t(p) + t(1 - p);
}
inline long double h(long double x) { return h_bin((1 + x) / 2); }

/// J(A:B) with the single qubit B measured along (theta, phi), from explicit
/// conditional states of the two-party matrix rho (A first, B last, d_b = 2).
inline double measured_info(const CMatrix& rho, Eigen::Index d_a, double theta, double phi) {
  CVector b0(2), b1(2);
  b0 << std::cos(theta / 2), std::polar(1.0, phi) * std::sin(theta / 2);
  b1 << -std::polar(1.0, -phi) * std::sin(theta / 2), std::cos(theta / 2);
  CMatrix rho_a = CMatrix::Zero(d_a, d_a);
  for (Eigen::Index i = 0; i < d_a; ++i)
    for (Eigen::Index j = 0; j < d_a; ++j) rho_a(i, j) = rho(2 * i, 2 * j) + rho(2 * i + 1, 2 * j + 1);
  double cond = 0.0;
  for (const CVector* b : {&b0, &b1}) {
    CMatrix r = CMatrix::Zero(d_a, d_a);
    for (Eigen::Index i = 0; i < d_a; ++i)
      for (Eigen::Index j = 0; j < d_a; ++j)
        for (Eigen::Index x = 0; x < 2; ++x)
          for (Eigen::Index y = 0; y < 2; ++y)
            r(i, j) += std::conj((*b)[x]) * rho(2 * i + x, 2 * j + y) * (*b)[y];
    const double p = r.trace().real();
    if (p > 1e-15) cond += p * entropy(r / p);
  }
  return entropy(rho_a) - cond;
}

/// Dense Bloch scan plus coordinate refinement of measured_info.
inline double j_brute(const CMatrix& rho, Eigen::Index d_a, int res = 180) {
  const double pi = std::acos(-1.0);
  double best = -1, bt = 0, bp = 0;
  for (int i = 0; i <= res; ++i)
    for (int j = 0; j < 2 * res; ++j) {
      const double t = pi * i / res, p = pi * j / res;
      const double v = measured_info(rho, d_a, t, p);
      if (v > best) best = v, bt = t, bp = p;
    }
  double step = pi / res;
  while (step > 1e-10) {
    bool moved = false;
    for (int di = -1; di <= 1; ++di)
      for (int dj = -1; dj <= 1; ++dj) {
        const double v = measured_info(rho, d_a, bt + di * step, bp + dj * step);
        if (v > best + 1e-15) best = v, bt += di * step, bp += dj * step, moved = true;
      }
    if (!moved) step *= 0.5;
  }
  return best;
}

}  // namespace oracle
