#pragma once

// Gradient-free local search (Nelder-Mead with dimension-adaptive
// coefficients) and the unitary parameterization used for measurement
// bases: U(theta) = U_ref * exp(i H(theta)), H Hermitian with d^2 real
// parameters.

#include "darwinbounds/core.hpp"

#include <functional>
#include <vector>

namespace darwinbounds {

struct NelderMeadOptions {
  double initial_step = 0.5;
  double stall_tolerance = 1e-10;  // required improvement ...
  int stall_window = 50;           // ... over this many iterations
  int max_iterations = 20000;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
};

/// Minimizes f starting from a simplex around x0.
template <class F>
NelderMeadResult nelder_mead(F&& f, std::vector<double> x0, const NelderMeadOptions& opt = {}) {
  const std::size_t n = x0.size();
  NelderMeadResult res;
  if (n == 0) {
    res.x = x0;
    res.value = f(x0);
    res.evaluations = 1;
    return res;
  }
  const double dn = static_cast<double>(n);
  const double alpha = 1.0, beta = 1.0 + 2.0 / dn, gamma = 0.75 - 0.5 / dn, shrink = 1.0 - 1.0 / dn;
  const double gamma_c = std::max(gamma, 0.25), shrink_c = std::max(shrink, 0.5);

  std::vector<std::vector<double>> pts(n + 1, x0);
  std::vector<double> vals(n + 1);
  for (std::size_t i = 0; i < n; ++i) pts[i + 1][i] += opt.initial_step;
  for (std::size_t i = 0; i <= n; ++i) vals[i] = f(pts[i]);
  res.evaluations = static_cast<int>(n + 1);

  std::vector<std::size_t> order(n + 1);
  std::vector<double> best_history;
  std::vector<double> centroid(n), xr(n), xe(n), xc(n);
  auto affine = [&](std::vector<double>& out, double t, const std::vector<double>& worst) {
    for (std::size_t j = 0; j < n; ++j) out[j] = centroid[j] + t * (worst[j] - centroid[j]);
  };

  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    for (std::size_t i = 0; i <= n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    const double best = vals[order.front()];
    best_history.push_back(best);
    if (best_history.size() > static_cast<std::size_t>(opt.stall_window)) {
      const double past = best_history[best_history.size() - 1 - static_cast<std::size_t>(opt.stall_window)];
      if (past - best < opt.stall_tolerance) break;
    }
    if (vals[order.back()] - best < 1e-15) break;  // collapsed simplex

    const std::size_t worst = order.back(), second = order[n - 1];
    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) centroid[j] += pts[order[i]][j] / dn;

    affine(xr, -alpha, pts[worst]);
    const double fr = f(xr);
    ++res.evaluations;
    if (fr < best) {
      affine(xe, -alpha * beta, pts[worst]);
      const double fe = f(xe);
      ++res.evaluations;
      if (fe < fr) {
        pts[worst] = xe;
        vals[worst] = fe;
      } else {
        pts[worst] = xr;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = xr;
      vals[worst] = fr;
      continue;
    }
    const bool outside = fr < vals[worst];
    affine(xc, outside ? -alpha * gamma_c : gamma_c, pts[worst]);
    const double fc = f(xc);
    ++res.evaluations;
    if (fc < std::min(fr, vals[worst])) {
      pts[worst] = xc;
      vals[worst] = fc;
      continue;
    }
    const auto& xb = pts[order.front()];
    for (std::size_t i = 1; i <= n; ++i) {
      auto& p = pts[order[i]];
      for (std::size_t j = 0; j < n; ++j) p[j] = xb[j] + shrink_c * (p[j] - xb[j]);
      vals[order[i]] = f(p);
    }
    res.evaluations += static_cast<int>(n);
  }
  const auto best_it = std::min_element(vals.begin(), vals.end());
  res.x = pts[static_cast<std::size_t>(best_it - vals.begin())];
  res.value = *best_it;
  res.iterations = it;
  return res;
}

struct BfgsOptions {
  double fd_step = 1e-6;        // central-difference step
  double gradient_tolerance = 1e-9;
  int max_iterations = 400;
};

/// Quasi-Newton local minimization with central-difference gradients and
/// Armijo backtracking. Used to polish a Nelder-Mead result.
template <class F>
NelderMeadResult bfgs(F&& f, std::vector<double> x, const BfgsOptions& opt = {}) {
  const auto n = static_cast<Eigen::Index>(x.size());
  NelderMeadResult res;
  auto eval = [&](const RVector& v) {
    ++res.evaluations;
    return f(std::vector<double>(v.data(), v.data() + v.size()));
  };
  RVector xv = Eigen::Map<RVector>(x.data(), n);
  auto grad = [&](const RVector& v) {
    RVector g(n);
    RVector t = v;
    for (Eigen::Index i = 0; i < n; ++i) {
      t[i] = v[i] + opt.fd_step;
      const double up = eval(t);
      t[i] = v[i] - opt.fd_step;
      const double dn = eval(t);
      t[i] = v[i];
      g[i] = (up - dn) / (2 * opt.fd_step);
    }
    return g;
  };
  double fx = eval(xv);
  RVector g = grad(xv);
  RMatrix hinv = RMatrix::Identity(n, n);
  int it = 0;
  for (; it < opt.max_iterations && g.norm() > opt.gradient_tolerance; ++it) {
    RVector dir = -hinv * g;
    if (dir.dot(g) >= 0) {
      hinv.setIdentity();
      dir = -g;
    }
    double t = 1.0, ft = 0.0;
    RVector xt;
    bool accepted = false;
    for (int k = 0; k < 40; ++k, t *= 0.5) {
      xt = xv + t * dir;
      ft = eval(xt);
      if (ft <= fx + 1e-4 * t * g.dot(dir)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    const RVector gt = grad(xt);
    const RVector s = xt - xv, y = gt - g;
    const double sy = s.dot(y);
    if (sy > 1e-16) {
      const double rho = 1.0 / sy;
      const RMatrix a = RMatrix::Identity(n, n) - rho * s * y.transpose();
      hinv = a * hinv * a.transpose() + rho * s * s.transpose();
    }
    const double gain = fx - ft;
    xv = xt;
    fx = ft;
    g = gt;
    if (gain < 1e-15) break;
  }
  res.x.assign(xv.data(), xv.data() + n);
  res.value = fx;
  res.iterations = it;
  return res;
}

/// Hermitian matrix from d^2 reals: d diagonal entries, then (re, im) of
/// the strict upper triangle row by row.
inline CMatrix hermitian_from_params(const double* theta, Eigen::Index d) {
  CMatrix h = CMatrix::Zero(d, d);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < d; ++i) h(i, i) = theta[k++];
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i + 1; j < d; ++j) {
      const Complex z{theta[k], theta[k + 1]};
      k += 2;
      h(i, j) = z;
      h(j, i) = std::conj(z);
    }
  return h;
}

/// exp(i H) for Hermitian H.
inline CMatrix exp_i_hermitian(const CMatrix& h) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(h);
  const RVector& w = es.eigenvalues();
  CVector phases(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) phases[i] = std::polar(1.0, w[i]);
  return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

inline CMatrix unitary_from_params(const CMatrix& u_ref, const double* theta) {
  return u_ref * exp_i_hermitian(hermitian_from_params(theta, u_ref.rows()));
}

}  // namespace darwinbounds
