#pragma once

// State families: the c-maybe circuit (with its closed-form correlation
// values), GHZ states, random branching states and Haar-random states.

#include "darwinbounds/branching.hpp"
#include "darwinbounds/qstate.hpp"
#include "darwinbounds/random.hpp"

#include <optional>

namespace darwinbounds {

struct CMaybeParams {
  double a = 0.0;
  std::size_t n_env = 1;

  void validate() const {
    if (!(a >= 0.0 && a <= 1.0)) throw Error("c-maybe parameter a must lie in [0, 1]");
    if (n_env < 1) throw Error("c-maybe needs at least one environment qubit");
  }
};

/// Controlled gate 1 (+) [[a, b], [b, -a]], b = sqrt(1 - a^2); the control is
/// the first tensor factor.
inline CMatrix cmaybe_gate(double a) {
  if (!(a >= 0.0 && a <= 1.0)) throw Error("c-maybe parameter a must lie in [0, 1]");
  const double b = std::sqrt(std::max(0.0, 1.0 - a * a));
  CMatrix g = CMatrix::Zero(4, 4);
  g(0, 0) = 1.0;
  g(1, 1) = 1.0;
  g(2, 2) = a;
  g(2, 3) = b;
  g(3, 2) = b;
  g(3, 3) = -a;
  return g;
}

namespace detail {

inline CVector qubit(Complex c0, Complex c1) {
  CVector v(2);
  v << c0, c1;
  return v;
}

}  // namespace detail

/// c-maybe universe after the gates on the environment sites in `coupled`
/// (a staged circuit); sites outside it remain in |0> on both branches.
inline BranchingState cmaybe_partial(const CMaybeParams& p, const FragmentSpec& coupled) {
  p.validate();
  coupled.validate(p.n_env + 1);
  const double b = std::sqrt(std::max(0.0, 1.0 - p.a * p.a));
  std::vector<BranchSite> sites;
  sites.push_back({detail::qubit(1.0, 0.0), detail::qubit(0.0, 1.0)});
  for (std::size_t i = 1; i <= p.n_env; ++i) {
    const bool on = coupled.contains(i);
    sites.push_back({detail::qubit(1.0, 0.0), on ? detail::qubit(p.a, b) : detail::qubit(1.0, 0.0)});
  }
  const double w = std::numbers::sqrt2 / 2.0;
  return make_branching(w, w, std::move(sites));
}

inline BranchingState cmaybe_branching(const CMaybeParams& p) {
  return cmaybe_partial(p, FragmentSpec::range(1, p.n_env + 1));
}

/// Gate-by-gate application to |+>|0...0>.
inline PureState cmaybe_dense(const CMaybeParams& p, std::size_t dense_cap = kDefaultDenseCap) {
  p.validate();
  if (p.n_env + 1 >= 64 || (std::size_t{1} << (p.n_env + 1)) > dense_cap) throw Error("dense c-maybe universe exceeds cap");
  std::vector<PureState> factors;
  const double w = std::numbers::sqrt2 / 2.0;
  factors.push_back(PureState({2}, detail::qubit(w, w)));
  for (std::size_t i = 0; i < p.n_env; ++i) factors.push_back(PureState::basis(2, 0));
  PureState psi = tensor_product(factors);
  const CMatrix g = cmaybe_gate(p.a);
  for (std::size_t i = 1; i <= p.n_env; ++i) psi = apply_unitary(psi, g, FragmentSpec{0, i});
  return psi;
}

struct CMaybeUniverse {
  BranchingState branching;
  std::optional<PureState> dense;
};

inline constexpr std::size_t kCMaybeDenseMaxEnv = 13;  // 14 qubits in total

inline CMaybeUniverse cmaybe_universe(const CMaybeParams& p, bool want_dense = false) {
  CMaybeUniverse u{cmaybe_branching(p), std::nullopt};
  if (want_dense) {
    if (p.n_env + 1 > kCMaybeDenseMaxEnv + 1) throw Error("dense c-maybe universe requested above the size cap");
    u.dense = cmaybe_dense(p);
  }
  return u;
}

struct ClosedFormValues {
  double H_S = 0.0;
  double H_eps = 0.0;
  double J_bar = 0.0;
  double D_bar = 0.0;
  double delta = 0.0;
  bool degenerate = false;
};

/// h(sqrt(1 - t)) evaluated without forming 1 - sqrt(1 - t).
inline double h_sqrt_one_minus(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return h_bin(0.5 * t / (1.0 + std::sqrt(1.0 - t)));
}

inline ClosedFormValues closed_forms(const CMaybeParams& p) {
  p.validate();
  const double a = p.a;
  const std::size_t n = p.n_env;
  const double an = ipow(a, n);
  // a^{2N} - a^2 + 1 = 1 - a^2 (1 - a^{2N-2})
  const double t = a * a * (1.0 - ipow(a, 2 * n - 2));
  const double hx = h_sqrt_one_minus(t);
  ClosedFormValues v;
  v.H_S = h_sym(an);
  v.H_eps = h_sym(a);
  v.J_bar = v.H_S - hx;
  v.D_bar = v.H_eps - h_sym(ipow(a, n - 1)) + hx;
  v.degenerate = v.H_S < tol::kDegenerate;
  v.delta = v.degenerate ? 0.0 : hx / v.H_S;
  return v;
}

/// Evenly spaced grid on [lo, hi] including both endpoints.
inline std::vector<double> linear_grid(double lo, double hi, std::size_t count) {
  if (count == 0) throw Error("grid needs at least one point");
  std::vector<double> g(count);
  for (std::size_t i = 0; i < count; ++i)
    g[i] = count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  if (count > 1) g.back() = hi;
  return g;
}

/// (|0...0> + |1...1>) / sqrt 2 on n_total qubits.
inline BranchingState ghz(std::size_t n_total) {
  if (n_total < 2) throw Error("GHZ state needs at least two qubits");
  std::vector<BranchSite> sites(n_total, BranchSite{detail::qubit(1.0, 0.0), detail::qubit(0.0, 1.0)});
  const double w = std::numbers::sqrt2 / 2.0;
  return make_branching(w, w, std::move(sites));
}

/// Normalized i.i.d. complex Gaussian amplitudes.
inline PureState haar_random_pure(std::vector<std::size_t> dims, std::uint64_t seed,
                                  std::size_t dense_cap = kDefaultDenseCap) {
  if (dims.empty()) throw Error("haar_random_pure: no subsystems");
  const std::size_t d = detail::product(dims);
  if (d > dense_cap) throw Error("haar_random_pure: dimension exceeds dense cap");
  Rng rng(seed);
  return PureState::normalized(std::move(dims), rng.unit_vector(static_cast<Eigen::Index>(d)));
}

enum class BranchWeights { equal, random };

/// Haar-random qubit branch vectors on every site (S included) and equal or
/// random complex weights, normalized.
inline BranchingState random_branching(std::size_t n_env, std::uint64_t seed, BranchWeights weights = BranchWeights::equal) {
  if (n_env < 2) throw Error("random_branching needs at least two environment qubits");
  Rng rng(seed);
  for (int attempt = 0; attempt < 64; ++attempt) {
    std::vector<BranchSite> sites;
    for (std::size_t i = 0; i <= n_env; ++i) {
      CVector b0 = rng.unit_vector(2);
      CVector b1 = rng.unit_vector(2);
      sites.push_back({std::move(b0), std::move(b1)});
    }
    Complex c0{1.0, 0.0}, c1{1.0, 0.0};
    if (weights == BranchWeights::random) {
      const CVector c = rng.unit_vector(2);
      c0 = c[0];
      c1 = c[1];
    }
    try {
      return make_branching(c0, c1, std::move(sites), WeightPolicy::renormalize);
    } catch (const Error&) {
      // Nearly cancelling branches; draw again.
    }
  }
  throw Error("random_branching: could not draw a normalizable state");
}

}  // namespace darwinbounds
