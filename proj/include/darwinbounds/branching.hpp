#pragma once

// Singly-branching universes  |psi> ∝ c0 (⊗_i |u_i>) + c1 (⊗_i |v_i>).
//
// Every marginal of such a state lives in the span of two product vectors,
// so all spectra come from 2x2 matrices built from the overlaps
// <u_i|v_i>. Nothing here materializes the full tensor product except
// to_dense and the small dense reductions used by the measurement code.

#include "darwinbounds/measurement.hpp"
#include "darwinbounds/qstate.hpp"

#include <vector>

namespace darwinbounds {

struct BranchSite {
  CVector branch0;
  CVector branch1;
};

enum class WeightPolicy {
  exact,        // weights must already give a unit-norm state
  renormalize,  // weights rescaled to |c0|^2 + |c1|^2 = 1, state normalized by norm2()
};

class BranchingState {
 public:
  static BranchingState make(Complex c0, Complex c1, std::vector<BranchSite> sites,
                             WeightPolicy policy = WeightPolicy::exact) {
    if (sites.empty()) throw Error("branching state needs at least the system site");
    BranchingState bs;
    bs.c0_ = c0;
    bs.c1_ = c1;
    bs.sites_ = std::move(sites);
    Complex total{1.0, 0.0};
    for (const auto& s : bs.sites_) {
      if (s.branch0.size() == 0 || s.branch0.size() != s.branch1.size()) {
        throw Error("branch vectors of a site must share a nonzero dimension");
      }
      for (const CVector* v : {&s.branch0, &s.branch1}) {
        const double n = v->norm();
        if (n == 0.0) throw Error("zero-norm branch vector");
        if (std::abs(n - 1.0) > tol::kNorm) throw Error("branch vector not unit-norm");
      }
      const Complex w = s.branch0.dot(s.branch1);
      bs.overlaps_.push_back(w);
      total *= w;
    }
    const double weight2 = std::norm(c0) + std::norm(c1);
    double n2 = weight2 + 2.0 * (std::conj(c0) * c1 * total).real();
    if (!(n2 > 1e-20)) throw Error("non-normalizable branch combination");
    if (policy == WeightPolicy::renormalize) {
      // |c0|^2 + |c1|^2 = 1; the branch overlap stays in norm2().
      if (!(weight2 > 0.0)) throw Error("non-normalizable branch combination");
      const double scale = 1.0 / std::sqrt(weight2);
      bs.c0_ *= scale;
      bs.c1_ *= scale;
      n2 /= weight2;
      if (!(n2 > 1e-20)) throw Error("non-normalizable branch combination");
    } else {
      if (std::abs(weight2 - 1.0) > tol::kNorm) throw Error("branch weights not normalized");
      if (std::abs(n2 - 1.0) > 1e-10) throw Error("branch combination not normalized (norm^2 " + std::to_string(n2) + ")");
    }
    bs.norm2_ = n2;
    bs.symmetric_ = bs.detect_symmetry();
    return bs;
  }

  Complex c0() const { return c0_; }
  Complex c1() const { return c1_; }
  const std::vector<BranchSite>& sites() const { return sites_; }
  std::size_t num_sites() const { return sites_.size(); }
  std::size_t num_env() const { return sites_.size() - 1; }
  /// <u_i|v_i> (branch-0 bra, branch-1 ket).
  Complex site_overlap(std::size_t i) const { return overlaps_[i]; }
  double norm2() const { return norm2_; }
  /// All environment sites carry identical branch pairs.
  bool env_symmetric() const { return symmetric_; }

  std::vector<std::size_t> dims() const {
    std::vector<std::size_t> d;
    for (const auto& s : sites_) d.push_back(static_cast<std::size_t>(s.branch0.size()));
    return d;
  }

 private:
  bool detect_symmetry() const {
    for (std::size_t i = 2; i < sites_.size(); ++i) {
      if (sites_[i].branch0.size() != sites_[1].branch0.size()) return false;
      if ((sites_[i].branch0 - sites_[1].branch0).cwiseAbs().maxCoeff() > 1e-14) return false;
      if ((sites_[i].branch1 - sites_[1].branch1).cwiseAbs().maxCoeff() > 1e-14) return false;
    }
    return true;
  }

  Complex c0_, c1_;
  std::vector<BranchSite> sites_;
  std::vector<Complex> overlaps_;
  double norm2_ = 1.0;
  bool symmetric_ = false;
};

inline BranchingState make_branching(Complex c0, Complex c1, std::vector<BranchSite> sites,
                                     WeightPolicy policy = WeightPolicy::exact) {
  return BranchingState::make(c0, c1, std::move(sites), policy);
}

namespace branching {

/// Product of <u_i|v_i> over the sites of `frag`.
inline Complex group_overlap(const BranchingState& bs, const FragmentSpec& frag) {
  if (bs.env_symmetric() && bs.num_sites() > 1) {
    const bool has_s = frag.contains(0);
    const std::size_t n_env = frag.size() - (has_s ? 1 : 0);
    Complex w = ipow(bs.site_overlap(1), n_env);
    return has_s ? w * bs.site_overlap(0) : w;
  }
  Complex w{1.0, 0.0};
  for (auto i : frag) w *= bs.site_overlap(i);
  return w;
}

/// Product of <u_i|v_i> over the sites outside `frag`.
inline Complex complement_overlap(const BranchingState& bs, const FragmentSpec& frag) {
  const std::size_t n = bs.num_sites();
  if (bs.env_symmetric() && n > 1) {
    const bool has_s = frag.contains(0);
    const std::size_t n_env_in = frag.size() - (has_s ? 1 : 0);
    Complex w = ipow(bs.site_overlap(1), (n - 1) - n_env_in);
    return has_s ? w : w * bs.site_overlap(0);
  }
  Complex w{1.0, 0.0};
  auto it = frag.begin();
  for (std::size_t i = 0; i < n; ++i) {
    if (it != frag.end() && *it == i) { ++it; continue; }
    w *= bs.site_overlap(i);
  }
  return w;
}

/// Entropy of the marginal spanned by {u, v} with <u|v> = omega_in, when the
/// rest of the universe carries overlap omega_out.
inline double rank_two_entropy(Complex c0, Complex c1, double norm2, Complex omega_in, Complex omega_out) {
  const double s_in = std::sqrt(std::max(0.0, 1.0 - std::norm(omega_in)));
  const double s_out = std::sqrt(std::max(0.0, 1.0 - std::norm(omega_out)));
  const double inv = 1.0 / std::sqrt(norm2);
  // Columns of W (rho = W W^dag) in the basis e1 = u, e2 ∝ v - <u|v> u.
  const Complex w1_0 = (c0 + c1 * omega_out * omega_in) * inv;
  const Complex w1_1 = c1 * omega_out * s_in * inv;
  const Complex w2_0 = c1 * s_out * omega_in * inv;
  const Complex w2_1 = c1 * s_out * s_in * inv;
  const double a = std::norm(w1_0) + std::norm(w2_0);
  const double d = std::norm(w1_1) + std::norm(w2_1);
  const Complex b = w1_0 * std::conj(w1_1) + w2_0 * std::conj(w2_1);
  const double det = std::norm(w1_0 * w2_1 - w2_0 * w1_1);
  const double disc = std::sqrt(std::max(0.0, 0.25 * (a - d) * (a - d) + std::norm(b)));
  const double hi = 0.5 * (a + d) + disc;
  const double lo = hi > 0.0 ? det / hi : 0.0;
  RVector spec(2);
  spec << lo, hi;
  return entropy_from_spectrum(spec);
}

/// 4x2 factor W of the two-qubit-equivalent state of groups (a, b) when the
/// remaining sites carry overlap omega_c.
inline CMatrix rank_two_pair_factor(Complex c0, Complex c1, double norm2, Complex omega_a, Complex omega_b,
                                    Complex omega_c) {
  auto branch_pair = [](Complex omega) {
    const double s = std::sqrt(std::max(0.0, 1.0 - std::norm(omega)));
    CVector u(2), v(2);
    u << 1.0, 0.0;
    v << omega, s;
    return std::pair{u, v};
  };
  const auto [ua, va] = branch_pair(omega_a);
  const auto [ub, vb] = branch_pair(omega_b);
  const CVector uu = detail::kron(ua, ub);
  const CVector vv = detail::kron(va, vb);
  const double s_c = std::sqrt(std::max(0.0, 1.0 - std::norm(omega_c)));
  const double inv = 1.0 / std::sqrt(norm2);
  CMatrix w(4, 2);
  w.col(0) = (c0 * uu + c1 * omega_c * vv) * inv;
  w.col(1) = (c1 * s_c * inv) * vv;
  return w;
}

inline std::vector<CVector> branch_vectors(const BranchingState& bs, const FragmentSpec& frag, int branch) {
  std::vector<CVector> out;
  for (auto i : frag) out.push_back(branch == 0 ? bs.sites()[i].branch0 : bs.sites()[i].branch1);
  return out;
}

inline CVector product_vector(const std::vector<CVector>& factors) {
  CVector v = CVector::Ones(1);
  for (const auto& f : factors) v = detail::kron(v, f);
  return v;
}

}  // namespace branching

/// <branch1|branch0> multiplied over the sites of `frag`.
inline Complex fragment_overlap(const BranchingState& bs, const FragmentSpec& frag) {
  frag.validate(bs.num_sites());
  return std::conj(branching::group_overlap(bs, frag));
}

inline double marginal_entropy(const BranchingState& bs, const FragmentSpec& frag) {
  frag.validate(bs.num_sites());
  if (frag.empty() || frag.size() == bs.num_sites()) return 0.0;
  return branching::rank_two_entropy(bs.c0(), bs.c1(), bs.norm2(), branching::group_overlap(bs, frag),
                                     branching::complement_overlap(bs, frag));
}

inline double entropy(const BranchingState& bs, const FragmentSpec& frag) { return marginal_entropy(bs, frag); }

inline double mutual_information(const BranchingState& bs, const FragmentSpec& a, const FragmentSpec& b) {
  require_disjoint(a, b);
  return marginal_entropy(bs, a) + marginal_entropy(bs, b) - marginal_entropy(bs, a.united(b));
}

/// Always available: every pair of groups of a branching universe is
/// two-qubit equivalent.
inline std::optional<CMatrix> pair_factor(const BranchingState& bs, const FragmentSpec& a, const FragmentSpec& b) {
  if (a.empty() || b.empty()) throw Error("pair_factor: empty group");
  require_disjoint(a, b);
  a.validate(bs.num_sites());
  b.validate(bs.num_sites());
  return branching::rank_two_pair_factor(bs.c0(), bs.c1(), bs.norm2(), branching::group_overlap(bs, a),
                                         branching::group_overlap(bs, b),
                                         branching::complement_overlap(bs, a.united(b)));
}

inline bool env_symmetric(const BranchingState& bs) { return bs.env_symmetric(); }

inline constexpr std::size_t kMaxReducedDimension = std::size_t{1} << 12;

/// Dense marginal on `frag` (fragment dimension capped at 4096).
inline DensityMatrix reduced_state(const BranchingState& bs, const FragmentSpec& frag) {
  if (frag.empty()) throw Error("partial_trace: empty keep set");
  frag.validate(bs.num_sites());
  const auto dims = select_dims(bs.dims(), frag);
  if (detail::product(dims) > kMaxReducedDimension) throw Error("reduced state too large for dense representation");
  const CVector u = branching::product_vector(branching::branch_vectors(bs, frag, 0));
  const CVector v = branching::product_vector(branching::branch_vectors(bs, frag, 1));
  const Complex cross = bs.c0() * std::conj(bs.c1()) * std::conj(branching::complement_overlap(bs, frag));
  CMatrix rho = std::norm(bs.c0()) * u * u.adjoint() + std::norm(bs.c1()) * v * v.adjoint();
  const CMatrix x = cross * u * v.adjoint();
  rho += x + x.adjoint();
  rho /= bs.norm2();
  return DensityMatrix(dims, std::move(rho));
}

/// Rank-two factor of the marginal on `sites` (in the given order).
inline StateFactor state_factor(const BranchingState& bs, std::vector<std::size_t> sites) {
  if (sites.empty()) throw Error("state_factor: no sites");
  const FragmentSpec frag(sites);
  frag.validate(bs.num_sites());
  std::vector<CVector> f0, f1;
  std::vector<std::size_t> dims;
  for (auto s : sites) {
    f0.push_back(bs.sites()[s].branch0);
    f1.push_back(bs.sites()[s].branch1);
    dims.push_back(static_cast<std::size_t>(bs.sites()[s].branch0.size()));
  }
  if (detail::product(dims) > kMaxReducedDimension) throw Error("reduced state too large for dense representation");
  const CVector u = branching::product_vector(f0);
  const CVector v = branching::product_vector(f1);
  const Complex omega_out = branching::complement_overlap(bs, frag);
  const double inv = 1.0 / std::sqrt(bs.norm2());
  const double s_out = std::sqrt(std::max(0.0, 1.0 - std::norm(omega_out)));
  CMatrix w(u.size(), 2);
  w.col(0) = (bs.c0() * u + bs.c1() * omega_out * v) * inv;
  w.col(1) = (bs.c1() * s_out * inv) * v;
  return {std::move(sites), std::move(dims), std::move(w)};
}

inline PureState to_dense(const BranchingState& bs, std::size_t dense_cap = kDefaultDenseCap) {
  const auto dims = bs.dims();
  if (detail::product(dims) > dense_cap) throw Error("dense representation exceeds cap");
  const FragmentSpec all = FragmentSpec::range(0, bs.num_sites());
  const CVector u = branching::product_vector(branching::branch_vectors(bs, all, 0));
  const CVector v = branching::product_vector(branching::branch_vectors(bs, all, 1));
  return PureState::normalized(dims, bs.c0() * u + bs.c1() * v);
}

inline JointDistribution measured_joint_distribution(const BranchingState& bs, const FragmentSpec& frag_a,
                                                     const ProjectiveMeasurement& meas_a,
                                                     const FragmentSpec& frag_b,
                                                     const ProjectiveMeasurement& meas_b) {
  require_disjoint(frag_a, frag_b);
  frag_a.validate(bs.num_sites());
  frag_b.validate(bs.num_sites());
  if (frag_a.empty() || frag_b.empty()) throw Error("measured_joint_distribution: empty fragment");
  const auto da = detail::product(select_dims(bs.dims(), frag_a));
  const auto db = detail::product(select_dims(bs.dims(), frag_b));
  if (meas_a.dimension() != da || meas_b.dimension() != db) {
    throw Error("measurement dimension does not match fragment");
  }
  detail::check_joint_request(da * db);
  const CVector a0 = meas_a.amplitudes_of_product(branching::branch_vectors(bs, frag_a, 0));
  const CVector a1 = meas_a.amplitudes_of_product(branching::branch_vectors(bs, frag_a, 1));
  const CVector b0 = meas_b.amplitudes_of_product(branching::branch_vectors(bs, frag_b, 0));
  const CVector b1 = meas_b.amplitudes_of_product(branching::branch_vectors(bs, frag_b, 1));
  const Complex rest = branching::complement_overlap(bs, frag_a.united(frag_b));
  const double w0 = std::norm(bs.c0()), w1 = std::norm(bs.c1());
  const Complex cross = std::conj(bs.c0()) * bs.c1() * rest;
  RMatrix p(static_cast<Eigen::Index>(da), static_cast<Eigen::Index>(db));
  for (Eigen::Index x = 0; x < p.rows(); ++x) {
    for (Eigen::Index y = 0; y < p.cols(); ++y) {
      const double direct = w0 * std::norm(a0[x]) * std::norm(b0[y]) + w1 * std::norm(a1[x]) * std::norm(b1[y]);
      const double interference = 2.0 * (cross * std::conj(a0[x]) * a1[x] * std::conj(b0[y]) * b1[y]).real();
      p(x, y) = (direct + interference) / bs.norm2();
    }
  }
  return {detail::clip_distribution(std::move(p))};
}

}  // namespace darwinbounds
