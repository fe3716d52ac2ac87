#pragma once

// Rank-one projective measurements on a fragment, either as one orthonormal
// basis of the whole fragment space or as a product of per-site bases.

#include "darwinbounds/qstate.hpp"

#include <vector>

namespace darwinbounds {

class ProjectiveMeasurement {
 public:
  /// Columns of `basis` are the measurement vectors.
  static ProjectiveMeasurement full(CMatrix basis) {
    check_basis(basis);
    ProjectiveMeasurement m;
    m.full_ = std::move(basis);
    return m;
  }

  static ProjectiveMeasurement product(std::vector<CMatrix> site_bases) {
    if (site_bases.empty()) throw Error("product measurement needs at least one site basis");
    for (const auto& b : site_bases) check_basis(b);
    ProjectiveMeasurement m;
    m.sites_ = std::move(site_bases);
    return m;
  }

  static ProjectiveMeasurement computational(std::span<const std::size_t> site_dims) {
    std::vector<CMatrix> bases;
    for (auto d : site_dims) bases.push_back(CMatrix::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)));
    return product(std::move(bases));
  }

  bool is_product() const { return !sites_.empty(); }
  const std::vector<CMatrix>& site_bases() const { return sites_; }
  /// Whole-fragment basis (Kronecker product for product measurements).
  CMatrix basis() const {
    if (sites_.empty()) return full_;
    CMatrix out = sites_.front();
    for (std::size_t i = 1; i < sites_.size(); ++i) out = detail::kron(out, sites_[i]);
    return out;
  }

  std::size_t dimension() const {
    if (sites_.empty()) return static_cast<std::size_t>(full_.rows());
    std::size_t d = 1;
    for (const auto& b : sites_) d *= static_cast<std::size_t>(b.rows());
    return d;
  }

  /// Amplitudes <b_x|v> of a fragment vector given as a list of per-site
  /// factors (product vectors are never materialized for product bases).
  CVector amplitudes_of_product(const std::vector<CVector>& site_vectors) const {
    if (sites_.empty()) {
      CVector v = site_vectors.front();
      for (std::size_t i = 1; i < site_vectors.size(); ++i) v = detail::kron(v, site_vectors[i]);
      if (v.size() != full_.rows()) throw Error("measurement dimension does not match fragment");
      return full_.adjoint() * v;
    }
    if (site_vectors.size() != sites_.size()) throw Error("measurement site count does not match fragment");
    CVector out = CVector::Ones(1);
    for (std::size_t i = 0; i < sites_.size(); ++i) {
      if (site_vectors[i].size() != sites_[i].rows()) throw Error("measurement dimension does not match fragment");
      out = detail::kron(out, CVector(sites_[i].adjoint() * site_vectors[i]));
    }
    return out;
  }

 private:
  ProjectiveMeasurement() = default;

  static void check_basis(const CMatrix& b) {
    if (b.rows() == 0 || b.rows() != b.cols()) {
      throw Error("incomplete measurement: basis must be square (rank-one projectors summing to identity)");
    }
    if (detail::unitarity_defect(b) > tol::kOrthonormal) throw Error("non-orthonormal measurement basis");
  }

  CMatrix full_;
  std::vector<CMatrix> sites_;
};

/// Joint outcome probabilities p(x, y) of two disjoint fragments measured
/// with product-form (fragment a) x (fragment b) projective measurements.
struct JointDistribution {
  RMatrix p;  // rows: outcomes of fragment a, cols: outcomes of fragment b

  double mutual_information() const {
    const RVector pa = p.rowwise().sum();
    const RVector pb = p.colwise().sum().transpose();
    double h_ab = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) h_ab += neg_xlog2x(p.data()[i]);
    double h_a = 0.0, h_b = 0.0;
    for (Eigen::Index i = 0; i < pa.size(); ++i) h_a += neg_xlog2x(pa[i]);
    for (Eigen::Index i = 0; i < pb.size(); ++i) h_b += neg_xlog2x(pb[i]);
    return h_a + h_b - h_ab;
  }
};

inline constexpr std::size_t kMaxJointOutcomes = std::size_t{1} << 16;

namespace detail {

inline void check_joint_request(std::size_t outcomes) {
  if (outcomes > kMaxJointOutcomes) {
    throw Error("measured distribution would enumerate " + std::to_string(outcomes) +
                " joint outcomes (cap " + std::to_string(kMaxJointOutcomes) + ")");
  }
}

inline RMatrix clip_distribution(RMatrix p) {
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p.data()[i] < -1e-12) throw Error("negative probability in measured distribution");
    if (p.data()[i] < 0.0) p.data()[i] = 0.0;
  }
  return p;
}

}  // namespace detail

/// Born-rule joint distribution on a dense pure universe.
inline JointDistribution measured_joint_distribution(const PureState& state, const FragmentSpec& frag_a,
                                                     const ProjectiveMeasurement& meas_a,
                                                     const FragmentSpec& frag_b,
                                                     const ProjectiveMeasurement& meas_b) {
  require_disjoint(frag_a, frag_b);
  frag_a.validate(state.num_sites());
  frag_b.validate(state.num_sites());
  if (frag_a.empty() || frag_b.empty()) throw Error("measured_joint_distribution: empty fragment");
  const auto da = detail::product(select_dims(state.dims(), frag_a));
  const auto db = detail::product(select_dims(state.dims(), frag_b));
  if (meas_a.dimension() != da || meas_b.dimension() != db) {
    throw Error("measurement dimension does not match fragment");
  }
  detail::check_joint_request(da * db);
  std::vector<std::size_t> rows(frag_a.begin(), frag_a.end());
  rows.insert(rows.end(), frag_b.begin(), frag_b.end());
  const CMatrix m = bipartition_matrix(state, rows);
  const CMatrix amps = detail::kron(meas_a.basis(), meas_b.basis()).adjoint() * m;
  RMatrix p(static_cast<Eigen::Index>(da), static_cast<Eigen::Index>(db));
  for (Eigen::Index x = 0; x < p.rows(); ++x)
    for (Eigen::Index y = 0; y < p.cols(); ++y) p(x, y) = amps.row(x * p.cols() + y).squaredNorm();
  return {detail::clip_distribution(std::move(p))};
}

}  // namespace darwinbounds
