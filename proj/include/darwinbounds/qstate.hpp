#pragma once

// Dense pure states and density matrices over a list of subsystems.
//
// Subsystem 0 is always the system S; subsystems 1..N are the environment
// constituents. Amplitudes are stored row-major with subsystem 0 as the most
// significant digit, so tensor_product is the ordinary Kronecker product.

#include "darwinbounds/core.hpp"

#include <compare>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace darwinbounds {

/// Ordered set of subsystem indices. Always stored strictly increasing.
class FragmentSpec {
 public:
  FragmentSpec() = default;
  FragmentSpec(std::initializer_list<std::size_t> indices)
      : FragmentSpec(std::vector<std::size_t>(indices)) {}
  explicit FragmentSpec(std::vector<std::size_t> indices) : indices_(std::move(indices)) {
    std::sort(indices_.begin(), indices_.end());
    if (std::adjacent_find(indices_.begin(), indices_.end()) != indices_.end()) {
      throw Error("fragment has duplicate index");
    }
  }

  /// Indices first, first+1, ..., last-1.
  static FragmentSpec range(std::size_t first, std::size_t last) {
    FragmentSpec f;
    for (std::size_t i = first; i < last; ++i) f.indices_.push_back(i);
    return f;
  }

  const std::vector<std::size_t>& indices() const { return indices_; }
  std::size_t size() const { return indices_.size(); }
  bool empty() const { return indices_.empty(); }
  std::size_t operator[](std::size_t i) const { return indices_[i]; }
  auto begin() const { return indices_.begin(); }
  auto end() const { return indices_.end(); }

  bool contains(std::size_t site) const {
    return std::binary_search(indices_.begin(), indices_.end(), site);
  }

  bool disjoint(const FragmentSpec& other) const {
    auto a = indices_.begin();
    auto b = other.indices_.begin();
    while (a != indices_.end() && b != other.indices_.end()) {
      if (*a == *b) return false;
      if (*a < *b) ++a; else ++b;
    }
    return true;
  }

  FragmentSpec united(const FragmentSpec& other) const {
    FragmentSpec out;
    std::set_union(indices_.begin(), indices_.end(), other.indices_.begin(), other.indices_.end(),
                   std::back_inserter(out.indices_));
    return out;
  }

  FragmentSpec with(std::size_t site) const { return united(FragmentSpec{site}); }

  /// Sites of [0, n_sites) not in this fragment.
  FragmentSpec complement(std::size_t n_sites) const {
    FragmentSpec out;
    auto it = indices_.begin();
    for (std::size_t i = 0; i < n_sites; ++i) {
      if (it != indices_.end() && *it == i) { ++it; continue; }
      out.indices_.push_back(i);
    }
    return out;
  }

  void validate(std::size_t n_sites) const {
    if (!indices_.empty() && indices_.back() >= n_sites) {
      throw Error("fragment index " + std::to_string(indices_.back()) + " out of range (" +
                  std::to_string(n_sites) + " subsystems)");
    }
  }

  std::string to_string() const {
    std::ostringstream os;
    os << '{';
    for (std::size_t i = 0; i < indices_.size(); ++i) os << (i ? "," : "") << indices_[i];
    os << '}';
    return os.str();
  }

  auto operator<=>(const FragmentSpec&) const = default;

 private:
  std::vector<std::size_t> indices_;
};

inline void require_disjoint(const FragmentSpec& a, const FragmentSpec& b) {
  if (!a.disjoint(b)) throw Error("fragments " + a.to_string() + " and " + b.to_string() + " overlap");
}

namespace detail {

inline std::size_t product(std::span<const std::size_t> dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

/// Position of every flat index when the sites in `row_sites` (in the given
/// order, first most significant) index rows and the remaining sites (in
/// increasing order) index columns.
struct Bipartition {
  std::vector<std::size_t> row_of;
  std::vector<std::size_t> col_of;
  std::size_t n_rows = 1;
  std::size_t n_cols = 1;
};

inline Bipartition bipartition(std::span<const std::size_t> dims, std::span<const std::size_t> row_sites) {
  const std::size_t n = dims.size();
  std::vector<std::size_t> row_stride(n, 0), col_stride(n, 0);
  std::vector<bool> in_rows(n, false);
  Bipartition bp;
  for (auto it = row_sites.rbegin(); it != row_sites.rend(); ++it) {
    if (*it >= n) throw Error("subsystem index out of range");
    if (in_rows[*it]) throw Error("subsystem listed twice");
    in_rows[*it] = true;
    row_stride[*it] = bp.n_rows;
    bp.n_rows *= dims[*it];
  }
  for (std::size_t s = n; s-- > 0;) {
    if (in_rows[s]) continue;
    col_stride[s] = bp.n_cols;
    bp.n_cols *= dims[s];
  }
  const std::size_t total = bp.n_rows * bp.n_cols;
  bp.row_of.resize(total);
  bp.col_of.resize(total);
  std::vector<std::size_t> digits(n, 0);
  std::size_t row = 0, col = 0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    bp.row_of[flat] = row;
    bp.col_of[flat] = col;
    for (std::size_t s = n; s-- > 0;) {
      ++digits[s];
      row += row_stride[s];
      col += col_stride[s];
      if (digits[s] < dims[s]) break;
      row -= row_stride[s] * dims[s];
      col -= col_stride[s] * dims[s];
      digits[s] = 0;
    }
  }
  return bp;
}

inline CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline CVector kron(const CVector& a, const CVector& b) {
  CVector out(a.size() * b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a[i] * b;
  return out;
}

inline double unitarity_defect(const CMatrix& u) {
  return (u.adjoint() * u - CMatrix::Identity(u.cols(), u.cols())).cwiseAbs().maxCoeff();
}

}  // namespace detail

class PureState {
 public:
  /// Validating constructor: length must match dims and the norm must be 1.
  PureState(std::vector<std::size_t> dims, CVector amplitudes)
      : dims_(std::move(dims)), amplitudes_(std::move(amplitudes)) {
    check_dims();
    const double n2 = amplitudes_.squaredNorm();
    if (std::abs(n2 - 1.0) > tol::kNorm) {
      throw Error("pure state not normalized (squared norm " + std::to_string(n2) + ")");
    }
  }

  /// Rescales a nonzero vector to unit norm.
  static PureState normalized(std::vector<std::size_t> dims, CVector amplitudes) {
    const double n = amplitudes.norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw Error("cannot normalize zero or non-finite amplitude vector");
    amplitudes /= n;
    return PureState(std::move(dims), std::move(amplitudes));
  }

  /// Computational basis state |index> of a single subsystem of dimension dim.
  static PureState basis(std::size_t dim, std::size_t index) {
    if (index >= dim) throw Error("basis index out of range");
    CVector v = CVector::Zero(static_cast<Eigen::Index>(dim));
    v[static_cast<Eigen::Index>(index)] = 1.0;
    return PureState({dim}, std::move(v));
  }

  const std::vector<std::size_t>& dims() const { return dims_; }
  const CVector& amplitudes() const { return amplitudes_; }
  std::size_t num_sites() const { return dims_.size(); }
  std::size_t num_env() const { return dims_.size() - 1; }
  std::size_t dimension() const { return static_cast<std::size_t>(amplitudes_.size()); }

 private:
  void check_dims() const {
    if (dims_.empty()) throw Error("pure state needs at least one subsystem");
    for (auto d : dims_)
      if (d == 0) throw Error("subsystem dimension must be positive");
    if (detail::product(dims_) != static_cast<std::size_t>(amplitudes_.size())) {
      throw Error("amplitude count does not match product of dims");
    }
  }

  std::vector<std::size_t> dims_;
  CVector amplitudes_;
};

class DensityMatrix {
 public:
  /// Validating constructor (Hermitian, unit trace, PSD within tolerances).
  DensityMatrix(std::vector<std::size_t> dims, CMatrix matrix)
      : dims_(std::move(dims)), matrix_(std::move(matrix)) {
    for (auto d : dims_)
      if (d == 0) throw Error("subsystem dimension must be positive");
    const auto side = static_cast<Eigen::Index>(detail::product(dims_));
    if (matrix_.rows() != side || matrix_.cols() != side) {
      throw Error("density matrix side does not match product of dims");
    }
    const double herm = (matrix_ - matrix_.adjoint()).cwiseAbs().maxCoeff();
    if (herm > tol::kHermitian) throw Error("density matrix not Hermitian (defect " + std::to_string(herm) + ")");
    const double tr = matrix_.trace().real();
    if (std::abs(tr - 1.0) > tol::kTrace) throw Error("density matrix trace " + std::to_string(tr) + " != 1");
    matrix_ = 0.5 * (matrix_ + matrix_.adjoint()).eval();
    Eigen::SelfAdjointEigenSolver<CMatrix> es(matrix_, Eigen::EigenvaluesOnly);
    spectrum_ = es.eigenvalues();
    if (spectrum_.size() > 0 && spectrum_[0] < -tol::kPsd) {
      throw Error("density matrix not positive semidefinite (min eigenvalue " + std::to_string(spectrum_[0]) + ")");
    }
  }

  static DensityMatrix from_pure(const PureState& s) {
    return DensityMatrix(s.dims(), s.amplitudes() * s.amplitudes().adjoint());
  }

  const std::vector<std::size_t>& dims() const { return dims_; }
  const CMatrix& matrix() const { return matrix_; }
  std::size_t num_sites() const { return dims_.size(); }
  std::size_t dimension() const { return static_cast<std::size_t>(matrix_.rows()); }
  /// Ascending eigenvalues.
  const RVector& spectrum() const { return spectrum_; }

 private:
  std::vector<std::size_t> dims_;
  CMatrix matrix_;
  RVector spectrum_;
};

/// Amplitudes reshaped into a matrix: rows indexed by `row_sites` (given order),
/// columns by the remaining subsystems.
inline CMatrix bipartition_matrix(const PureState& s, std::span<const std::size_t> row_sites) {
  const auto bp = detail::bipartition(s.dims(), row_sites);
  CMatrix m(static_cast<Eigen::Index>(bp.n_rows), static_cast<Eigen::Index>(bp.n_cols));
  const auto& amp = s.amplitudes();
  for (std::size_t i = 0; i < bp.row_of.size(); ++i) {
    m(static_cast<Eigen::Index>(bp.row_of[i]), static_cast<Eigen::Index>(bp.col_of[i])) =
        amp[static_cast<Eigen::Index>(i)];
  }
  return m;
}

inline PureState tensor_product(std::span<const PureState> factors) {
  if (factors.empty()) throw Error("no factors");
  std::vector<std::size_t> dims;
  CVector amp = CVector::Ones(1);
  for (const auto& f : factors) {
    dims.insert(dims.end(), f.dims().begin(), f.dims().end());
    amp = detail::kron(amp, f.amplitudes());
  }
  return PureState::normalized(std::move(dims), std::move(amp));
}

inline PureState tensor_product(std::initializer_list<PureState> factors) {
  return tensor_product(std::span<const PureState>(factors.begin(), factors.size()));
}

/// Applies `u` to the subsystems in `targets` (their increasing order fixes
/// the ordering of u's tensor factors) and the identity elsewhere.
inline PureState apply_unitary(const PureState& state, const CMatrix& u, const FragmentSpec& targets) {
  if (targets.empty()) throw Error("apply_unitary: no target subsystems");
  targets.validate(state.num_sites());
  std::size_t d = 1;
  for (auto t : targets) d *= state.dims()[t];
  if (static_cast<std::size_t>(u.rows()) != d || static_cast<std::size_t>(u.cols()) != d) {
    throw Error("apply_unitary: dimension mismatch between gate and targets");
  }
  if (detail::unitarity_defect(u) > tol::kUnitary) throw Error("apply_unitary: matrix is not unitary");
  const auto bp = detail::bipartition(state.dims(), targets.indices());
  CMatrix m(static_cast<Eigen::Index>(bp.n_rows), static_cast<Eigen::Index>(bp.n_cols));
  const auto& amp = state.amplitudes();
  for (std::size_t i = 0; i < bp.row_of.size(); ++i)
    m(bp.row_of[i], bp.col_of[i]) = amp[static_cast<Eigen::Index>(i)];
  const CMatrix out = u * m;
  CVector result(amp.size());
  for (std::size_t i = 0; i < bp.row_of.size(); ++i)
    result[static_cast<Eigen::Index>(i)] = out(bp.row_of[i], bp.col_of[i]);
  return PureState::normalized(state.dims(), std::move(result));
}

inline std::vector<std::size_t> select_dims(const std::vector<std::size_t>& dims, const FragmentSpec& f) {
  std::vector<std::size_t> out;
  out.reserve(f.size());
  for (auto i : f) out.push_back(dims[i]);
  return out;
}

inline DensityMatrix partial_trace(const PureState& state, const FragmentSpec& keep) {
  if (keep.empty()) throw Error("partial_trace: empty keep set");
  keep.validate(state.num_sites());
  const CMatrix m = bipartition_matrix(state, keep.indices());
  return DensityMatrix(select_dims(state.dims(), keep), m * m.adjoint());
}

inline DensityMatrix partial_trace(const DensityMatrix& dm, const FragmentSpec& keep) {
  if (keep.empty()) throw Error("partial_trace: empty keep set");
  keep.validate(dm.num_sites());
  const auto bp = detail::bipartition(dm.dims(), keep.indices());
  std::vector<std::size_t> flat_of(bp.row_of.size());
  for (std::size_t i = 0; i < bp.row_of.size(); ++i) flat_of[bp.row_of[i] * bp.n_cols + bp.col_of[i]] = i;
  const auto nr = static_cast<Eigen::Index>(bp.n_rows);
  CMatrix out = CMatrix::Zero(nr, nr);
  const CMatrix& rho = dm.matrix();
  for (std::size_t r1 = 0; r1 < bp.n_rows; ++r1)
    for (std::size_t r2 = 0; r2 < bp.n_rows; ++r2) {
      Complex acc{0.0, 0.0};
      for (std::size_t c = 0; c < bp.n_cols; ++c)
        acc += rho(flat_of[r1 * bp.n_cols + c], flat_of[r2 * bp.n_cols + c]);
      out(r1, r2) = acc;
    }
  return DensityMatrix(select_dims(dm.dims(), keep), std::move(out));
}

inline double von_neumann_entropy(const DensityMatrix& dm) { return entropy_from_spectrum(dm.spectrum()); }

/// Nonzero spectrum of the marginal on `frag`, from whichever side of the
/// bipartition is smaller.
inline RVector fragment_spectrum(const PureState& state, const FragmentSpec& frag) {
  frag.validate(state.num_sites());
  if (frag.empty() || frag.size() == state.num_sites()) return RVector::Ones(1);
  const CMatrix m = bipartition_matrix(state, frag.indices());
  const CMatrix gram = m.rows() <= m.cols() ? CMatrix(m * m.adjoint()) : CMatrix(m.adjoint() * m);
  Eigen::SelfAdjointEigenSolver<CMatrix> es(gram, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

/// Entropy of the marginal of a pure universe on `frag` (0 for empty or full).
inline double entropy(const PureState& state, const FragmentSpec& frag) {
  return entropy_from_spectrum(fragment_spectrum(state, frag));
}

inline double mutual_information(const PureState& state, const FragmentSpec& a, const FragmentSpec& b) {
  require_disjoint(a, b);
  return entropy(state, a) + entropy(state, b) - entropy(state, a.united(b));
}

inline double mutual_information(const DensityMatrix& dm, const FragmentSpec& a, const FragmentSpec& b) {
  require_disjoint(a, b);
  if (a.empty() || b.empty()) return 0.0;
  return von_neumann_entropy(partial_trace(dm, a)) + von_neumann_entropy(partial_trace(dm, b)) -
         von_neumann_entropy(partial_trace(dm, a.united(b)));
}

/// Orthonormal basis (columns) of the support of the marginal on `frag`, or
/// nullopt when its rank exceeds max_rank (the (max_rank+1)-th eigenvalue is
/// at least tol::kRank).
inline std::optional<CMatrix> marginal_support(const PureState& state, const FragmentSpec& frag,
                                               Eigen::Index max_rank) {
  const CMatrix m = bipartition_matrix(state, frag.indices());
  Eigen::BDCSVD<CMatrix> svd(m, Eigen::ComputeThinU);
  const RVector& sv = svd.singularValues();
  if (sv.size() > max_rank && sv[max_rank] * sv[max_rank] >= tol::kRank) return std::nullopt;
  return CMatrix(svd.matrixU().leftCols(std::min<Eigen::Index>(max_rank, svd.matrixU().cols())));
}

/// Factor W (4 x m, rho = W W^dag) of the two-qubit-equivalent state of the
/// subsystem groups a and b, each compressed onto its (at most two
/// dimensional) support. nullopt when either support is larger.
inline std::optional<CMatrix> pair_factor(const PureState& state, const FragmentSpec& a, const FragmentSpec& b) {
  if (a.empty() || b.empty()) throw Error("pair_factor: empty group");
  require_disjoint(a, b);
  a.validate(state.num_sites());
  b.validate(state.num_sites());
  const auto va = marginal_support(state, a, 2);
  if (!va) return std::nullopt;
  const auto vb = marginal_support(state, b, 2);
  if (!vb) return std::nullopt;
  std::vector<std::size_t> rows(a.begin(), a.end());
  rows.insert(rows.end(), b.begin(), b.end());
  const CMatrix m = bipartition_matrix(state, rows);
  const CMatrix t = detail::kron(*va, *vb).adjoint() * m;
  const Eigen::Index ra = va->cols(), rb = vb->cols();
  CMatrix w = CMatrix::Zero(4, m.cols());
  for (Eigen::Index ia = 0; ia < ra; ++ia)
    for (Eigen::Index ib = 0; ib < rb; ++ib) w.row(ia * 2 + ib) = t.row(ia * rb + ib);
  return w;
}

/// rho = w w^dag on the sites listed in `sites` (that order, first most
/// significant). Cheaper than a DensityMatrix when the rank is small.
struct StateFactor {
  std::vector<std::size_t> sites;
  std::vector<std::size_t> dims;
  CMatrix w;
};

namespace detail {

/// Same rho with at most rows() columns.
inline CMatrix compress_factor(const CMatrix& w) {
  if (w.cols() <= w.rows()) return w;
  Eigen::HouseholderQR<CMatrix> qr(w.adjoint());
  const CMatrix r = qr.matrixQR().topRows(w.rows()).triangularView<Eigen::Upper>();
  return r.adjoint();
}

}  // namespace detail

inline StateFactor state_factor(const PureState& state, std::vector<std::size_t> sites) {
  if (sites.empty()) throw Error("state_factor: no sites");
  const CMatrix m = bipartition_matrix(state, sites);
  std::vector<std::size_t> dims;
  for (auto s : sites) dims.push_back(state.dims()[s]);
  return {std::move(sites), std::move(dims), detail::compress_factor(m)};
}

inline DensityMatrix reduced_state(const PureState& state, const FragmentSpec& frag) {
  return partial_trace(state, frag);
}

inline bool env_symmetric(const PureState&) { return false; }

}  // namespace darwinbounds
