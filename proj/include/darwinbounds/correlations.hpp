#pragma once

// Classical correlations J, discord D, entanglement of formation, the
// information deficit and conditional mutual information.
//
// J(A:M) for a state rho_AM is computed in one of two ways:
//   * exactly, when rho_AM and rho_A both have rank <= 2: purify rho_AM
//     with a qubit P, then J = H(A) - E_f(A:P) with E_f from the two-qubit
//     concurrence (Koashi-Winter);
//   * otherwise by multi-start Nelder-Mead over rank-one projective bases of
//     M, which yields a lower bound.
// For pure universes the exact route is taken one level up:
// J(S:F) = H(S) - E_f(S:G) with G the environment outside F.

#include "darwinbounds/measurement.hpp"
#include "darwinbounds/optimizer.hpp"
#include "darwinbounds/qstate.hpp"
#include "darwinbounds/random.hpp"

#include <concepts>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

namespace darwinbounds {

enum class CorrelationMethod { automatic, optimizer, grid_oracle, rank_two_exact };
enum class MeasurementClass { automatic, full_space, product };
enum class MethodTag { rank_two_exact, optimizer, grid_oracle };

inline const char* method_name(MethodTag m) {
  switch (m) {
    case MethodTag::rank_two_exact: return "rank-two-exact";
    case MethodTag::optimizer: return "optimizer";
    case MethodTag::grid_oracle: return "grid-oracle";
  }
  return "?";
}

struct CorrelationConfig {
  int restarts = 32;
  std::uint64_t seed = 0;
  CorrelationMethod method = CorrelationMethod::automatic;
  MeasurementClass measurement = MeasurementClass::automatic;
  std::size_t full_space_max_dim = 8;  // automatic class: full-space bases up to this fragment dimension
  int grid_resolution = 64;
  bool want_argmax = false;  // also run the optimizer on exact paths to obtain a basis
  std::vector<ProjectiveMeasurement> warm_starts;
};

/// J with provenance.
struct JValue {
  double value = 0.0;
  MethodTag method = MethodTag::rank_two_exact;
  int restarts_used = 0;
  double convergence_slack = 0.0;
  bool fallback = false;  // exact path was requested but the rank condition failed
  std::optional<ProjectiveMeasurement> argmax;
  bool exact() const { return method == MethodTag::rank_two_exact; }
};

struct CorrelationReport {
  double mutual_info = 0.0;
  double classical_J = 0.0;
  double discord_D = 0.0;
  MethodTag method = MethodTag::rank_two_exact;
  std::optional<ProjectiveMeasurement> argmax_basis;
  int restarts_used = 0;
  double convergence_slack = 0.0;
  bool fallback = false;
};

struct EofValue {
  double value = 0.0;
  bool exact = true;
};

// ---------------------------------------------------------------------------
// Two-qubit entanglement

namespace detail {

inline const RMatrix& spin_flip() {
  static const RMatrix y = [] {
    RMatrix m = RMatrix::Zero(4, 4);
    m(0, 3) = -1.0;
    m(1, 2) = 1.0;
    m(2, 1) = 1.0;
    m(3, 0) = -1.0;
    return m;
  }();
  return y;
}

inline CMatrix factor_of(const CMatrix& rho) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(rho);
  const RVector& lam = es.eigenvalues();
  CMatrix w(rho.rows(), lam.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i) w.col(i) = es.eigenvectors().col(i) * std::sqrt(std::max(lam[i], 0.0));
  return w;
}

inline void require_two_qubit(const DensityMatrix& dm) {
  if (dm.dims() != std::vector<std::size_t>{2, 2}) throw Error("expected a two-qubit density matrix");
}

}  // namespace detail

/// Wootters concurrence of rho = w w^dag (w has 4 rows). The lambdas are the
/// singular values of w^T (Y x Y) w, which avoids square roots of tiny
/// eigenvalues.
inline double concurrence_from_factor(const CMatrix& w) {
  if (w.rows() != 4) throw Error("concurrence: factor must have 4 rows");
  const CMatrix we = detail::compress_factor(w);
  const CMatrix tau = we.transpose() * detail::spin_flip().cast<Complex>() * we;
  Eigen::JacobiSVD<CMatrix> svd(tau);
  const RVector& s = svd.singularValues();
  double c = s[0];
  for (Eigen::Index i = 1; i < s.size(); ++i) c -= s[i];
  return std::clamp(c, 0.0, 1.0);
}

inline double concurrence(const DensityMatrix& dm) {
  detail::require_two_qubit(dm);
  return concurrence_from_factor(detail::factor_of(dm.matrix()));
}

/// E_f = h_bin((1 + sqrt(1 - C^2)) / 2).
inline double eof_from_concurrence(double c) {
  c = std::clamp(c, 0.0, 1.0);
  const double eps = 0.5 * c * c / (1.0 + std::sqrt(1.0 - c * c));
  return h_bin(eps);
}

inline double eof_two_qubit(const DensityMatrix& dm) { return eof_from_concurrence(concurrence(dm)); }

// ---------------------------------------------------------------------------
// Measurement objective on a factored state

/// J(A:M) as a function of a basis of M, for rho_AM = w w^dag with rows
/// ordered (A major, M minor).
class MeasurementObjective {
 public:
  MeasurementObjective(const CMatrix& w, Eigen::Index d_a, Eigen::Index d_m) : d_a_(d_a), d_m_(d_m) {
    if (w.rows() != d_a * d_m) throw Error("factor rows do not match d_A * d_M");
    const Eigen::Index r = w.cols();
    z_.resize(r * d_a, d_m);
    for (Eigen::Index j = 0; j < r; ++j)
      for (Eigen::Index a = 0; a < d_a; ++a)
        for (Eigen::Index m = 0; m < d_m; ++m) z_(j * d_a + a, m) = w(a * d_m + m, j);
    CMatrix rho_a = CMatrix::Zero(d_a, d_a);
    for (Eigen::Index j = 0; j < r; ++j) {
      const CMatrix x = z_.middleRows(j * d_a, d_a);
      rho_a += x * x.adjoint();
    }
    Eigen::SelfAdjointEigenSolver<CMatrix> es(rho_a, Eigen::EigenvaluesOnly);
    h_a_ = entropy_from_spectrum(es.eigenvalues());
  }

  Eigen::Index d_a() const { return d_a_; }
  Eigen::Index d_m() const { return d_m_; }
  double h_a() const { return h_a_; }

  /// H(A) - sum_x p_x H(A | x) for the basis whose columns are the outcomes.
  double value(const CMatrix& basis) const {
    const CMatrix zb = z_ * basis.conjugate();
    const Eigen::Index r = z_.rows() / d_a_;
    double cond = 0.0;
    for (Eigen::Index x = 0; x < d_m_; ++x) {
      if (d_a_ == 2) {
        double g00 = 0.0, g11 = 0.0;
        Complex g01{0.0, 0.0};
        for (Eigen::Index j = 0; j < r; ++j) {
          const Complex v0 = zb(2 * j, x), v1 = zb(2 * j + 1, x);
          g00 += std::norm(v0);
          g11 += std::norm(v1);
          g01 += v0 * std::conj(v1);
        }
        const double p = g00 + g11;
        if (p <= 0.0) continue;
        const auto ev = hermitian2_eigenvalues(g00, g11, g01);
        cond += neg_xlog2x(std::max(ev[0], 0.0)) + neg_xlog2x(ev[1]) - neg_xlog2x(p);
      } else {
        CMatrix v(d_a_, r);
        for (Eigen::Index j = 0; j < r; ++j) v.col(j) = zb.block(j * d_a_, x, d_a_, 1);
        const CMatrix g = d_a_ <= r ? CMatrix(v * v.adjoint()) : CMatrix(v.adjoint() * v);
        const double p = g.trace().real();
        if (p <= 0.0) continue;
        Eigen::SelfAdjointEigenSolver<CMatrix> es(g, Eigen::EigenvaluesOnly);
        double hx = 0.0;
        for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) hx += neg_xlog2x(std::max(es.eigenvalues()[i], 0.0));
        cond += hx - neg_xlog2x(p);
      }
    }
    return h_a_ - cond;
  }

 private:
  Eigen::Index d_a_, d_m_;
  CMatrix z_;  // row j * d_a + a, column m: w(a * d_m + m, j)
  double h_a_ = 0.0;
};

namespace detail {

struct BasisSearch {
  double value = 0.0;
  CMatrix basis;
  std::vector<CMatrix> blocks;
  int restarts = 0;
  double slack = 0.0;
};

/// Multi-start maximization of obj over projective bases; `block_dims` has
/// one entry for a full-space search or one entry per site for product
/// bases. Restart 0 starts at the computational basis, then the warm
/// starts, then Haar-random reference bases.
inline constexpr std::size_t kPolishedRuns = 3;

inline BasisSearch maximize_basis(const MeasurementObjective& obj, const std::vector<Eigen::Index>& block_dims,
                                  const CorrelationConfig& cfg) {
  std::size_t n_params = 0;
  for (auto d : block_dims) n_params += static_cast<std::size_t>(d * d);

  auto assemble = [&](const std::vector<CMatrix>& refs, const double* theta, std::vector<CMatrix>* blocks_out) {
    std::size_t off = 0;
    CMatrix out;
    for (std::size_t b = 0; b < refs.size(); ++b) {
      CMatrix u = unitary_from_params(refs[b], theta + off);
      off += static_cast<std::size_t>(block_dims[b] * block_dims[b]);
      out = b == 0 ? u : kron(out, u);
      if (blocks_out) blocks_out->push_back(std::move(u));
    }
    return out;
  };

  std::vector<std::vector<CMatrix>> starts;
  {
    std::vector<CMatrix> ident;
    for (auto d : block_dims) ident.push_back(CMatrix::Identity(d, d));
    starts.push_back(std::move(ident));
  }
  for (const auto& warm : cfg.warm_starts) {
    if (block_dims.size() == 1) {
      if (static_cast<Eigen::Index>(warm.dimension()) == block_dims[0]) starts.push_back({warm.basis()});
    } else if (warm.is_product() && warm.site_bases().size() == block_dims.size()) {
      bool ok = true;
      for (std::size_t b = 0; b < block_dims.size(); ++b) ok = ok && warm.site_bases()[b].rows() == block_dims[b];
      if (ok) starts.push_back(warm.site_bases());
    }
  }
  const std::size_t total = std::max<std::size_t>(static_cast<std::size_t>(std::max(cfg.restarts, 1)), starts.size());
  for (std::size_t r = starts.size(); r < total; ++r) {
    Rng rng = Rng::substream(cfg.seed, r);
    std::vector<CMatrix> refs;
    for (auto d : block_dims) refs.push_back(rng.unitary(d));
    starts.push_back(std::move(refs));
  }

  std::vector<double> values;
  std::vector<NelderMeadResult> runs;
  for (std::size_t r = 0; r < starts.size(); ++r) {
    const auto& refs = starts[r];
    auto f = [&](const std::vector<double>& th) { return -obj.value(assemble(refs, th.data(), nullptr)); };
    runs.push_back(nelder_mead(f, std::vector<double>(n_params, 0.0), NelderMeadOptions{}));
    values.push_back(-runs.back().value);
  }
  // Quasi-Newton polish of the leading runs; Nelder-Mead alone stalls in
  // the larger full-space parameterizations.
  std::vector<std::size_t> rank(starts.size());
  for (std::size_t r = 0; r < rank.size(); ++r) rank[r] = r;
  std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  std::size_t best_index = rank.front();
  NelderMeadResult fine = runs[best_index];
  for (std::size_t i = 0; i < std::min<std::size_t>(kPolishedRuns, rank.size()); ++i) {
    const auto& refs = starts[rank[i]];
    auto f = [&](const std::vector<double>& th) { return -obj.value(assemble(refs, th.data(), nullptr)); };
    NelderMeadResult polished = bfgs(f, runs[rank[i]].x);
    if (polished.value > runs[rank[i]].value) polished = runs[rank[i]];
    values[rank[i]] = -polished.value;
    if (polished.value < fine.value) {
      fine = std::move(polished);
      best_index = rank[i];
    }
  }
  const auto& refs = starts[best_index];

  BasisSearch out;
  out.basis = assemble(refs, fine.x.data(), &out.blocks);
  out.value = -fine.value;
  out.restarts = static_cast<int>(starts.size());
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  out.slack = sorted.front() - sorted[std::min<std::size_t>(4, sorted.size() - 1)];
  return out;
}

inline double ranked_eigenvalue(const RVector& ascending, Eigen::Index from_top) {
  return from_top < ascending.size() ? ascending[ascending.size() - 1 - from_top] : 0.0;
}

/// Exact J(A:M) for rho_AM = w w^dag when rho_AM and rho_A have rank <= 2.
inline std::optional<double> rank_two_j(const CMatrix& w, Eigen::Index d_a, Eigen::Index d_m) {
  const CMatrix wc = compress_factor(w);
  Eigen::SelfAdjointEigenSolver<CMatrix> gram(wc.adjoint() * wc);
  if (ranked_eigenvalue(gram.eigenvalues(), 2) >= tol::kRank) return std::nullopt;
  // Purification psi = sum_p |col_p>|p>_P over the top two columns.
  const Eigen::Index r = wc.cols();
  CMatrix psi = CMatrix::Zero(wc.rows(), 2);
  for (Eigen::Index p = 0; p < std::min<Eigen::Index>(2, r); ++p) psi.col(p) = wc * gram.eigenvectors().col(r - 1 - p);

  CMatrix rho_a = CMatrix::Zero(d_a, d_a);
  for (Eigen::Index p = 0; p < 2; ++p)
    for (Eigen::Index m = 0; m < d_m; ++m) {
      CVector x(d_a);
      for (Eigen::Index a = 0; a < d_a; ++a) x[a] = psi(a * d_m + m, p);
      rho_a += x * x.adjoint();
    }
  Eigen::SelfAdjointEigenSolver<CMatrix> ea(rho_a);
  if (ranked_eigenvalue(ea.eigenvalues(), 2) >= tol::kRank) return std::nullopt;
  const double h_a = entropy_from_spectrum(ea.eigenvalues());
  const Eigen::Index keep = std::min<Eigen::Index>(2, d_a);
  CMatrix support(d_a, keep);
  for (Eigen::Index i = 0; i < keep; ++i) support.col(i) = ea.eigenvectors().col(d_a - 1 - i);

  // Factor of rho_{A'P} (A compressed to its support), columns indexed by m.
  CMatrix wap = CMatrix::Zero(4, d_m);
  for (Eigen::Index m = 0; m < d_m; ++m)
    for (Eigen::Index ap = 0; ap < keep; ++ap)
      for (Eigen::Index p = 0; p < 2; ++p) {
        Complex acc{0.0, 0.0};
        for (Eigen::Index a = 0; a < d_a; ++a) acc += std::conj(support(a, ap)) * psi(a * d_m + m, p);
        wap(ap * 2 + p, m) = acc;
      }
  return std::max(0.0, h_a - eof_from_concurrence(concurrence_from_factor(wap)));
}

inline CMatrix bloch_basis(double theta, double phi) {
  const double c = std::cos(0.5 * theta), s = std::sin(0.5 * theta);
  const Complex e = std::polar(1.0, phi);
  CMatrix b(2, 2);
  b(0, 0) = c;
  b(1, 0) = e * s;
  b(0, 1) = -std::conj(e) * s;
  b(1, 1) = c;
  return b;
}

/// Bloch-sphere grid over a single measured qubit, then 5x5 pattern moves
/// around the incumbent, halving the step whenever no neighbour improves.
inline std::pair<double, CMatrix> grid_search(const MeasurementObjective& obj, int resolution) {
  if (obj.d_m() != 2) throw Error("grid oracle needs a single measured qubit");
  if (resolution < 2) throw Error("grid resolution must be at least 2");
  const double pi = std::numbers::pi;
  double best = -1.0, bt = 0.0, bp = 0.0;
  for (int i = 0; i < resolution; ++i)
    for (int j = 0; j < resolution; ++j) {
      const double t = pi * i / (resolution - 1), p = 2.0 * pi * j / resolution;
      const double v = obj.value(bloch_basis(t, p));
      if (v > best) best = v, bt = t, bp = p;
    }
  double st = pi / (resolution - 1), sp = 2.0 * pi / resolution;
  for (int round = 0; round < 400 && st > 1e-12; ++round) {
    const double ct = bt, cp = bp;
    for (int i = -2; i <= 2; ++i)
      for (int j = -2; j <= 2; ++j) {
        const double t = ct + 0.5 * i * st, p = cp + 0.5 * j * sp;
        const double v = obj.value(bloch_basis(t, p));
        if (v > best) best = v, bt = t, bp = p;
      }
    // Shrink only once the incumbent stops moving.
    if (bt == ct && bp == cp) {
      st *= 0.5;
      sp *= 0.5;
    }
  }
  return {best, bloch_basis(bt, bp)};
}

inline std::vector<std::size_t> concat(const FragmentSpec& a, const FragmentSpec& b) {
  std::vector<std::size_t> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace detail

/// J(A:M) where A is the first n_a sites of the factor and M the rest.
inline JValue classical_from_factor(const StateFactor& f, std::size_t n_a, const CorrelationConfig& cfg) {
  if (n_a == 0 || n_a >= f.sites.size()) throw Error("classical correlations need both a measured and an unmeasured part");
  const auto d_a = static_cast<Eigen::Index>(detail::product(std::span(f.dims).first(n_a)));
  const auto d_m = static_cast<Eigen::Index>(detail::product(std::span(f.dims).subspan(n_a)));
  JValue out;
  std::optional<double> exact;
  if (cfg.method == CorrelationMethod::automatic || cfg.method == CorrelationMethod::rank_two_exact) {
    exact = detail::rank_two_j(f.w, d_a, d_m);
    out.fallback = !exact && cfg.method == CorrelationMethod::rank_two_exact;
    if (exact && !cfg.want_argmax) {
      out.value = *exact;
      return out;
    }
  }
  const MeasurementObjective obj(detail::compress_factor(f.w), d_a, d_m);
  if (cfg.method == CorrelationMethod::grid_oracle) {
    auto [v, basis] = detail::grid_search(obj, cfg.grid_resolution);
    out.value = std::max(0.0, v);
    out.method = MethodTag::grid_oracle;
    out.argmax = ProjectiveMeasurement::full(std::move(basis));
    return out;
  }
  bool product = cfg.measurement == MeasurementClass::product;
  if (cfg.measurement == MeasurementClass::automatic) product = static_cast<std::size_t>(d_m) > cfg.full_space_max_dim;
  std::vector<Eigen::Index> blocks;
  if (product) {
    for (std::size_t i = n_a; i < f.dims.size(); ++i) blocks.push_back(static_cast<Eigen::Index>(f.dims[i]));
  } else {
    blocks.push_back(d_m);
  }
  auto search = detail::maximize_basis(obj, blocks, cfg);
  out.argmax = product ? ProjectiveMeasurement::product(std::move(search.blocks))
                       : ProjectiveMeasurement::full(std::move(search.basis));
  out.restarts_used = search.restarts;
  if (exact) {
    out.value = *exact;
    return out;
  }
  out.method = MethodTag::optimizer;
  out.value = std::max(0.0, search.value);
  out.convergence_slack = search.slack;
  return out;
}

// ---------------------------------------------------------------------------
// Density-matrix level operations

/// sum_x (1 x P_x) rho (1 x P_x) with the projectors acting on `measured_side`.
inline DensityMatrix post_measurement_state(const DensityMatrix& dm, const ProjectiveMeasurement& meas,
                                            const FragmentSpec& measured_side) {
  if (measured_side.empty()) throw Error("post_measurement_state: empty measured side");
  measured_side.validate(dm.num_sites());
  const FragmentSpec rest = measured_side.complement(dm.num_sites());
  const auto d_m = static_cast<Eigen::Index>(detail::product(select_dims(dm.dims(), measured_side)));
  if (static_cast<Eigen::Index>(meas.dimension()) != d_m) throw Error("incomplete measurement: basis does not span the measured side");
  const CMatrix basis = meas.basis();
  // Reorder to (rest, measured), dephase, and map back.
  const auto order = detail::concat(rest, measured_side);
  const auto bp = detail::bipartition(dm.dims(), order);
  const Eigen::Index n = static_cast<Eigen::Index>(bp.row_of.size());
  std::vector<Eigen::Index> pos(bp.row_of.size());
  for (std::size_t i = 0; i < bp.row_of.size(); ++i) pos[i] = static_cast<Eigen::Index>(bp.row_of[i]);
  CMatrix perm(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) perm(pos[i], pos[j]) = dm.matrix()(i, j);
  const Eigen::Index d_r = n / d_m;
  CMatrix out = CMatrix::Zero(n, n);
  for (Eigen::Index x = 0; x < d_m; ++x) {
    const CMatrix proj = detail::kron(CMatrix::Identity(d_r, d_r), CMatrix(basis.col(x) * basis.col(x).adjoint()));
    out += proj * perm * proj;
  }
  CMatrix back(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) back(i, j) = out(pos[i], pos[j]);
  return DensityMatrix(dm.dims(), std::move(back));
}

namespace detail {

inline StateFactor factor_for_measurement(const DensityMatrix& dm, const FragmentSpec& measured) {
  if (measured.empty()) throw Error("classical correlations: empty measured fragment");
  measured.validate(dm.num_sites());
  const FragmentSpec rest = measured.complement(dm.num_sites());
  if (rest.empty()) throw Error("classical correlations: measured fragment covers the whole state, nothing left to correlate");
  const auto order = concat(rest, measured);
  const auto bp = bipartition(dm.dims(), order);
  const CMatrix w = factor_of(dm.matrix());
  CMatrix wp(w.rows(), w.cols());
  for (std::size_t i = 0; i < bp.row_of.size(); ++i) wp.row(static_cast<Eigen::Index>(bp.row_of[i])) = w.row(static_cast<Eigen::Index>(i));
  std::vector<std::size_t> dims;
  for (auto s : order) dims.push_back(dm.dims()[s]);
  return {order, std::move(dims), std::move(wp)};
}

inline CorrelationReport make_report(double mi, const JValue& j) {
  CorrelationReport r;
  r.mutual_info = mi;
  // True J never exceeds I; trim round-off of the exact path only.
  r.classical_J = (j.value > mi && j.value - mi < 1e-9) ? mi : j.value;
  r.discord_D = r.mutual_info - r.classical_J;
  r.method = j.method;
  r.argmax_basis = j.argmax;
  r.restarts_used = j.restarts_used;
  r.convergence_slack = j.convergence_slack;
  r.fallback = j.fallback;
  return r;
}

}  // namespace detail

/// J(A:M) where M = `measured` and A is every other subsystem of dm.
inline CorrelationReport classical_correlations(const DensityMatrix& dm, const FragmentSpec& measured,
                                                const CorrelationConfig& cfg = {}) {
  const auto f = detail::factor_for_measurement(dm, measured);
  const FragmentSpec rest = measured.complement(dm.num_sites());
  const JValue j = classical_from_factor(f, rest.size(), cfg);
  return detail::make_report(mutual_information(dm, rest, measured), j);
}

inline double classical_correlations_grid_oracle(const DensityMatrix& dm, const FragmentSpec& measured,
                                                 int grid_resolution = 64) {
  if (measured.size() != 1 || dm.dims()[measured[0]] != 2) throw Error("grid oracle needs a single measured qubit");
  CorrelationConfig cfg;
  cfg.method = CorrelationMethod::grid_oracle;
  cfg.grid_resolution = grid_resolution;
  return classical_correlations(dm, measured, cfg).classical_J;
}

inline CorrelationReport discord(const DensityMatrix& dm, const FragmentSpec& measured, const CorrelationConfig& cfg = {}) {
  return classical_correlations(dm, measured, cfg);
}

// ---------------------------------------------------------------------------
// Pure universes (dense or branching)

template <class U>
concept Universe = requires(const U& u, const FragmentSpec& f, std::vector<std::size_t> order) {
  { u.num_sites() } -> std::convertible_to<std::size_t>;
  { u.dims() } -> std::convertible_to<std::vector<std::size_t>>;
  { entropy(u, f) } -> std::convertible_to<double>;
  { pair_factor(u, f, f) } -> std::same_as<std::optional<CMatrix>>;
  { state_factor(u, order) } -> std::same_as<StateFactor>;
  { env_symmetric(u) } -> std::convertible_to<bool>;
};

inline FragmentSpec system_site() { return FragmentSpec{0}; }

/// Environment sites (1..n-1) not in f.
inline FragmentSpec env_complement(std::size_t n_sites, const FragmentSpec& f) {
  std::vector<std::size_t> out;
  auto it = f.begin();
  for (std::size_t i = 1; i < n_sites; ++i) {
    while (it != f.end() && *it < i) ++it;
    if (it != f.end() && *it == i) continue;
    out.push_back(i);
  }
  return FragmentSpec(std::move(out));
}

namespace detail {

template <Universe U>
void require_env_fragment(const U& u, const FragmentSpec& f) {
  f.validate(u.num_sites());
  if (f.contains(0)) throw Error("environment fragment must not contain the system");
}

}  // namespace detail

template <Universe U>
double h_s(const U& u) {
  return entropy(u, system_site());
}

/// E_f(S:target) through the two-qubit-equivalent pair (S, target).
template <Universe U>
EofValue eof_koashi_winter(const U& u, const FragmentSpec& target, const CorrelationConfig& cfg = {}) {
  detail::require_env_fragment(u, target);
  if (target.empty()) return {0.0, true};
  if (cfg.method != CorrelationMethod::optimizer) {
    if (auto w = pair_factor(u, system_site(), target)) return {eof_from_concurrence(concurrence_from_factor(*w)), true};
  }
  // E_f(S:target) = H(S) - J(S:rest) with J from the optimizer (an upper bound on E_f).
  const FragmentSpec rest = env_complement(u.num_sites(), target);
  if (rest.empty()) return {h_s(u), false};
  CorrelationConfig opt = cfg;
  opt.method = CorrelationMethod::optimizer;
  const JValue j = classical_from_factor(state_factor(u, detail::concat(system_site(), rest)), 1, opt);
  return {std::max(0.0, h_s(u) - j.value), false};
}

/// J(S:F) with the fragment F measured.
template <Universe U>
JValue classical_j(const U& u, const FragmentSpec& f, const CorrelationConfig& cfg = {}) {
  detail::require_env_fragment(u, f);
  if (f.empty()) throw Error("classical correlations: empty measured fragment");
  const FragmentSpec g = env_complement(u.num_sites(), f);
  const bool try_exact = cfg.method == CorrelationMethod::automatic || cfg.method == CorrelationMethod::rank_two_exact;
  JValue out;
  bool have_exact = false;
  if (try_exact) {
    if (g.empty()) {
      out.value = h_s(u);
      have_exact = true;
    } else if (auto w = pair_factor(u, system_site(), g)) {
      out.value = std::max(0.0, h_s(u) - eof_from_concurrence(concurrence_from_factor(*w)));
      have_exact = true;
    }
    if (have_exact && !cfg.want_argmax) return out;
  }
  CorrelationConfig c = cfg;
  if (c.method != CorrelationMethod::grid_oracle) c.method = CorrelationMethod::optimizer;
  c.want_argmax = false;
  JValue found = classical_from_factor(state_factor(u, detail::concat(system_site(), f)), 1, c);
  if (have_exact) {
    out.argmax = std::move(found.argmax);
    out.restarts_used = found.restarts_used;
    return out;
  }
  found.fallback = found.fallback || cfg.method == CorrelationMethod::rank_two_exact;
  return found;
}

/// J(S:F) with S measured.
template <Universe U>
JValue classical_j_reversed(const U& u, const FragmentSpec& f, const CorrelationConfig& cfg = {}) {
  detail::require_env_fragment(u, f);
  if (f.empty()) throw Error("classical correlations: empty fragment");
  const FragmentSpec g = env_complement(u.num_sites(), f);
  const bool try_exact = cfg.method == CorrelationMethod::automatic || cfg.method == CorrelationMethod::rank_two_exact;
  if (try_exact) {
    if (g.empty()) return {entropy(u, f)};
    if (auto w = pair_factor(u, f, g)) {
      JValue out;
      out.value = std::max(0.0, entropy(u, f) - eof_from_concurrence(concurrence_from_factor(*w)));
      return out;
    }
  }
  CorrelationConfig c = cfg;
  if (c.method == CorrelationMethod::rank_two_exact) c.method = CorrelationMethod::optimizer;
  JValue out = classical_from_factor(state_factor(u, detail::concat(f, system_site())), f.size(), c);
  out.fallback = cfg.method == CorrelationMethod::rank_two_exact;
  return out;
}

template <Universe U>
double mutual_information_s(const U& u, const FragmentSpec& f) {
  return h_s(u) + entropy(u, f) - entropy(u, f.with(0));
}

template <Universe U>
CorrelationReport classical_correlations(const U& u, const FragmentSpec& f, const CorrelationConfig& cfg = {}) {
  return detail::make_report(mutual_information_s(u, f), classical_j(u, f, cfg));
}

template <Universe U>
CorrelationReport discord(const U& u, const FragmentSpec& f, const CorrelationConfig& cfg = {}) {
  return classical_correlations(u, f, cfg);
}

/// I(s : f_l | f_k) = I(s : f_k f_l) - I(s : f_k).
template <Universe U>
double conditional_mutual_information(const U& u, const FragmentSpec& s, const FragmentSpec& f_k,
                                      const FragmentSpec& f_l) {
  require_disjoint(s, f_k);
  require_disjoint(s, f_l);
  require_disjoint(f_k, f_l);
  const FragmentSpec kl = f_k.united(f_l);
  auto mi = [&](const FragmentSpec& f) {
    if (f.empty()) return 0.0;
    return entropy(u, s) + entropy(u, f) - entropy(u, s.united(f));
  };
  return mi(kl) - mi(f_k);
}

struct DeficitValue {
  double delta = 0.0;
  bool degenerate = false;
  bool exact = true;
};

/// delta = (H(S) - min{J(S:F), J(S:E/F)}) / H(S); J of an empty fragment is 0.
template <Universe U>
DeficitValue information_deficit(const U& u, const FragmentSpec& f, const CorrelationConfig& cfg = {}) {
  detail::require_env_fragment(u, f);
  const double h = h_s(u);
  if (h < tol::kDegenerate) return {0.0, true, true};
  const FragmentSpec g = env_complement(u.num_sites(), f);
  const JValue jf = f.empty() ? JValue{0.0} : classical_j(u, f, cfg);
  const JValue jg = g.empty() ? JValue{0.0} : classical_j(u, g, cfg);
  return {std::clamp((h - std::min(jf.value, jg.value)) / h, 0.0, 1.0), false, jf.exact() && jg.exact()};
}

struct DeficitReport {
  std::vector<double> per_site_deltas;
  double average_delta = 0.0;
  double H_S = 0.0;
  bool degenerate = false;
  bool exact = true;
};

template <Universe U>
DeficitReport deficit_report(const U& u, const CorrelationConfig& cfg = {}) {
  DeficitReport r;
  r.H_S = h_s(u);
  r.degenerate = r.H_S < tol::kDegenerate;
  for (std::size_t i = 1; i < u.num_sites(); ++i) {
    const auto d = information_deficit(u, FragmentSpec{i}, cfg);
    r.per_site_deltas.push_back(d.delta);
    r.exact = r.exact && d.exact;
  }
  double sum = 0.0;
  for (double d : r.per_site_deltas) sum += d;
  r.average_delta = r.per_site_deltas.empty() ? 0.0 : sum / static_cast<double>(r.per_site_deltas.size());
  return r;
}

// ---------------------------------------------------------------------------
// Cached evaluation of many fragments of one universe

template <Universe U>
class CorrelationEngine {
 public:
  CorrelationEngine(const U& u, CorrelationConfig cfg = {}) : u_(u), cfg_(std::move(cfg)), symmetric_(env_symmetric(u)) {}

  const U& universe() const { return u_; }
  const CorrelationConfig& config() const { return cfg_; }
  std::size_t num_env() const { return u_.num_sites() - 1; }
  bool symmetric() const { return symmetric_; }

  double entropy_of(const FragmentSpec& f) {
    return cached(entropy_, f, [&] { return entropy(u_, f); });
  }
  double h_s() { return entropy_of(system_site()); }

  /// I(S:F) for an environment fragment.
  double mi(const FragmentSpec& f) {
    if (f.empty()) return 0.0;
    return h_s() + entropy_of(f) - entropy_of(f.with(0));
  }

  const JValue& j(const FragmentSpec& f) {
    return cached(j_, f, [&] {
      CorrelationConfig c = cfg_;
      c.warm_starts.clear();
      if (f.size() > 1 && needs_optimizer(f)) {
        std::vector<CMatrix> sites;
        for (auto i : f) {
          const auto& b = argmax(FragmentSpec{i});
          sites.push_back(b.basis());
        }
        c.warm_starts.push_back(ProjectiveMeasurement::product(std::move(sites)));
      }
      return classical_j(u_, f, c);
    });
  }

  const JValue& j_reversed(const FragmentSpec& f) {
    return cached(jr_, f, [&] { return classical_j_reversed(u_, f, cfg_); });
  }

  double discord(const FragmentSpec& f) { return mi(f) - j(f).value; }

  /// Basis maximizing J(S:F) (the optimizer runs even where J is exact).
  const ProjectiveMeasurement& argmax(const FragmentSpec& f) {
    auto it = argmax_.find(f);
    if (it != argmax_.end()) return it->second;
    const JValue& jv = j(f);
    if (jv.argmax) return argmax_.emplace(f, *jv.argmax).first->second;
    CorrelationConfig c = cfg_;
    c.want_argmax = true;
    c.warm_starts.clear();
    if (f.size() > 1) {
      std::vector<CMatrix> sites;
      for (auto i : f) sites.push_back(argmax(FragmentSpec{i}).basis());
      c.warm_starts.push_back(ProjectiveMeasurement::product(std::move(sites)));
    }
    JValue found = classical_j(u_, f, c);
    if (!found.argmax) throw Error("optimizer returned no basis");
    return argmax_.emplace(f, *found.argmax).first->second;
  }

  EofValue eof(const FragmentSpec& target) {
    return cached(eof_, target, [&] { return eof_koashi_winter(u_, target, cfg_); });
  }

  double cmi(const FragmentSpec& f_k, const FragmentSpec& f_l) {
    require_disjoint(f_k, f_l);
    return mi(f_k.united(f_l)) - mi(f_k);
  }

  /// delta for the split (F, E/F).
  DeficitValue delta(const FragmentSpec& f) {
    const double h = h_s();
    if (h < tol::kDegenerate) return {0.0, true, true};
    const FragmentSpec g = env_complement(u_.num_sites(), f);
    const JValue jf = f.empty() ? JValue{0.0} : j(f);
    const JValue jg = g.empty() ? JValue{0.0} : j(g);
    return {std::clamp((h - std::min(jf.value, jg.value)) / h, 0.0, 1.0), false, jf.exact() && jg.exact()};
  }

 private:
  struct Key {
    bool by_size;
    std::uint64_t a, b;
    auto operator<=>(const Key&) const = default;
  };

  std::optional<Key> key(const FragmentSpec& f) const {
    if (symmetric_) {
      const bool s = f.contains(0);
      return Key{true, s ? 1U : 0U, f.size()};
    }
    if (u_.num_sites() > 64) return std::nullopt;
    std::uint64_t mask = 0;
    for (auto i : f) mask |= std::uint64_t{1} << i;
    return Key{false, mask, 0};
  }

  template <class V, class Fn>
  const V& cached(std::map<Key, V>& store, const FragmentSpec& f, Fn&& compute) {
    const auto k = key(f);
    if (!k) {
      scratch<V>() = compute();
      return scratch<V>();
    }
    auto it = store.find(*k);
    if (it != store.end()) return it->second;
    return store.emplace(*k, compute()).first->second;
  }

  template <class V>
  V& scratch() {
    static thread_local V v{};
    return v;
  }

  bool needs_optimizer(const FragmentSpec& f) {
    const FragmentSpec g = env_complement(u_.num_sites(), f);
    if (g.empty()) return false;
    return !pair_factor(u_, system_site(), g).has_value();
  }

  const U& u_;
  CorrelationConfig cfg_;
  bool symmetric_;
  std::map<Key, double> entropy_;
  std::map<Key, JValue> j_, jr_;
  std::map<Key, EofValue> eof_;
  std::map<FragmentSpec, ProjectiveMeasurement> argmax_;
};

}  // namespace darwinbounds
