#pragma once

// Checkers for the discord / objectivity inequalities on pure universes,
// plateau scans over fragment sizes, and the conditional-mutual-information
// witness.
//
// Every checker takes a CorrelationEngine so that entropies and J values are
// shared between checks. Where J comes from the optimizer it is a lower
// bound; the checks are arranged so that the premise and the conclusion use
// the same J values, and such checks carry the looser tolerance.

#include "darwinbounds/correlations.hpp"
#include "darwinbounds/fragments.hpp"

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

namespace darwinbounds {

inline constexpr double kExactTolerance = 1e-6;
inline constexpr double kOptimizerTolerance = 1e-4;
inline constexpr double kPlateauTolerance = 1e-9;  // J >= (1 - delta) H(S) - this counts as on the plateau
inline constexpr double kExactPlateauTolerance = 1e-12;  // plateau for the delta = 0 chain

inline std::vector<double> default_delta_levels() { return {0.0, 0.01, 0.05, 0.1, 0.25}; }

struct BoundCheck {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;  // rhs - lhs
  double tolerance = kExactTolerance;
  bool pass = true;          // slack >= -tolerance
  bool conditional = false;  // premise not met: the inequality is not required to hold
  bool optimizer_limited = false;
  std::string note;

  const char* method() const { return optimizer_limited ? "optimizer-limited" : "exact"; }
  const char* verdict() const { return conditional ? "conditional-pass" : (pass ? "pass" : "fail"); }
  bool failed() const { return !pass && !conditional; }
};

inline BoundCheck make_check(std::string name, double lhs, double rhs, bool exact, std::string note = {}) {
  BoundCheck c;
  c.name = std::move(name);
  c.lhs = lhs;
  c.rhs = rhs;
  c.slack = rhs - lhs;
  c.optimizer_limited = !exact;
  c.tolerance = exact ? kExactTolerance : kOptimizerTolerance;
  c.pass = c.slack >= -c.tolerance;
  c.note = std::move(note);
  return c;
}

enum class Quantity { mutual_info, classical, classical_reversed, discord, cmi };

inline const char* quantity_name(Quantity q) {
  switch (q) {
    case Quantity::mutual_info: return "I";
    case Quantity::classical: return "J";
    case Quantity::classical_reversed: return "J_rev";
    case Quantity::discord: return "D";
    case Quantity::cmi: return "CMI";
  }
  return "?";
}

struct FragmentStats {
  std::size_t k = 0;
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

struct PlateauScan {
  Quantity quantity = Quantity::classical;
  double delta = 0.0;
  double H_S = 0.0;
  std::vector<FragmentStats> rows;
  std::optional<std::size_t> k_delta;
  std::size_t R_delta = 0;
  bool exhaustive = true;
  bool exact = true;
};

namespace detail {

inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

struct Accumulator {
  double lo = 0.0, hi = 0.0, sum = 0.0;
  std::size_t n = 0;
  void add(double v) {
    if (n == 0) lo = hi = v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    sum += v;
    ++n;
  }
  FragmentStats stats(std::size_t k) const { return {k, lo, n ? sum / static_cast<double>(n) : 0.0, hi, n}; }
};

/// Smallest k with rows[k'].min >= (1 - delta) H - tol for every k' >= k.
inline std::optional<std::size_t> plateau_start(const std::vector<FragmentStats>& rows, double h, double delta,
                                                 double tolerance = kPlateauTolerance) {
  if (h < tol::kDegenerate) return std::nullopt;
  std::optional<std::size_t> k;
  for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
    if (it->min >= (1.0 - delta) * h - tolerance) k = it->k;
    else break;
  }
  return k;
}

}  // namespace detail

template <Universe U>
class BoundSuite {
 public:
  explicit BoundSuite(CorrelationEngine<U>& eng, FragmentPolicy policy = {})
      : eng_(eng), catalog_(eng.num_env(), eng.symmetric(), policy) {}

  CorrelationEngine<U>& engine() { return eng_; }
  FragmentCatalog& catalog() { return catalog_; }
  std::size_t n() const { return eng_.num_env(); }

  double quantity(Quantity q, const FragmentSpec& f) {
    switch (q) {
      case Quantity::mutual_info: return eng_.mi(f);
      case Quantity::classical: return eng_.j(f).value;
      case Quantity::classical_reversed: return eng_.j_reversed(f).value;
      case Quantity::discord: return eng_.discord(f);
      case Quantity::cmi: break;
    }
    throw Error("quantity needs a fragment pair");
  }

  bool quantity_exact(Quantity q, const FragmentSpec& f) {
    switch (q) {
      case Quantity::classical:
      case Quantity::discord: return eng_.j(f).exact();
      case Quantity::classical_reversed: return eng_.j_reversed(f).exact();
      default: return true;
    }
  }

  /// Per-k statistics for k = 1 .. N-1.
  PlateauScan scan(Quantity q, double delta = 0.0) {
    PlateauScan s;
    s.quantity = q;
    s.delta = delta;
    s.H_S = eng_.h_s();
    for (std::size_t k = 1; k < n(); ++k) {
      detail::Accumulator acc;
      for (const auto& f : catalog_.of_size(k)) {
        acc.add(quantity(q, f));
        s.exact = s.exact && quantity_exact(q, f);
      }
      s.exhaustive = s.exhaustive && catalog_.exhaustive(k);
      s.rows.push_back(acc.stats(k));
    }
    if (q == Quantity::classical || q == Quantity::classical_reversed) s.k_delta = detail::plateau_start(s.rows, s.H_S, delta);
    s.R_delta = redundancy(delta);
    return s;
  }

  /// Number of sites with J(S:e_i) >= (1 - delta) H(S).
  std::size_t redundancy(double delta) {
    const double h = eng_.h_s();
    if (h < tol::kDegenerate) return 0;
    if (eng_.symmetric() && n() > 0) return eng_.j(FragmentSpec{1}).value >= (1.0 - delta) * h - kPlateauTolerance ? n() : 0;
    std::size_t r = 0;
    for (std::size_t i = 1; i <= n(); ++i)
      if (eng_.j(FragmentSpec{i}).value >= (1.0 - delta) * h - kPlateauTolerance) ++r;
    return r;
  }

  // Sums over single sites, O(1) for symmetric universes.
  template <class Fn>
  double site_mean(Fn&& fn) {
    if (n() == 0) return 0.0;
    if (eng_.symmetric()) return fn(FragmentSpec{1});
    double s = 0.0;
    for (std::size_t i = 1; i <= n(); ++i) s += fn(FragmentSpec{i});
    return s / static_cast<double>(n());
  }

  bool sites_exact() {
    bool ok = true;
    const std::size_t last = eng_.symmetric() ? std::min<std::size_t>(1, n()) : n();
    for (std::size_t i = 1; i <= last; ++i) {
      const FragmentSpec f{i};
      ok = ok && eng_.delta(f).exact;
    }
    return ok;
  }

  double mean_delta() {
    return site_mean([&](const FragmentSpec& f) { return eng_.delta(f).delta; });
  }

  /// D(S:F) + D(S:E/F) <= 2 delta H(S) for a nonempty proper fragment F.
  BoundCheck result1(const FragmentSpec& f) {
    const FragmentSpec g = env_complement(eng_.universe().num_sites(), f);
    if (f.empty() || g.empty()) throw Error("result1 needs a nonempty proper environment fragment");
    const auto d = eng_.delta(f);
    const double h = eng_.h_s();
    return make_check("result1", eng_.discord(f) + eng_.discord(g), 2.0 * d.delta * h, d.exact,
                      "F=" + f.to_string() + (d.degenerate ? " degenerate" : ""));
  }

  /// result1 over every split (one per size for symmetric universes).
  std::vector<BoundCheck> result1_all() {
    std::vector<BoundCheck> out;
    for (std::size_t k = 1; k < n(); ++k)
      for (const auto& f : catalog_.of_size(k)) out.push_back(result1(f));
    return out;
  }

  /// mean_i D(S:e_i) <= mean delta_i H(S).
  BoundCheck result2() {
    const double h = eng_.h_s();
    const double lhs = site_mean([&](const FragmentSpec& f) { return eng_.discord(f); });
    return make_check("result2", lhs, mean_delta() * h, sites_exact());
  }

  /// mean_i E_f(S:e_i) <= delta H(S), followed by the per-site checks
  /// E_f(S:e_i) <= delta_i H(S).
  std::vector<BoundCheck> eof_bound() {
    const double h = eng_.h_s();
    std::vector<BoundCheck> out;
    bool exact = sites_exact();
    const double lhs = site_mean([&](const FragmentSpec& f) {
      const auto e = eng_.eof(f);
      exact = exact && e.exact;
      return e.value;
    });
    out.push_back(make_check("eq7", lhs, mean_delta() * h, exact));
    const std::size_t last = eng_.symmetric() ? std::min<std::size_t>(1, n()) : n();
    for (std::size_t i = 1; i <= last; ++i) {
      const FragmentSpec f{i};
      const auto e = eng_.eof(f);
      const auto d = eng_.delta(f);
      out.push_back(make_check("eq7_site", e.value, d.delta * h, e.exact && d.exact, "i=" + std::to_string(i)));
    }
    return out;
  }

  /// mean J(S:e_i) >= (1 - delta) H(S)  =>  mean D(S:e_i) <= delta H(S).
  BoundCheck main2() {
    const double h = eng_.h_s();
    const double delta = mean_delta();
    const double j_bar = site_mean([&](const FragmentSpec& f) { return eng_.j(f).value; });
    const double d_bar = site_mean([&](const FragmentSpec& f) { return eng_.discord(f); });
    BoundCheck c = make_check("eq8", d_bar, delta * h, sites_exact());
    if (j_bar < (1.0 - delta) * h - kPlateauTolerance) {
      c.conditional = true;
      c.note = "premise J_bar >= (1-delta)H(S) not met";
    }
    return c;
  }

  /// mean over F_k of D(S:F_k) <= (1 - R_delta (1 - delta) / N) H(S), k <= N/2.
  std::vector<BoundCheck> redundancy_bound(double delta, PlateauScan* scan_out = nullptr) {
    const double h = eng_.h_s();
    const std::size_t r = redundancy(delta);
    const double rhs = (1.0 - static_cast<double>(r) * (1.0 - delta) / static_cast<double>(n())) * h;
    std::vector<BoundCheck> out;
    PlateauScan s;
    s.quantity = Quantity::discord;
    s.delta = delta;
    s.H_S = h;
    s.R_delta = r;
    for (std::size_t k = 1; 2 * k <= n(); ++k) {
      detail::Accumulator acc;
      bool exact = true;
      for (const auto& f : catalog_.of_size(k)) {
        acc.add(eng_.discord(f));
        exact = exact && eng_.j(f).exact();
      }
      for (std::size_t i = 1; i <= (eng_.symmetric() ? std::min<std::size_t>(1, n()) : n()); ++i)
        exact = exact && eng_.j(FragmentSpec{i}).exact();
      const auto st = acc.stats(k);
      s.rows.push_back(st);
      s.exact = s.exact && exact;
      s.exhaustive = s.exhaustive && catalog_.exhaustive(k);
      std::string note = "k=" + std::to_string(k) + " R_delta=" + std::to_string(r) + " delta=" + detail::fmt(delta);
      if (!catalog_.exhaustive(k)) note += " sampled";
      out.push_back(make_check("eq9", st.mean, rhs, exact, std::move(note)));
    }
    if (scan_out) *scan_out = std::move(s);
    return out;
  }

  struct DarwinismScan {
    PlateauScan fragment_measured;  // J(S:F_k), F_k measured
    PlateauScan system_measured;    // J(S:F_k), S measured
  };

  DarwinismScan darwinism_condition(double delta, bool with_reversed = true) {
    DarwinismScan d;
    d.fragment_measured = scan(Quantity::classical, delta);
    if (with_reversed) d.system_measured = scan(Quantity::classical_reversed, delta);
    return d;
  }

  /// D(S:F_k) <= 2 delta H(S) for k in [k_delta, N - k_delta].
  BoundCheck discord_plateau(double delta) {
    const double h = eng_.h_s();
    const PlateauScan js = scan(Quantity::classical, delta);
    const auto kd = js.k_delta;
    std::size_t lo = 1, hi = n() > 0 ? n() - 1 : 0;
    if (kd) {
      lo = *kd;
      hi = n() - *kd;
    }
    detail::Accumulator acc;
    bool exact = js.exact;
    for (std::size_t k = lo; k <= hi && k < n(); ++k)
      for (const auto& f : catalog_.of_size(k)) acc.add(eng_.discord(f));
    const double lhs = acc.n ? acc.hi : 0.0;
    std::string note = "delta=" + detail::fmt(delta);
    BoundCheck c = make_check("eq12", lhs, 2.0 * delta * h, exact);
    if (!kd) {
      c.conditional = true;
      note += " premise unverified (no k_delta)";
    } else {
      note += " k_delta=" + std::to_string(*kd);
      if (acc.n == 0) note += " empty range";
    }
    c.note = std::move(note);
    return c;
  }

  struct Result4Chain {
    std::size_t k_delta = 0;
    double plateau_deviation = 0.0;       // max |J - H(S)| for k >= k_delta
    double max_abs_cmi = 0.0;             // over k >= k_delta, k + l <= N - k_delta
    double rederived_deviation = 0.0;     // max |J - H(S)| for k >= 2 k_delta
    std::size_t pairs = 0;
    bool holds(double tolerance) const {
      return plateau_deviation <= tolerance && max_abs_cmi <= tolerance && rederived_deviation <= tolerance;
    }
  };

  struct CmiWitness {
    PlateauScan scan;  // CMI statistics per k (over l)
    BoundCheck check;
    std::optional<Result4Chain> chain;
  };

  /// I(S:F_l|F_k) <= 2 delta H(S) for k >= k_delta, k + l <= N - k_delta
  /// (J plateau premise), and at delta = 0 the full implication chain.
  CmiWitness cmi_witness(double delta) {
    const double h = eng_.h_s();
    const PlateauScan js = scan(Quantity::classical, delta);
    CmiWitness w;
    w.scan.quantity = Quantity::cmi;
    w.scan.delta = delta;
    w.scan.H_S = h;
    w.scan.k_delta = js.k_delta;
    const std::size_t kd = js.k_delta.value_or(1);
    detail::Accumulator all;
    for (std::size_t k = kd; k < n(); ++k) {
      detail::Accumulator acc;
      for (std::size_t l = 1; k + l + kd <= n(); ++l)
        for (const auto& [fk, fl] : catalog_.pairs(k, l)) {
          const double v = eng_.cmi(fk, fl);
          acc.add(v);
          all.add(v);
        }
      if (acc.n) w.scan.rows.push_back(acc.stats(k));
    }
    w.check = make_check("eq15", all.n ? all.hi : 0.0, 2.0 * delta * h, js.exact);
    std::string note = "delta=" + detail::fmt(delta);
    if (!js.k_delta) {
      w.check.conditional = true;
      note += " premise unverified (no k_delta)";
    } else {
      note += " k_delta=" + std::to_string(kd);
      if (2 * kd > n()) {
        w.check.conditional = true;
        note += " k_delta > N/2";
      }
    }
    w.check.note = std::move(note);
    const auto kd0 = delta == 0.0 ? detail::plateau_start(js.rows, h, 0.0, kExactPlateauTolerance) : std::nullopt;
    if (kd0 && 2 * *kd0 <= n()) {
      Result4Chain c;
      c.k_delta = *kd0;
      detail::Accumulator cmis;
      for (std::size_t k = *kd0; k < n(); ++k)
        for (std::size_t l = 1; k + l + *kd0 <= n(); ++l)
          for (const auto& [fk, fl] : catalog_.pairs(k, l)) cmis.add(eng_.cmi(fk, fl));
      c.pairs = cmis.n;
      for (std::size_t k = c.k_delta; k <= n(); ++k)
        for (const auto& f : k == n() ? std::vector<FragmentSpec>{FragmentSpec::range(1, n() + 1)} : catalog_.of_size(k)) {
          const double dev = std::abs(eng_.j(f).value - h);
          c.plateau_deviation = std::max(c.plateau_deviation, dev);
          if (k >= 2 * c.k_delta) c.rederived_deviation = std::max(c.rederived_deviation, dev);
        }
      c.max_abs_cmi = cmis.n ? std::max(std::abs(cmis.lo), std::abs(cmis.hi)) : 0.0;
      w.chain = c;
    }
    return w;
  }

  struct Witness {
    double delta = 0.0;
    std::optional<std::size_t> k_star;
    double max_cmi = 0.0;  // over the qualifying pairs of k_star
    bool degenerate = false;
    std::string verdict;
    std::vector<FragmentStats> rows;  // CMI statistics over l for each k
  };

  /// Entropy-only witness: the smallest k <= N/2 such that every
  /// I(S:F_l|F_k') with k' >= k, k' + l <= N - k is at most 2 delta H(S).
  Witness witness_scan(double delta) {
    Witness w;
    w.delta = delta;
    const double h = eng_.h_s();
    if (h < tol::kDegenerate) {
      w.degenerate = true;
      w.verdict = "degenerate: H(S)=0";
      return w;
    }
    const double bound = 2.0 * delta * h + 1e-10;
    // cmi_max[k'][m] = max CMI over pairs with k' and k' + l <= m.
    for (std::size_t k = 1; k < n(); ++k) {
      detail::Accumulator acc;
      for (std::size_t l = 1; k + l <= n(); ++l)
        for (const auto& [fk, fl] : catalog_.pairs(k, l)) acc.add(eng_.cmi(fk, fl));
      if (acc.n) w.rows.push_back(acc.stats(k));
    }
    for (std::size_t k = 1; 2 * k <= n(); ++k) {
      detail::Accumulator acc;
      for (std::size_t kp = k; kp < n(); ++kp)
        for (std::size_t l = 1; kp + l + k <= n(); ++l)
          for (const auto& [fk, fl] : catalog_.pairs(kp, l)) acc.add(eng_.cmi(fk, fl));
      if (acc.n > 0 && acc.hi <= bound) {
        w.k_star = k;
        w.max_cmi = acc.hi;
        break;
      }
    }
    if (!w.k_star) {
      w.verdict = "not witnessed at delta=" + detail::fmt(delta);
    } else if (delta == 0.0) {
      w.verdict = "objective at delta=0, k_delta=" + std::to_string(*w.k_star);
    } else {
      w.verdict = "consistent at delta=" + detail::fmt(delta) + ", k_delta=" + std::to_string(*w.k_star);
    }
    return w;
  }

  std::vector<FragmentStats> partial_information_plot(Quantity q) { return scan(q).rows; }

 private:
  CorrelationEngine<U>& eng_;
  FragmentCatalog catalog_;
};

// ---------------------------------------------------------------------------
// Pointer-observable correlations between disjoint fragments

struct Result3Check {
  BoundCheck lower;
  std::optional<BoundCheck> upper;
  double measured_I = 0.0;     // I(F_k,M : F_l,M)
  double delta_star = 0.0;     // 1 - min{I(S:F_k,M), I(S:F_l,M)} / H(S)
  std::string upper_note;
};

/// I(S:F_M) for the measurement M on F (S unmeasured).
template <Universe U>
double measured_information(const U& u, const FragmentSpec& f, const ProjectiveMeasurement& m) {
  const auto fac = state_factor(u, detail::concat(system_site(), f));
  const auto d_m = static_cast<Eigen::Index>(detail::product(std::span(fac.dims).subspan(1)));
  const MeasurementObjective obj(detail::compress_factor(fac.w), static_cast<Eigen::Index>(fac.dims[0]), d_m);
  return obj.value(m.basis());
}

/// Lower: (1 - 2 delta) H(S) <= I(F_k,M : F_l,M). Upper (staged dynamics only,
/// `entropy_variation` = change of H(S) caused by the stages after F_k):
/// I <= (1 + delta) H(S) if the variation is >= 0, else log2 d_S + delta H(S).
/// The premise is I(S:F_M) >= (1 - delta) H(S) on both fragments with the
/// given measurements; when it fails the checks are conditional.
template <Universe U>
Result3Check check_result3(const U& u, const FragmentSpec& f_k, const FragmentSpec& f_l, const ProjectiveMeasurement& m_k,
                           const ProjectiveMeasurement& m_l, double delta_level,
                           std::optional<double> entropy_variation = std::nullopt) {
  require_disjoint(f_k, f_l);
  if (f_k.contains(0) || f_l.contains(0)) throw Error("result3 fragments must be environment fragments");
  const double h = h_s(u);
  Result3Check r;
  r.measured_I = measured_joint_distribution(u, f_k, m_k, f_l, m_l).mutual_information();
  const double ik = measured_information(u, f_k, m_k);
  const double il = measured_information(u, f_l, m_l);
  r.delta_star = h < tol::kDegenerate ? 0.0 : std::clamp(1.0 - std::min(ik, il) / h, 0.0, 1.0);
  const bool premise = r.delta_star <= delta_level + kPlateauTolerance;
  const std::string note = "delta=" + detail::fmt(delta_level) + " delta*=" + detail::fmt(r.delta_star);
  r.lower = make_check("result3_lower", (1.0 - 2.0 * delta_level) * h, r.measured_I, true, note);
  r.lower.conditional = !premise;
  if (entropy_variation) {
    const double d_s = static_cast<double>(u.dims()[0]);
    const double rhs = *entropy_variation >= 0.0 ? (1.0 + delta_level) * h : std::log2(d_s) + delta_level * h;
    BoundCheck up = make_check("result3_upper", r.measured_I, rhs, true, note);
    up.conditional = !premise;
    r.upper = std::move(up);
  } else {
    r.upper_note = "upper bound skipped: universe not built from staged unitaries";
  }
  return r;
}

}  // namespace darwinbounds
