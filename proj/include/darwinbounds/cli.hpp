#pragma once

// Command-line front end: configuration, corpus construction and the
// simulate / bounds / witness / pip / random-stress drivers.

#include "darwinbounds/bounds.hpp"
#include "darwinbounds/io.hpp"
#include "darwinbounds/models.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <thread>
#include <variant>

namespace darwinbounds {

enum class Command { simulate, bounds, witness, pip, random_stress };
enum class Model { cmaybe, ghz, random_branching, haar, file };
enum class Format { csv, json };

inline const char* command_name(Command c) {
  switch (c) {
    case Command::simulate: return "simulate";
    case Command::bounds: return "bounds";
    case Command::witness: return "witness";
    case Command::pip: return "pip";
    case Command::random_stress: return "random-stress";
  }
  return "?";
}

inline const char* model_name(Model m) {
  switch (m) {
    case Model::cmaybe: return "cmaybe";
    case Model::ghz: return "ghz";
    case Model::random_branching: return "random-branching";
    case Model::haar: return "haar";
    case Model::file: return "file";
  }
  return "?";
}

inline Command parse_command(const std::string& s) {
  for (auto c : {Command::simulate, Command::bounds, Command::witness, Command::pip, Command::random_stress})
    if (s == command_name(c)) return c;
  throw Error("unknown command '" + s + "'");
}

inline Model parse_model(const std::string& s) {
  for (auto m : {Model::cmaybe, Model::ghz, Model::random_branching, Model::haar, Model::file})
    if (s == model_name(m)) return m;
  throw Error("unknown model '" + s + "'");
}

inline Quantity parse_quantity(const std::string& s) {
  for (auto q : {Quantity::mutual_info, Quantity::classical, Quantity::classical_reversed, Quantity::discord})
    if (s == quantity_name(q)) return q;
  throw Error("unknown quantity '" + s + "' (expected I, J, J_rev or D)");
}

struct RunConfig {
  Command command = Command::bounds;
  std::vector<Model> models;  // empty: command default
  std::vector<double> a_grid;
  std::vector<std::size_t> n_env;  // empty: model default
  std::vector<double> delta_levels = default_delta_levels();
  std::optional<std::uint64_t> seed;
  std::string output_path;  // empty: stdout
  Format format = Format::csv;
  std::size_t dense_cap = kDefaultDenseCap;
  std::size_t restarts = 32;
  int grid_resolution = 64;
  std::optional<std::size_t> samples;
  std::string state_path;
  std::vector<Quantity> quantities{Quantity::mutual_info, Quantity::classical, Quantity::discord};
  std::size_t threads = 0;  // 0: hardware concurrency

  std::vector<Model> effective_models() const {
    if (!models.empty()) return models;
    if (command == Command::random_stress) return {Model::haar, Model::random_branching};
    return {Model::cmaybe};
  }

  std::vector<std::size_t> n_env_for(Model m) const {
    if (!n_env.empty()) return n_env;
    switch (m) {
      case Model::cmaybe:
        if (command == Command::simulate) return {2, 4, 8};
        [[fallthrough]];
      case Model::ghz: return {2, 3, 4, 5, 6, 7, 8, 9, 10};
      case Model::haar: return {2, 3, 4};
      case Model::random_branching: return {4, 5, 6, 7, 8};
      case Model::file: return {};
    }
    return {};
  }

  std::size_t samples_for(Model m) const {
    if (samples) return *samples;
    return m == Model::haar ? 200 : 100;
  }

  static bool sampled(Model m) { return m == Model::haar || m == Model::random_branching; }

  void validate() const {
    if (a_grid.empty()) throw Error("a-grid is empty");
    for (double a : a_grid)
      if (!(a >= 0.0 && a <= 1.0)) throw Error("a-grid values must lie in [0, 1]");
    if (delta_levels.empty()) throw Error("delta list is empty");
    for (double d : delta_levels)
      if (!(d >= 0.0 && d < 1.0)) throw Error("delta levels must lie in [0, 1)");
    if (dense_cap == 0 || dense_cap > kDefaultDenseCap) throw Error("dense-cap must lie in [1, 65536]");
    if (restarts == 0) throw Error("restarts must be positive");
    if (grid_resolution < 2) throw Error("grid-resolution must be at least 2");
    if (quantities.empty()) throw Error("quantity list is empty");
    const auto ms = effective_models();
    if (command == Command::simulate && (ms.size() != 1 || ms[0] != Model::cmaybe))
      throw Error("simulate supports only the cmaybe model");
    for (Model m : ms) {
      if (sampled(m) && !seed) throw Error(std::string("model ") + model_name(m) + " samples states and needs a seed");
      if (sampled(m) && samples_for(m) == 0) throw Error("samples must be positive");
      if (m == Model::file && state_path.empty()) throw Error("model file needs --state");
      for (auto n : n_env_for(m)) {
        if (n < 1) throw Error("n-env must be positive");
        if (m == Model::random_branching && n < 2) throw Error("random-branching needs n-env >= 2");
        if (m == Model::haar && (n + 1 >= 63 || (std::size_t{1} << (n + 1)) > dense_cap))
          throw Error("haar universe with n-env " + std::to_string(n) + " exceeds dense-cap");
      }
      if (m != Model::file && n_env_for(m).empty()) throw Error("n-env list is empty");
    }
  }
};

// ---------------------------------------------------------------------------
// Value parsing

namespace detail {

inline std::vector<std::string> split_list(const std::vector<std::string>& values) {
  std::vector<std::string> out;
  for (const auto& v : values) {
    std::stringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      tok = trim(tok);
      if (!tok.empty()) out.push_back(tok);
    }
  }
  return out;
}

inline double parse_real(const std::string& key, const std::string& s) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(s, &used);
  } catch (const std::exception&) {
    throw Error(key + ": bad number '" + s + "'");
  }
  if (used != s.size() || !std::isfinite(x)) throw Error(key + ": bad number '" + s + "'");
  return x;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& s) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    throw Error(key + ": expected a nonnegative integer, got '" + s + "'");
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw Error(key + ": integer out of range '" + s + "'");
  }
}

inline const std::string& single(const std::string& key, const std::vector<std::string>& v) {
  if (v.size() != 1) throw Error(key + " takes a single value");
  return v.front();
}

}  // namespace detail

/// Reals from "x,y,z" lists and "lin:start:stop:count" ranges.
inline std::vector<double> parse_real_list(const std::string& key, const std::vector<std::string>& values) {
  std::vector<double> out;
  for (const auto& tok : detail::split_list(values)) {
    if (tok.rfind("lin:", 0) == 0) {
      std::vector<std::string> parts;
      std::stringstream ss(tok.substr(4));
      std::string p;
      while (std::getline(ss, p, ':')) parts.push_back(p);
      if (parts.size() != 3) throw Error(key + ": expected lin:start:stop:count");
      const auto g = linear_grid(detail::parse_real(key, parts[0]), detail::parse_real(key, parts[1]),
                                 static_cast<std::size_t>(detail::parse_uint(key, parts[2])));
      out.insert(out.end(), g.begin(), g.end());
    } else {
      out.push_back(detail::parse_real(key, tok));
    }
  }
  return out;
}

/// Integers from "x,y" lists and "lo..hi" ranges.
inline std::vector<std::size_t> parse_size_list(const std::string& key, const std::vector<std::string>& values) {
  std::vector<std::size_t> out;
  for (const auto& tok : detail::split_list(values)) {
    const auto dots = tok.find("..");
    if (dots != std::string::npos) {
      const auto lo = detail::parse_uint(key, tok.substr(0, dots));
      const auto hi = detail::parse_uint(key, tok.substr(dots + 2));
      if (hi < lo || hi - lo > 100000) throw Error(key + ": bad range '" + tok + "'");
      for (auto n = lo; n <= hi; ++n) out.push_back(static_cast<std::size_t>(n));
    } else {
      out.push_back(static_cast<std::size_t>(detail::parse_uint(key, tok)));
    }
  }
  return out;
}

/// Builds a config from key -> values. `env_seed` is used when no seed key is given.
inline RunConfig config_from_map(Command command, const ConfigMap& m, std::optional<std::string> env_seed = std::nullopt) {
  RunConfig c;
  c.command = command;
  c.a_grid = linear_grid(0.0, 1.0, 101);
  for (const auto& [key, values] : m) {
    if (key == "model") {
      for (const auto& s : detail::split_list(values)) c.models.push_back(parse_model(s));
    } else if (key == "a-grid") {
      c.a_grid = parse_real_list(key, values);
    } else if (key == "n-env") {
      c.n_env = parse_size_list(key, values);
    } else if (key == "delta") {
      c.delta_levels = parse_real_list(key, values);
    } else if (key == "seed") {
      c.seed = detail::parse_uint(key, detail::single(key, values));
    } else if (key == "out") {
      c.output_path = detail::single(key, values);
    } else if (key == "format") {
      const auto& f = detail::single(key, values);
      if (f == "csv") c.format = Format::csv;
      else if (f == "json") c.format = Format::json;
      else throw Error("format must be csv or json");
    } else if (key == "restarts") {
      c.restarts = detail::parse_uint(key, detail::single(key, values));
    } else if (key == "dense-cap") {
      c.dense_cap = detail::parse_uint(key, detail::single(key, values));
    } else if (key == "grid-resolution") {
      c.grid_resolution = static_cast<int>(std::min<std::uint64_t>(detail::parse_uint(key, detail::single(key, values)), 1U << 20U));
    } else if (key == "samples") {
      c.samples = detail::parse_uint(key, detail::single(key, values));
    } else if (key == "state") {
      c.state_path = detail::single(key, values);
    } else if (key == "quantity") {
      c.quantities.clear();
      for (const auto& s : detail::split_list(values)) c.quantities.push_back(parse_quantity(s));
    } else if (key == "threads") {
      c.threads = detail::parse_uint(key, detail::single(key, values));
    } else if (key == "config") {
      // handled by the caller
    } else {
      throw Error("unknown config key '" + key + "'");
    }
  }
  if (!c.seed && env_seed && !env_seed->empty()) c.seed = detail::parse_uint("DARWINBOUNDS_SEED", *env_seed);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Corpus

struct Case {
  std::string model;
  std::optional<double> a;
  std::size_t n_env = 0;
  std::optional<std::uint64_t> seed;
  std::variant<BranchingState, PureState> state;
  std::optional<CMaybeParams> staged;  // c-maybe circuits expose their stages
};

inline std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) { return Rng::substream(seed, index).next(); }

inline std::vector<Case> build_corpus(const RunConfig& cfg) {
  std::vector<Case> out;
  for (Model m : cfg.effective_models()) {
    const auto ns = cfg.n_env_for(m);
    switch (m) {
      case Model::cmaybe:
        for (auto n : ns)
          for (double a : cfg.a_grid) {
            const CMaybeParams p{a, n};
            out.push_back({"cmaybe", a, n, std::nullopt, cmaybe_branching(p), p});
          }
        break;
      case Model::ghz:
        for (auto n : ns) out.push_back({"ghz", std::nullopt, n, std::nullopt, ghz(n + 1), std::nullopt});
        break;
      case Model::random_branching:
      case Model::haar:
        for (std::size_t i = 0; i < cfg.samples_for(m); ++i) {
          const auto n = ns[i % ns.size()];
          const auto s = sample_seed(*cfg.seed, i);
          if (m == Model::haar)
            out.push_back({"haar", std::nullopt, n, s, haar_random_pure(std::vector<std::size_t>(n + 1, 2), s, cfg.dense_cap),
                           std::nullopt});
          else
            out.push_back({"random-branching", std::nullopt, n, s, random_branching(n, s), std::nullopt});
        }
        break;
      case Model::file: {
        PureState st = load_state_file(cfg.state_path);
        if (st.num_sites() < 2) throw Error("state file needs a system and at least one environment site");
        if (st.dimension() > cfg.dense_cap) throw Error("state file dimension exceeds dense-cap");
        const auto n = st.num_env();
        out.push_back({"file", std::nullopt, n, std::nullopt, std::move(st), std::nullopt});
        break;
      }
    }
  }
  return out;
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers; results keep index order.
template <class T, class Fn>
std::vector<T> parallel_map(std::size_t n, std::size_t threads, Fn&& fn) {
  std::vector<T> out(n);
  if (threads == 0) threads = std::max(1U, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

inline CorrelationConfig correlation_config(const RunConfig& cfg) {
  CorrelationConfig c;
  c.restarts = cfg.restarts;
  c.seed = cfg.seed.value_or(0);
  c.grid_resolution = cfg.grid_resolution;
  return c;
}

inline FragmentPolicy fragment_policy(const RunConfig& cfg) {
  FragmentPolicy p;
  p.seed = cfg.seed.value_or(0);
  return p;
}

struct RunResult {
  Table table;
  bool any_failed = false;
};

// ---------------------------------------------------------------------------
// simulate

inline std::vector<std::string> simulate_columns() {
  return {"model", "a", "N", "H_S", "H_eps", "I", "J", "D", "delta", "bound",
          "H_S_cf", "H_eps_cf", "J_cf", "D_cf", "delta_cf", "bound_cf", "max_abs_dev", "agree"};
}

inline double simulate_tolerance() { return kExactTolerance; }

inline std::vector<Cell> simulate_row(double a, std::size_t n) {
  const CMaybeParams p{a, n};
  const BranchingState u = cmaybe_branching(p);
  CorrelationEngine<BranchingState> eng(u);
  const FragmentSpec site{1};
  const double h = eng.h_s();
  const double h_eps = eng.entropy_of(site);
  const double i = eng.mi(site);
  const double j = eng.j(site).value;
  const double d = eng.discord(site);
  const double delta = eng.delta(site).delta;
  const double bound = std::min(delta * h, h_eps);
  const auto cf = closed_forms(p);
  const double bound_cf = std::min(cf.delta * cf.H_S, cf.H_eps);
  const double dev = std::max({std::abs(h - cf.H_S), std::abs(h_eps - cf.H_eps), std::abs(j - cf.J_bar),
                               std::abs(d - cf.D_bar), std::abs(delta - cf.delta), std::abs(bound - bound_cf)});
  return {std::string("cmaybe"), a, static_cast<std::int64_t>(n), h, h_eps, i, j, d, delta, bound,
          cf.H_S, cf.H_eps, cf.J_bar, cf.D_bar, cf.delta, bound_cf, dev, dev <= simulate_tolerance()};
}

inline RunResult run_simulate(const RunConfig& cfg) {
  RunResult r;
  r.table.columns = simulate_columns();
  r.table.meta = {{"command", "simulate"}};
  std::vector<std::pair<double, std::size_t>> cells;
  for (auto n : cfg.n_env_for(Model::cmaybe))
    for (double a : cfg.a_grid) cells.emplace_back(a, n);
  auto rows = parallel_map<std::vector<Cell>>(cells.size(), cfg.threads,
                                              [&](std::size_t i) { return simulate_row(cells[i].first, cells[i].second); });
  for (auto& row : rows) {
    r.any_failed = r.any_failed || !std::get<bool>(row.back());
    r.table.add(std::move(row));
  }
  return r;
}

// ---------------------------------------------------------------------------
// bounds

inline SweepRow sweep_row(const SweepRow& base, const BoundCheck& c, std::optional<std::size_t> k = std::nullopt) {
  SweepRow r = base;
  r.k = k;
  r.bound_name = c.name;
  r.lhs = c.lhs;
  r.rhs = c.rhs;
  r.slack = c.slack;
  r.tolerance = c.tolerance;
  r.pass = c.pass;
  r.verdict = c.verdict();
  r.method = c.method();
  r.note = c.note;
  return r;
}

inline constexpr double kIdentityTolerance = 1e-10;

/// Every bound check for one universe.
template <Universe U>
std::vector<SweepRow> bound_rows(const Case& cs, const U& u, const RunConfig& cfg) {
  CorrelationEngine<U> eng(u, correlation_config(cfg));
  BoundSuite<U> suite(eng, fragment_policy(cfg));
  const std::size_t n = cs.n_env;
  SweepRow base;
  base.model = cs.model;
  base.a = cs.a;
  base.N = n;
  base.seed = cs.seed;
  base.H_S = eng.h_s();
  base.H_eps = eng.entropy_of(FragmentSpec{1});
  base.I = suite.site_mean([&](const FragmentSpec& f) { return eng.mi(f); });
  base.J = suite.site_mean([&](const FragmentSpec& f) { return eng.j(f).value; });
  base.D = suite.site_mean([&](const FragmentSpec& f) { return eng.discord(f); });
  base.delta = suite.mean_delta();
  const double h = base.H_S;

  std::vector<SweepRow> rows;
  auto add = [&](const BoundCheck& c, std::optional<std::size_t> k = std::nullopt) { rows.push_back(sweep_row(base, c, k)); };

  for (std::size_t k = 1; k < n; ++k)
    for (const auto& f : suite.catalog().of_size(k)) add(suite.result1(f), k);
  add(suite.result2());
  for (const auto& c : suite.eof_bound()) add(c, 1);
  add(suite.main2());
  for (double d : cfg.delta_levels) {
    const auto eq9 = suite.redundancy_bound(d);
    for (std::size_t i = 0; i < eq9.size(); ++i) add(eq9[i], i + 1);
    add(suite.discord_plateau(d));
    const auto w = suite.cmi_witness(d);
    add(w.check);
    if (w.chain) {
      const auto& ch = w.chain;
      const double worst = std::max({ch->plateau_deviation, ch->max_abs_cmi, ch->rederived_deviation});
      BoundCheck c = make_check("eq14", worst, 0.0, w.scan.exact, "k_delta=" + std::to_string(ch->k_delta));
      c.tolerance = kIdentityTolerance;
      c.pass = c.slack >= -c.tolerance;
      add(c);
    }
  }

  // Pointer-observable correlations between two single sites.
  if (n >= 2) {
    const FragmentSpec fk{1}, fl{2};
    std::optional<double> variation;
    if (cs.staged) variation = h - entropy(cmaybe_partial(*cs.staged, fk), system_site());
    const double ik = measured_information(u, fk, eng.argmax(fk));
    const double il = measured_information(u, fl, eng.argmax(fl));
    const double dstar = h < tol::kDegenerate ? 0.0 : std::clamp(1.0 - std::min(ik, il) / h, 0.0, 1.0);
    const auto r3 = check_result3(u, fk, fl, eng.argmax(fk), eng.argmax(fl), dstar, variation);
    add(r3.lower, 1);
    if (r3.upper) add(*r3.upper, 1);
  }

  // Purity identities on every scanned fragment.
  for (std::size_t k = 1; k < n; ++k) {
    double dev_h = 0.0, dev_i = 0.0;
    for (const auto& f : suite.catalog().of_size(k)) {
      const FragmentSpec g = env_complement(u.num_sites(), f);
      dev_h = std::max(dev_h, std::abs(eng.entropy_of(f) - eng.entropy_of(g.with(0))));
      dev_i = std::max(dev_i, std::abs(eng.mi(f) + eng.mi(g) - 2.0 * h));
    }
    for (auto [name, dev] : {std::pair{"purity_entropy", dev_h}, std::pair{"purity_mi", dev_i}}) {
      BoundCheck c = make_check(name, dev, 0.0, true);
      c.tolerance = kIdentityTolerance;
      c.pass = c.slack >= -c.tolerance;
      add(c, k);
    }
  }

  // J(S:e_i) from the grid oracle against the exact E_f of the complement.
  if (n >= 2 && u.dims()[1] == 2) {
    const std::size_t last = eng.symmetric() ? 1 : n;
    for (std::size_t i = 1; i <= last; ++i) {
      const FragmentSpec f{i};
      const FragmentSpec g = env_complement(u.num_sites(), f);
      const auto ef = eng.eof(g);
      if (!ef.exact) continue;
      CorrelationConfig grid = correlation_config(cfg);
      grid.method = CorrelationMethod::grid_oracle;
      const double j = classical_j(u, f, grid).value;
      BoundCheck c = make_check("kw_saturation", std::abs(j + ef.value - h), 0.0, true, "i=" + std::to_string(i));
      add(c, 1);
    }
  }
  return rows;
}

/// A failed check that is not excused by an unmet premise.
inline bool row_failed(const SweepRow& row) { return !row.pass && row.verdict != "conditional-pass"; }

inline int exit_code(const RunResult& r) { return r.any_failed ? 1 : 0; }

inline RunResult run_bounds(const RunConfig& cfg) {
  const auto corpus = build_corpus(cfg);
  RunResult r;
  r.table.columns = sweep_columns();
  r.table.meta = {{"command", command_name(cfg.command)},
                  {"seed", cfg.seed ? std::to_string(*cfg.seed) : std::string("none")},
                  {"fragment_average", "mean over all fragments of size k if C(N,k)<=1024, else over 256 seeded samples"},
                  {"pointer_basis", "argmax basis of J(S:F)"}};
  auto per_case = parallel_map<std::vector<SweepRow>>(corpus.size(), cfg.threads, [&](std::size_t i) {
    return std::visit([&](const auto& u) { return bound_rows(corpus[i], u, cfg); }, corpus[i].state);
  });
  for (const auto& rows : per_case)
    for (const auto& row : rows) {
      r.any_failed = r.any_failed || row_failed(row);
      r.table.add(to_cells(row));
    }
  return r;
}

// ---------------------------------------------------------------------------
// witness (entropies only)

inline std::vector<std::string> witness_columns() {
  return {"model", "a", "N", "seed", "H_S", "delta", "k", "cmi_min", "cmi_mean", "cmi_max", "count", "k_star", "verdict"};
}

template <Universe U>
std::vector<std::vector<Cell>> witness_rows(const Case& cs, const U& u, const RunConfig& cfg) {
  CorrelationEngine<U> eng(u, correlation_config(cfg));
  BoundSuite<U> suite(eng, fragment_policy(cfg));
  const Cell a = cs.a ? Cell{*cs.a} : Cell{};
  const Cell seed = cs.seed ? Cell{std::to_string(*cs.seed)} : Cell{};
  const auto n = static_cast<std::int64_t>(cs.n_env);
  std::vector<std::vector<Cell>> rows;
  for (double d : cfg.delta_levels) {
    const auto w = suite.witness_scan(d);
    const Cell ks = w.k_star ? Cell{static_cast<std::int64_t>(*w.k_star)} : Cell{};
    for (const auto& st : w.rows)
      rows.push_back({cs.model, a, n, seed, eng.h_s(), d, static_cast<std::int64_t>(st.k), st.min, st.mean, st.max,
                      static_cast<std::int64_t>(st.count), ks, w.verdict});
    rows.push_back({cs.model, a, n, seed, eng.h_s(), d, Cell{}, Cell{}, Cell{}, Cell{}, Cell{}, ks, w.verdict});
  }
  return rows;
}

inline RunResult run_witness(const RunConfig& cfg) {
  const auto corpus = build_corpus(cfg);
  RunResult r;
  r.table.columns = witness_columns();
  r.table.meta = {{"command", "witness"}, {"statistic", "CMI I(S:F_l|F_k) over l for each k"}};
  auto per_case = parallel_map<std::vector<std::vector<Cell>>>(corpus.size(), cfg.threads, [&](std::size_t i) {
    return std::visit([&](const auto& u) { return witness_rows(corpus[i], u, cfg); }, corpus[i].state);
  });
  for (auto& rows : per_case)
    for (auto& row : rows) r.table.add(std::move(row));
  return r;
}

// ---------------------------------------------------------------------------
// pip (partial-information plot)

inline std::vector<std::string> pip_columns() {
  return {"model", "a", "N", "seed", "H_S", "quantity", "k", "min", "mean", "max", "count"};
}

template <Universe U>
std::vector<std::vector<Cell>> pip_rows(const Case& cs, const U& u, const RunConfig& cfg) {
  CorrelationEngine<U> eng(u, correlation_config(cfg));
  BoundSuite<U> suite(eng, fragment_policy(cfg));
  const Cell a = cs.a ? Cell{*cs.a} : Cell{};
  const Cell seed = cs.seed ? Cell{std::to_string(*cs.seed)} : Cell{};
  std::vector<std::vector<Cell>> rows;
  for (Quantity q : cfg.quantities)
    for (const auto& st : suite.partial_information_plot(q))
      rows.push_back({cs.model, a, static_cast<std::int64_t>(cs.n_env), seed, eng.h_s(), std::string(quantity_name(q)),
                      static_cast<std::int64_t>(st.k), st.min, st.mean, st.max, static_cast<std::int64_t>(st.count)});
  return rows;
}

inline RunResult run_pip(const RunConfig& cfg) {
  const auto corpus = build_corpus(cfg);
  RunResult r;
  r.table.columns = pip_columns();
  r.table.meta = {{"command", "pip"}};
  auto per_case = parallel_map<std::vector<std::vector<Cell>>>(corpus.size(), cfg.threads, [&](std::size_t i) {
    return std::visit([&](const auto& u) { return pip_rows(corpus[i], u, cfg); }, corpus[i].state);
  });
  for (auto& rows : per_case)
    for (auto& row : rows) r.table.add(std::move(row));
  return r;
}

inline RunResult run(const RunConfig& cfg) {
  switch (cfg.command) {
    case Command::simulate: return run_simulate(cfg);
    case Command::bounds:
    case Command::random_stress: return run_bounds(cfg);
    case Command::witness: return run_witness(cfg);
    case Command::pip: return run_pip(cfg);
  }
  throw Error("unknown command");
}

inline void write_table(const Table& t, const RunConfig& cfg, std::ostream& fallback) {
  auto emit = [&](std::ostream& os) {
    if (cfg.format == Format::json) write_json(os, t);
    else write_csv(os, t);
  };
  if (cfg.output_path.empty()) {
    emit(fallback);
    return;
  }
  std::ofstream out(cfg.output_path);
  if (!out) throw Error("cannot write output file " + cfg.output_path);
  emit(out);
  out.flush();
  if (!out) throw Error("error writing output file " + cfg.output_path);
}

// ---------------------------------------------------------------------------
// Entry point. Exit codes: 0 all checks pass, 1 a check failed, 2 configuration or IO error.

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Quantum correlation bounds for system-environment states", "darwinbounds"};
  app.set_version_flag("--version", "darwinbounds 1.0");
  std::string command;
  app.add_option("command", command, "simulate | bounds | witness | pip | random-stress")->required();

  struct Flag {
    const char* name;
    const char* help;
  };
  const Flag flags[] = {
      {"model", "cmaybe | ghz | random-branching | haar | file (comma list allowed)"},
      {"a-grid", "c-maybe parameters: x,y,... or lin:start:stop:count"},
      {"n-env", "environment sizes: n,m,... or lo..hi"},
      {"delta", "delta levels"},
      {"seed", "64-bit seed (fallback: DARWINBOUNDS_SEED)"},
      {"out", "output path (default stdout)"},
      {"format", "csv | json"},
      {"restarts", "optimizer restarts"},
      {"dense-cap", "largest dense state dimension"},
      {"state", "state file for --model file"},
      {"samples", "number of sampled states"},
      {"grid-resolution", "Bloch grid resolution for the grid oracle"},
      {"quantity", "pip quantities: I, J, J_rev, D"},
      {"threads", "worker threads (0: all cores)"},
  };
  std::map<std::string, std::vector<std::string>> given;
  std::map<std::string, CLI::Option*> opts;
  for (const auto& f : flags)
    opts[f.name] = app.add_option(std::string("--") + f.name, given[f.name], f.help)->allow_extra_args(false);
  std::string config_path;
  app.add_option("--config", config_path, "key=value config file; flags override it");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    ConfigMap m = config_path.empty() ? ConfigMap{} : load_config_file(config_path);
    for (const auto& [name, opt] : opts)
      if (opt->count() > 0) m[name] = given[name];
    std::optional<std::string> env_seed;
    if (const char* s = std::getenv("DARWINBOUNDS_SEED")) env_seed = s;
    const RunConfig cfg = config_from_map(parse_command(command), m, env_seed);
    RunResult r = run(cfg);
    write_table(r.table, cfg, out);
    return exit_code(r);
  } catch (const std::exception& e) {
    err << "darwinbounds: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace darwinbounds
