#pragma once

// Report tables (CSV / JSON), state files and key=value config files.

#include "darwinbounds/qstate.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace darwinbounds {

inline constexpr int kSchemaVersion = 1;
inline constexpr double kStateFileNormTolerance = 1e-8;

using Cell = std::variant<std::monostate, std::string, double, std::int64_t, bool>;

inline std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

inline std::string cell_text(const Cell& c) {
  struct {
    std::string operator()(std::monostate) const { return {}; }
    std::string operator()(const std::string& s) const { return s; }
    std::string operator()(double x) const { return format_number(x); }
    std::string operator()(std::int64_t x) const { return std::to_string(x); }
    std::string operator()(bool b) const { return b ? "true" : "false"; }
  } v;
  return std::visit(v, c);
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  std::vector<std::pair<std::string, std::string>> meta;

  void add(std::vector<Cell> row) {
    if (row.size() != columns.size()) throw Error("row has " + std::to_string(row.size()) + " cells, table has " +
                                                  std::to_string(columns.size()) + " columns");
    rows.push_back(std::move(row));
  }

  void append(const Table& other) {
    if (other.columns != columns) throw Error("cannot append tables with different columns");
    rows.insert(rows.end(), other.rows.begin(), other.rows.end());
  }

  /// Every numeric cell must be finite.
  void validate() const {
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < columns.size(); ++c)
        if (const auto* x = std::get_if<double>(&rows[r][c]); x && !std::isfinite(*x))
          throw Error("row " + std::to_string(r) + ": non-finite value in column " + columns[c]);
  }
};

inline void write_csv(std::ostream& os, const Table& t) {
  t.validate();
  os << "# schema=" << kSchemaVersion << '\n';
  for (const auto& [k, v] : t.meta) os << "# " << k << '=' << v << '\n';
  for (std::size_t c = 0; c < t.columns.size(); ++c) os << (c ? "," : "") << csv_escape(t.columns[c]);
  os << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << csv_escape(cell_text(row[c]));
    os << '\n';
  }
}

inline nlohmann::ordered_json to_json(const Table& t) {
  t.validate();
  nlohmann::ordered_json j;
  j["schema"] = kSchemaVersion;
  auto& meta = j["meta"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : t.meta) meta[k] = v;
  auto& rows = j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : t.rows) {
    nlohmann::ordered_json o = nlohmann::ordered_json::object();
    for (std::size_t c = 0; c < row.size(); ++c) {
      const auto& cell = row[c];
      auto& slot = o[t.columns[c]];
      if (std::holds_alternative<std::monostate>(cell)) slot = nullptr;
      else if (const auto* s = std::get_if<std::string>(&cell)) slot = *s;
      // Same 12 significant digits as the CSV output.
      else if (const auto* x = std::get_if<double>(&cell)) slot = std::strtod(format_number(*x).c_str(), nullptr);
      else if (const auto* i = std::get_if<std::int64_t>(&cell)) slot = *i;
      else slot = std::get<bool>(cell);
    }
    rows.push_back(std::move(o));
  }
  return j;
}

inline void write_json(std::ostream& os, const Table& t) { os << to_json(t).dump(2) << '\n'; }

// ---------------------------------------------------------------------------
// One row per bound check

struct SweepRow {
  std::string model;
  std::optional<double> a;
  std::size_t N = 0;
  std::optional<std::size_t> k;
  std::optional<std::uint64_t> seed;
  double H_S = 0.0;
  std::optional<double> H_eps;
  std::optional<double> I, J, D, delta;
  std::string bound_name;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
  double tolerance = 0.0;
  bool pass = true;
  std::string verdict;
  std::string method;
  std::string note;

  void validate() const {
    for (double x : {H_S, lhs, rhs, slack, tolerance})
      if (!std::isfinite(x)) throw Error("sweep row " + bound_name + ": non-finite value");
    for (const auto& x : {a, H_eps, I, J, D, delta})
      if (x && !std::isfinite(*x)) throw Error("sweep row " + bound_name + ": non-finite value");
    if (pass != (slack >= -tolerance)) throw Error("sweep row " + bound_name + ": pass flag inconsistent with slack");
  }
};

inline std::vector<std::string> sweep_columns() {
  return {"model", "a", "N", "k", "seed", "H_S", "H_eps", "I", "J", "D", "delta", "bound_name",
          "lhs", "rhs", "slack", "tolerance", "pass", "verdict", "method", "note"};
}

inline std::vector<Cell> to_cells(const SweepRow& r) {
  r.validate();
  auto opt = [](const std::optional<double>& x) -> Cell { return x ? Cell{*x} : Cell{}; };
  return {r.model,
          opt(r.a),
          static_cast<std::int64_t>(r.N),
          r.k ? Cell{static_cast<std::int64_t>(*r.k)} : Cell{},
          r.seed ? Cell{std::to_string(*r.seed)} : Cell{},
          r.H_S,
          opt(r.H_eps),
          opt(r.I),
          opt(r.J),
          opt(r.D),
          opt(r.delta),
          r.bound_name,
          r.lhs,
          r.rhs,
          r.slack,
          r.tolerance,
          r.pass,
          r.verdict,
          r.method,
          r.note};
}

// ---------------------------------------------------------------------------
// State files: "dims: d0 d1 ..." followed by one "re im" line per amplitude.

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool skippable(const std::string& line) {
  const std::string t = trim(line);
  return t.empty() || t[0] == '#';
}

[[noreturn]] inline void parse_error(std::size_t line, const std::string& what) {
  throw Error("line " + std::to_string(line) + ": " + what);
}

}  // namespace detail

inline PureState parse_state(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::size_t> dims;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::skippable(line)) continue;
    const std::string t = detail::trim(line);
    if (t.rfind("dims:", 0) != 0) detail::parse_error(lineno, "expected 'dims:' header");
    std::istringstream ss(t.substr(5));
    std::string tok;
    while (ss >> tok) {
      std::size_t used = 0;
      long long d = 0;
      try {
        d = std::stoll(tok, &used);
      } catch (const std::exception&) {
        detail::parse_error(lineno, "bad dimension '" + tok + "'");
      }
      if (used != tok.size() || d <= 0) detail::parse_error(lineno, "bad dimension '" + tok + "'");
      dims.push_back(static_cast<std::size_t>(d));
    }
    if (dims.empty()) detail::parse_error(lineno, "no dimensions in header");
    break;
  }
  if (dims.empty()) throw Error("state file is empty");
  const std::size_t total = detail::product(dims);
  if (total > (std::size_t{1} << 26)) throw Error("state dimension too large");
  CVector amps(static_cast<Eigen::Index>(total));
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::skippable(line)) continue;
    std::istringstream ss(line);
    double re = 0.0, im = 0.0;
    std::string extra;
    if (!(ss >> re >> im) || (ss >> extra)) detail::parse_error(lineno, "expected 're im'");
    if (!std::isfinite(re) || !std::isfinite(im)) detail::parse_error(lineno, "non-finite amplitude");
    if (n == total) detail::parse_error(lineno, "more amplitudes than the dims allow");
    amps[static_cast<Eigen::Index>(n++)] = Complex(re, im);
  }
  if (n != total) throw Error("state file has " + std::to_string(n) + " amplitudes, expected " + std::to_string(total));
  const double n2 = amps.squaredNorm();
  if (std::abs(n2 - 1.0) > kStateFileNormTolerance)
    throw Error("state file not normalized (squared norm " + format_number(n2) + ")");
  // Within tolerance: remove the rounding left by the text format.
  amps /= std::sqrt(n2);
  return PureState(std::move(dims), std::move(amps));
}

inline PureState parse_state(const std::string& text) {
  std::istringstream in(text);
  return parse_state(in);
}

inline PureState load_state_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open state file " + path);
  try {
    return parse_state(in);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

inline void write_state(std::ostream& os, const PureState& s) {
  os << "dims:";
  for (auto d : s.dims()) os << ' ' << d;
  os << '\n';
  char buf[80];
  for (Eigen::Index i = 0; i < s.amplitudes().size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g\n", s.amplitudes()[i].real(), s.amplitudes()[i].imag());
    os << buf;
  }
}

inline void save_state_file(const std::string& path, const PureState& s) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write state file " + path);
  write_state(out, s);
  if (!out) throw Error("error writing state file " + path);
}

// ---------------------------------------------------------------------------
// Config files: key=value lines, '#' comments, repeated keys append.

using ConfigMap = std::map<std::string, std::vector<std::string>>;

inline ConfigMap parse_config(std::istream& in) {
  ConfigMap out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::skippable(line)) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) detail::parse_error(lineno, "expected key=value");
    std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) detail::parse_error(lineno, "empty key");
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    out[key].push_back(value);
  }
  return out;
}

inline ConfigMap parse_config(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline ConfigMap load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path);
  try {
    return parse_config(in);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

}  // namespace darwinbounds
