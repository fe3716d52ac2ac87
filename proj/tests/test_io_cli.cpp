#include "darwinbounds/cli.hpp"
#include "darwinbounds/io.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

using namespace darwinbounds;
namespace fs = std::filesystem;

namespace {

struct Csv {
  std::vector<std::string> comments;
  std::vector<std::string> header;
  std::vector<std::map<std::string, std::string>> rows;
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

Csv parse_csv(const std::string& text) {
  Csv csv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("#", 0) == 0) {
      csv.comments.push_back(line);
      continue;
    }
    if (csv.header.empty()) {
      csv.header = split_csv_line(line);
      continue;
    }
    const auto cells = split_csv_line(line);
    EXPECT_EQ(cells.size(), csv.header.size()) << line;
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < cells.size() && i < csv.header.size(); ++i) row[csv.header[i]] = cells[i];
    csv.rows.push_back(std::move(row));
  }
  return csv;
}

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "darwinbounds");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

double num(const std::map<std::string, std::string>& row, const std::string& key) { return std::stod(row.at(key)); }

fs::path temp_dir() {
  const fs::path p = fs::temp_directory_path() / ("darwinbounds_test_" + std::to_string(::getpid()));
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

class SeedEnv {
 public:
  explicit SeedEnv(const char* value) {
    if (const char* old = std::getenv("DARWINBOUNDS_SEED")) old_ = old;
    if (value) ::setenv("DARWINBOUNDS_SEED", value, 1);
    else ::unsetenv("DARWINBOUNDS_SEED");
  }
  ~SeedEnv() {
    if (old_) ::setenv("DARWINBOUNDS_SEED", old_->c_str(), 1);
    else ::unsetenv("DARWINBOUNDS_SEED");
  }

 private:
  std::optional<std::string> old_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Tables

TEST(Table, CsvLayout) {
  Table t;
  t.columns = {"name", "x", "n", "ok", "empty"};
  t.meta = {{"command", "test"}};
  t.add({std::string("a,b"), 1.0 / 3.0, std::int64_t{7}, true, Cell{}});
  t.add({std::string("q\"uote"), 1e-20, std::int64_t{-1}, false, Cell{}});
  std::ostringstream os;
  write_csv(os, t);
  EXPECT_EQ(os.str(),
            "# schema=1\n# command=test\nname,x,n,ok,empty\n\"a,b\",0.333333333333,7,true,\n\"q\"\"uote\",1e-20,-1,false,\n");
  const auto csv = parse_csv(os.str());
  EXPECT_EQ(csv.rows[0].at("name"), "a,b");
  EXPECT_EQ(csv.rows[1].at("name"), "q\"uote");
}

TEST(Table, JsonMirrorsCsv) {
  Table t;
  t.columns = {"name", "x", "n", "ok", "empty"};
  t.meta = {{"command", "test"}};
  t.add({std::string("a"), 2.0 / 3.0, std::int64_t{3}, true, Cell{}});
  std::ostringstream os;
  write_json(os, t);
  const auto j = nlohmann::json::parse(os.str());
  EXPECT_EQ(j["schema"], 1);
  EXPECT_EQ(j["meta"]["command"], "test");
  ASSERT_EQ(j["rows"].size(), 1U);
  EXPECT_EQ(j["rows"][0]["name"], "a");
  EXPECT_DOUBLE_EQ(j["rows"][0]["x"].get<double>(), 0.666666666667);
  EXPECT_EQ(j["rows"][0]["n"], 3);
  EXPECT_EQ(j["rows"][0]["ok"], true);
  EXPECT_TRUE(j["rows"][0]["empty"].is_null());
}

TEST(Table, RejectsBadRows) {
  Table t;
  t.columns = {"a", "b"};
  EXPECT_THROW(t.add({1.0}), Error);
  t.add({1.0, std::numeric_limits<double>::infinity()});
  std::ostringstream os;
  EXPECT_THROW(write_csv(os, t), Error);
  EXPECT_THROW(to_json(t), Error);
  Table other;
  other.columns = {"x"};
  EXPECT_THROW(t.append(other), Error);
}

TEST(SweepRowTest, ValidatesPassAgainstSlack) {
  SweepRow r;
  r.bound_name = "x";
  r.lhs = 1.0;
  r.rhs = 0.5;
  r.slack = -0.5;
  r.tolerance = 1e-6;
  r.pass = true;
  EXPECT_THROW(r.validate(), Error);
  r.pass = false;
  EXPECT_NO_THROW(r.validate());
  EXPECT_EQ(to_cells(r).size(), sweep_columns().size());
  r.J = std::nan("");
  EXPECT_THROW(r.validate(), Error);
}

TEST(ExitCode, FailedRowsAndConditionals) {
  SweepRow r;
  r.pass = false;
  r.verdict = "fail";
  EXPECT_TRUE(row_failed(r));
  r.verdict = "conditional-pass";
  EXPECT_FALSE(row_failed(r));
  r.pass = true;
  r.verdict = "pass";
  EXPECT_FALSE(row_failed(r));
  RunResult res;
  EXPECT_EQ(exit_code(res), 0);
  res.any_failed = true;
  EXPECT_EQ(exit_code(res), 1);
}

// ---------------------------------------------------------------------------
// State files

TEST(StateFile, RoundTrip) {
  const auto dir = temp_dir();
  for (std::uint64_t seed : {1U, 2U, 3U}) {
    const auto psi = haar_random_pure({2, 3, 2}, seed);
    const auto path = (dir / "rt.state").string();
    save_state_file(path, psi);
    const auto back = load_state_file(path);
    EXPECT_EQ(back.dims(), psi.dims());
    EXPECT_LT((back.amplitudes() - psi.amplitudes()).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(StateFile, ParseErrorsCarryLineNumbers) {
  auto message = [](const std::string& text) {
    try {
      parse_state(text);
    } catch (const Error& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_EQ(message("dimz: 2\n1 0\n0 0\n"), "line 1: expected 'dims:' header");
  EXPECT_EQ(message("# comment\n\ndims: 2 x\n"), "line 3: bad dimension 'x'");
  EXPECT_EQ(message("dims: 2 0\n"), "line 1: bad dimension '0'");
  EXPECT_EQ(message("dims: 2\n1 0\n0\n"), "line 3: expected 're im'");
  EXPECT_EQ(message("dims: 2\n1 0\n0 0\n0 0\n"), "line 4: more amplitudes than the dims allow");
  EXPECT_EQ(message("dims: 2\n1 0 5\n0 0\n"), "line 2: expected 're im'");
  EXPECT_NE(message("dims: 2 2\n1 0\n").find("1 amplitudes, expected 4"), std::string::npos);
  EXPECT_EQ(message(""), "state file is empty");
}

TEST(StateFile, NormalizationTolerance) {
  // Squared norm off by 4e-9: accepted and rescaled.
  const auto ok = parse_state("dims: 2\n0.6 0\n0.8000000025 0\n");
  EXPECT_NEAR(ok.amplitudes().squaredNorm(), 1.0, 1e-15);
  // Off by 4e-6: rejected, no silent renormalization.
  EXPECT_THROW(parse_state("dims: 2\n0.6 0\n0.8000025 0\n"), Error);
  EXPECT_THROW(parse_state("dims: 2\n0 0\n0 0\n"), Error);
}

TEST(StateFile, BellFixture) {
  const auto psi = load_state_file(std::string(DARWINBOUNDS_TEST_DATA) + "/bell.state");
  ASSERT_EQ(psi.dims(), (std::vector<std::size_t>{2, 2}));
  EXPECT_NEAR(entropy(psi, FragmentSpec{0}), 1.0, 1e-12);
  EXPECT_NEAR(entropy(psi, FragmentSpec{1}), 1.0, 1e-12);
  EXPECT_NEAR(entropy(psi, FragmentSpec{0, 1}), 0.0, 1e-12);
  EXPECT_NEAR(mutual_information(psi, FragmentSpec{0}, FragmentSpec{1}), 2.0, 1e-12);
  EXPECT_NEAR(classical_j(psi, FragmentSpec{1}).value, 1.0, 1e-10);
  EXPECT_THROW(load_state_file("/nonexistent/bell.state"), Error);
}

// ---------------------------------------------------------------------------
// Configuration

TEST(Config, ParsesRepeatedKeysAndComments) {
  const auto m = parse_config("# sweep\nmodel = cmaybe\n--n-env=2\nn-env = 4\n\n  a-grid=0,0.5 # inline stays\n");
  EXPECT_EQ(m.at("model"), (std::vector<std::string>{"cmaybe"}));
  EXPECT_EQ(m.at("n-env"), (std::vector<std::string>{"2", "4"}));
  try {
    parse_config("model=ghz\nnonsense\n");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()), "line 2: expected key=value");
  }
}

TEST(Config, BuildsRunConfig) {
  ConfigMap m;
  m["model"] = {"cmaybe,ghz"};
  m["a-grid"] = {"lin:0:1:5"};
  m["n-env"] = {"2..4", "7"};
  m["delta"] = {"0", "0.1"};
  m["format"] = {"json"};
  const auto c = config_from_map(Command::bounds, m);
  EXPECT_EQ(c.models, (std::vector<Model>{Model::cmaybe, Model::ghz}));
  EXPECT_EQ(c.a_grid, (std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0}));
  EXPECT_EQ(c.n_env, (std::vector<std::size_t>{2, 3, 4, 7}));
  EXPECT_EQ(c.delta_levels, (std::vector<double>{0.0, 0.1}));
  EXPECT_EQ(c.format, Format::json);
  EXPECT_FALSE(c.seed.has_value());

  const auto d = config_from_map(Command::simulate, {});
  EXPECT_EQ(d.a_grid.size(), 101U);
  EXPECT_EQ(d.n_env_for(Model::cmaybe), (std::vector<std::size_t>{2, 4, 8}));
}

TEST(Config, Errors) {
  EXPECT_THROW(config_from_map(Command::bounds, {{"colour", {"red"}}}), Error);
  EXPECT_THROW(config_from_map(Command::bounds, {{"a-grid", {"1.5"}}}), Error);
  EXPECT_THROW(config_from_map(Command::bounds, {{"seed", {"12x"}}}), Error);
  EXPECT_THROW(config_from_map(Command::bounds, {{"seed", {"1", "2"}}}), Error);
  EXPECT_THROW(config_from_map(Command::bounds, {{"dense-cap", {"100000"}}}), Error);
  EXPECT_THROW(config_from_map(Command::bounds, {{"model", {"haar"}}}), Error);  // sampling without a seed
  EXPECT_THROW(config_from_map(Command::simulate, {{"model", {"ghz"}}}), Error);
  EXPECT_THROW(config_from_map(Command::bounds, {{"model", {"file"}}}), Error);
  EXPECT_THROW(config_from_map(Command::bounds, {{"model", {"haar"}}, {"seed", {"1"}}, {"n-env", {"17"}}}), Error);
  const auto c = config_from_map(Command::bounds, {{"model", {"haar"}}}, std::string("99"));
  EXPECT_EQ(c.seed, 99U);
}

// ---------------------------------------------------------------------------
// Command line

TEST(Cli, SimulateEndpoints) {
  auto r = cli({"simulate", "--a-grid", "0", "--n-env", "4"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto csv = parse_csv(r.out);
  ASSERT_EQ(csv.rows.size(), 1U);
  EXPECT_EQ(csv.comments.front(), "# schema=1");
  EXPECT_NEAR(num(csv.rows[0], "J"), 1.0, 1e-12);
  EXPECT_NEAR(num(csv.rows[0], "D"), 0.0, 1e-12);
  EXPECT_NEAR(num(csv.rows[0], "delta"), 0.0, 1e-12);
  EXPECT_NEAR(num(csv.rows[0], "H_S"), 1.0, 1e-12);

  r = cli({"simulate", "--a-grid", "1", "--n-env", "4"});
  ASSERT_EQ(r.code, 0) << r.err;
  csv = parse_csv(r.out);
  ASSERT_EQ(csv.rows.size(), 1U);
  for (const char* col : {"H_S", "H_eps", "I", "J", "D", "delta", "bound"}) EXPECT_NEAR(num(csv.rows[0], col), 0.0, 1e-12) << col;
}

TEST(Cli, SimulateFigureSweep) {
  const auto r = cli({"simulate"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = parse_csv(r.out);
  ASSERT_EQ(csv.rows.size(), 303U);
  for (const auto& row : csv.rows) {
    EXPECT_LE(num(row, "max_abs_dev"), 1e-6);
    EXPECT_EQ(row.at("agree"), "true");
  }
}

TEST(Cli, BoundsGhzAllPassAndJson) {
  const auto r = cli({"bounds", "--model", "ghz", "--n-env", "2..5", "--format", "json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["schema"], 1);
  EXPECT_EQ(j["meta"]["pointer_basis"], "argmax basis of J(S:F)");
  ASSERT_GT(j["rows"].size(), 0U);
  std::set<std::string> names;
  for (const auto& row : j["rows"]) {
    EXPECT_TRUE(row["pass"].get<bool>()) << row.dump();
    names.insert(row["bound_name"].get<std::string>());
  }
  for (const char* n : {"result1", "result2", "eq7", "eq7_site", "eq8", "eq9", "eq12", "eq14", "eq15", "result3_lower",
                        "purity_entropy", "purity_mi", "kw_saturation"})
    EXPECT_TRUE(names.count(n)) << n;
}

TEST(Cli, SeededRunsAreByteIdentical) {
  const std::vector<std::string> args{"random-stress", "--seed", "11", "--samples", "3", "--threads", "2"};
  const auto a = cli(args);
  const auto b = cli(args);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  const auto csv = parse_csv(a.out);
  std::set<std::string> models;
  for (const auto& row : csv.rows) models.insert(row.at("model"));
  EXPECT_EQ(models, (std::set<std::string>{"haar", "random-branching"}));
  const auto c = cli({"random-stress", "--seed", "12", "--samples", "3"});
  EXPECT_NE(a.out, c.out);
}

TEST(Cli, SeedRequiredForSampling) {
  {
    SeedEnv env(nullptr);
    const auto r = cli({"random-stress", "--samples", "2"});
    EXPECT_EQ(r.code, 2);
    EXPECT_TRUE(r.out.empty());
    EXPECT_NE(r.err.find("needs a seed"), std::string::npos) << r.err;
  }
  {
    SeedEnv env("11");
    const auto from_env = cli({"random-stress", "--samples", "3", "--threads", "1"});
    ASSERT_EQ(from_env.code, 0) << from_env.err;
    EXPECT_EQ(from_env.out, cli({"random-stress", "--samples", "3", "--seed", "11", "--threads", "1"}).out);
  }
}

TEST(Cli, StateFileModel) {
  const auto ok = cli({"bounds", "--model", "file", "--state", std::string(DARWINBOUNDS_TEST_DATA) + "/bell.state"});
  ASSERT_EQ(ok.code, 0) << ok.err;
  const auto csv = parse_csv(ok.out);
  ASSERT_FALSE(csv.rows.empty());
  EXPECT_EQ(csv.rows[0].at("model"), "file");
  EXPECT_NEAR(num(csv.rows[0], "H_S"), 1.0, 1e-12);

  const auto dir = temp_dir();
  const auto bad = dir / "corrupt.state";
  write_file(bad, "dims: 2 2\n0.7 0\n0 0\n0 zero\n0.7 0\n");
  const auto r = cli({"bounds", "--model", "file", "--state", bad.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(r.out.empty());
  EXPECT_NE(r.err.find("line 4"), std::string::npos) << r.err;

  write_file(bad, "dims: 2 2\n0.7 0\n0 0\n0 0\n0.7 0\n");
  const auto n = cli({"bounds", "--model", "file", "--state", bad.string()});
  EXPECT_EQ(n.code, 2);
  EXPECT_NE(n.err.find("not normalized"), std::string::npos) << n.err;
}

TEST(Cli, ConfigFileWithFlagOverride) {
  const auto dir = temp_dir();
  const auto cfg = dir / "run.cfg";
  write_file(cfg, "# endpoints\na-grid = 0.5\nn-env = 3\nn-env = 5\n");
  auto r = cli({"simulate", "--config", cfg.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto csv = parse_csv(r.out);
  ASSERT_EQ(csv.rows.size(), 2U);
  EXPECT_EQ(csv.rows[0].at("a"), "0.5");
  EXPECT_EQ(csv.rows[1].at("N"), "5");

  r = cli({"simulate", "--config", cfg.string(), "--a-grid", "0,1"});
  ASSERT_EQ(r.code, 0) << r.err;
  csv = parse_csv(r.out);
  ASSERT_EQ(csv.rows.size(), 4U);
  EXPECT_EQ(csv.rows[0].at("a"), "0");
  EXPECT_EQ(csv.rows[1].at("a"), "1");

  EXPECT_EQ(cli({"simulate", "--config", (dir / "missing.cfg").string()}).code, 2);
  write_file(cfg, "a-grid\n");
  EXPECT_EQ(cli({"simulate", "--config", cfg.string()}).code, 2);
}

TEST(Cli, OutputFile) {
  const auto dir = temp_dir();
  const auto out = dir / "sim.csv";
  const auto r = cli({"simulate", "--a-grid", "0.5", "--n-env", "2", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(r.out.empty());
  std::ifstream in(out);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(parse_csv(ss.str()).rows.size(), 1U);
  EXPECT_EQ(cli({"simulate", "--a-grid", "0.5", "--out", "/nonexistent/dir/x.csv"}).code, 2);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"plot"}).code, 2);
  EXPECT_EQ(cli({"simulate", "--bogus", "1"}).code, 2);
  EXPECT_EQ(cli({"simulate", "--format", "xml"}).code, 2);
  EXPECT_EQ(cli({"simulate", "--a-grid", "2"}).code, 2);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(Cli, WitnessVerdicts) {
  auto verdicts = [](const CliRun& r) {
    std::map<std::string, std::string> out;  // delta -> verdict
    for (const auto& row : parse_csv(r.out).rows) out[row.at("delta")] = row.at("verdict");
    return out;
  };
  const auto g = cli({"witness", "--model", "ghz", "--n-env", "6", "--delta", "0"});
  ASSERT_EQ(g.code, 0) << g.err;
  EXPECT_EQ(verdicts(g).at("0"), "objective at delta=0, k_delta=1");

  const auto weak = cli({"witness", "--a-grid", "0.95", "--n-env", "8", "--delta", "0,0.01,0.05"});
  ASSERT_EQ(weak.code, 0) << weak.err;
  for (const auto& [d, v] : verdicts(weak)) EXPECT_EQ(v.rfind("not witnessed", 0), 0U) << d << " " << v;

  const auto mid = cli({"witness", "--a-grid", "0.3", "--n-env", "8", "--delta", "0.25"});
  ASSERT_EQ(mid.code, 0) << mid.err;
  EXPECT_EQ(verdicts(mid).at("0.25").rfind("consistent at delta=0.25", 0), 0U);
}

TEST(Cli, PartialInformationPlot) {
  const auto r = cli({"pip", "--model", "ghz", "--n-env", "6", "--quantity", "I"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = parse_csv(r.out);
  ASSERT_EQ(csv.rows.size(), 5U);
  for (const auto& row : csv.rows) EXPECT_NEAR(num(row, "mean"), 1.0, 1e-12);

  const auto c = cli({"pip", "--a-grid", "0.4", "--n-env", "6", "--quantity", "I,J,D"});
  ASSERT_EQ(c.code, 0) << c.err;
  std::map<std::string, std::map<int, double>> mean;
  for (const auto& row : parse_csv(c.out).rows) mean[row.at("quantity")][std::stoi(row.at("k"))] = num(row, "mean");
  const double h = closed_forms({0.4, 6}).H_S;
  for (int k = 1; k <= 5; ++k) EXPECT_NEAR(mean["I"][k] + mean["I"][6 - k], 2 * h, 1e-10);
  for (int k = 1; k <= 5; ++k) EXPECT_NEAR(mean["D"][k], mean["I"][k] - mean["J"][k], 1e-10);
}
