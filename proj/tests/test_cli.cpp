// Problem-file parsing and end-to-end runs of the command-line driver.

#include "riemalm/experiments.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace riemalm;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string &name) {
  const fs::path dir = fs::temp_directory_path() /
                       ("riemalm_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Runs the driver with `args` (output directory appended as --out) and
// returns its exit status.
int run_cli(const std::string &args, const fs::path &out) {
  fs::create_directories(out);
  const std::string cmd = std::string(RIEMALM_CLI) + " --out " + out.string() + " " + args +
                          " > " + (out / "log.txt").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path &p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

void write_file(const fs::path &p, const std::string &text) { std::ofstream(p) << text; }

int column(const std::vector<std::string> &header, const std::string &name) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

// Header present, k strictly increasing, listed columns nonnegative.
void expect_history_invariants(const fs::path &p) {
  const auto rows = read_csv(p);
  ASSERT_GE(rows.size(), 2u) << p;
  const auto &h = rows.front();
  ASSERT_EQ(h.front(), "k");
  long prev = -1;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    ASSERT_EQ(rows[i].size(), h.size()) << "row " << i;
    const long k = std::stol(rows[i][0]);
    EXPECT_GT(k, prev);
    prev = k;
    for (const char *name : {"rho", "R", "V", "grad_norm", "eps_k", "dist_to_ref", "R_max"}) {
      const int c = column(h, name);
      ASSERT_GE(c, 0) << name;
      const std::string &cell = rows[i][static_cast<std::size_t>(c)];
      if (!cell.empty()) {
        EXPECT_GE(std::stod(cell), 0.0) << name << " row " << i;
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Problem files

TEST(Config, MinimalFileUsesDefaults) {
  const RunConfig cfg = parse_problem_string("[problem]\nfamily=circle\n");
  EXPECT_EQ(cfg.problem.family, "circle");
  EXPECT_TRUE(cfg.warnings.empty());
  EXPECT_TRUE(cfg.alm_overrides.empty());
  EXPECT_EQ(cfg.alm.rho0, ALMConfig{}.rho0);
  EXPECT_EQ(cfg.alm.kkt_tol, ALMConfig{}.kkt_tol);
  EXPECT_FALSE(cfg.problem.matrix.has_value());
}

TEST(Config, MatrixBlockIsRowMajor) {
  const RunConfig cfg =
      parse_problem_string("[problem]\nfamily = sphere-l1\n[matrix]\n1 2\n3 4\n");
  ASSERT_TRUE(cfg.problem.matrix.has_value());
  const Mat &A = *cfg.problem.matrix;
  ASSERT_EQ(A.rows(), 2);
  ASSERT_EQ(A.cols(), 2);
  EXPECT_EQ(A(0, 1), 2.0);
  EXPECT_EQ(A(1, 0), 3.0);
}

TEST(Config, AlmKeysAndComments) {
  const RunConfig cfg = parse_problem_string(
      "# run\n[problem]\nfamily = rmc   # trailing\nmode = random\nm = 40\nseed = 9\n"
      "[alm]\nrho0 = 10\nmax_outer = 7\n");
  EXPECT_EQ(cfg.problem.family, "rmc");
  EXPECT_EQ(cfg.problem.m, 40);
  EXPECT_EQ(cfg.problem.seed, 9u);
  EXPECT_EQ(cfg.alm.rho0, 10.0);
  EXPECT_EQ(cfg.alm.max_outer, 7);
  EXPECT_EQ(cfg.alm_overrides, (std::set<std::string>{"rho0", "max_outer"}));
  const ALMConfig merged = merge_alm(ALMConfig{}, cfg);
  EXPECT_EQ(merged.rho0, 10.0);
  EXPECT_EQ(merged.gamma, ALMConfig{}.gamma);
}

TEST(Config, RangeViolationCarriesLine) {
  try {
    parse_problem_string("[problem]\nfamily=circle\n[alm]\nrho0 = -1\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError &e) {
    EXPECT_EQ(e.line(), 4);
    EXPECT_NE(std::string(e.what()).find("rho0"), std::string::npos);
  }
}

TEST(Config, UnparseableValueCarriesLine) {
  try {
    parse_problem_string("[problem]\nfamily=circle\n\n[alm]\ngamma = ten\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError &e) {
    EXPECT_EQ(e.line(), 5);
  }
  try {
    parse_problem_string("[problem]\nmu = 0.5x\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError &e) {
    EXPECT_EQ(e.line(), 2);
  }
}

TEST(Config, UnknownKeysAndSectionsWarn) {
  const RunConfig cfg =
      parse_problem_string("[problem]\nfamily=circle\ncolour = red\n[plot]\nwidth = 3\n");
  ASSERT_EQ(cfg.warnings.size(), 2u);
  EXPECT_NE(cfg.warnings[0].find("colour"), std::string::npos);
  EXPECT_NE(cfg.warnings[0].find("line 3"), std::string::npos);
  EXPECT_NE(cfg.warnings[1].find("plot"), std::string::npos);
}

TEST(Config, StructuralErrors) {
  EXPECT_THROW(parse_problem_string("[problem]\nfamily = square\n"), ConfigError);
  EXPECT_THROW(parse_problem_string("family = circle\n"), ConfigError);
  EXPECT_THROW(parse_problem_string("[problem\nfamily = circle\n"), ConfigError);
  EXPECT_THROW(parse_problem_string("[problem]\nfamily circle\n"), ConfigError);
  try {
    parse_problem_string("[matrix]\n1 2\n3\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError &e) {
    EXPECT_EQ(e.line(), 3);
  }
  EXPECT_THROW(parse_problem_file("/nonexistent/problem.cfg"), ConfigError);
}

TEST(Config, BuildProblemRejectsBadCombinations) {
  RunConfig cfg;
  cfg.problem.family = "rmc";
  cfg.problem.mode = "paper5x5";
  EXPECT_THROW(build_problem(cfg), std::invalid_argument);
  cfg.problem.mode = "random";
  cfg.problem.m = 4;
  cfg.problem.n = 4;
  cfg.problem.r = 5;
  EXPECT_THROW(build_problem(cfg), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// End to end

TEST(CLI, SolveCircle) {
  const fs::path out = scratch("solve");
  ASSERT_EQ(run_cli("solve --family circle", out), kExitConverged);
  const std::string summary = slurp(out / "summary.txt");
  EXPECT_NE(summary.find("status = converged"), std::string::npos) << summary;
  expect_history_invariants(out / "history.csv");
}

TEST(CLI, ExitCodeMatrix) {
  const fs::path out = scratch("codes");
  EXPECT_EQ(run_cli("solve --family circle --max-outer 0", out / "partial"), kExitPartial);
  EXPECT_EQ(run_cli("--config /nonexistent/x.cfg solve", out / "missing"), kExitError);
  write_file(out / "bad.cfg", "[problem]\nfamily=circle\n[alm]\nrho0 = -1\n");
  EXPECT_EQ(run_cli("--config " + (out / "bad.cfg").string() + " solve", out / "bad"),
            kExitError);
  EXPECT_NE(slurp(out / "bad" / "log.txt").find("line 4"), std::string::npos);
  EXPECT_EQ(run_cli("frobnicate", out / "unknown"), kExitError);
  EXPECT_EQ(run_cli("", out / "none"), kExitError);
  EXPECT_EQ(run_cli("solve --family square", out / "badfam"), kExitError);
  // Converged to a loose tolerance, but not to the accuracy of the instance check.
  EXPECT_EQ(run_cli("sphere-l1 --kkt-tol 1e-1", out / "check"), kExitCheckFailed);
  EXPECT_NE(slurp(out / "check" / "summary.txt").find("paper5x5_check = fail"),
            std::string::npos);
}

TEST(CLI, ConfigFileDrivesSolve) {
  const fs::path out = scratch("cfgfile");
  write_file(out / "p.cfg", "[problem]\nfamily = rmc\nmode = random\nm = 30\nn = 25\nr = 2\n");
  ASSERT_EQ(run_cli("--seed 3 --config " + (out / "p.cfg").string() + " solve", out / "run"),
            kExitConverged);
  const std::string summary = slurp(out / "run" / "summary.txt");
  EXPECT_NE(summary.find("m = 30"), std::string::npos) << summary;
  EXPECT_NE(summary.find("r = 2"), std::string::npos) << summary;
}

TEST(CLI, SphereL1Commands) {
  const fs::path out = scratch("sphere");
  ASSERT_EQ(run_cli("sphere-l1", out / "paper"), kExitConverged);
  const std::string paper = slurp(out / "paper" / "summary.txt");
  EXPECT_NE(paper.find("paper5x5_check = pass"), std::string::npos) << paper;
  EXPECT_NE(paper.find("msosc = vacuous"), std::string::npos) << paper;
  EXPECT_TRUE(fs::exists(out / "paper" / "conditions.txt"));

  ASSERT_EQ(run_cli("--seed 7 sphere-l1 --mode random --n 10", out / "random"), kExitConverged);
  const std::string rnd = slurp(out / "random" / "summary.txt");
  EXPECT_NE(rnd.find("msrcq = pass"), std::string::npos) << rnd;
  EXPECT_NE(rnd.find("n = 10"), std::string::npos) << rnd;
}

TEST(CLI, RmcCommand) {
  const fs::path out = scratch("rmc");
  ASSERT_EQ(run_cli("rmc", out), kExitConverged);
  const std::string s = slurp(out / "summary.txt");
  EXPECT_NE(s.find("basic5x5_check = pass"), std::string::npos) << s;
  EXPECT_NE(s.find("table_row = 5 x 5 r=3"), std::string::npos) << s;
  expect_history_invariants(out / "history.csv");
}

TEST(CLI, Figure1Outputs) {
  const fs::path out = scratch("figure1");
  ASSERT_EQ(run_cli("--jobs 2 figure1", out), kExitConverged);
  ASSERT_TRUE(fs::exists(out / "figure1.gp"));
  EXPECT_NE(slurp(out / "figure1.gp").find("'figure1.csv' using 1:5"), std::string::npos);
  const auto rows = read_csv(out / "figure1.csv");
  ASSERT_GE(rows.size(), 3u);
  ASSERT_EQ(rows[0].size(), 9u);
  EXPECT_EQ(rows[0][1], "R_rho1");
  EXPECT_EQ(rows[0][4], "R_rho1000");
  // Every run starts from the same triple.
  EXPECT_EQ(rows[1][0], "0");
  for (int c = 2; c <= 4; ++c) EXPECT_EQ(rows[1][static_cast<std::size_t>(c)], rows[1][1]);
  const std::string s = slurp(out / "summary.txt");
  EXPECT_NE(s.find("slopes_strictly_decreasing = true"), std::string::npos) << s;
}

TEST(CLI, AnalyzeCircle) {
  const fs::path out = scratch("analyze");
  ASSERT_EQ(run_cli("analyze --family circle", out), kExitConverged);
  const std::string text = slurp(out / "conditions.txt");
  EXPECT_NE(text.find("msrcq = pass"), std::string::npos) << text;
  EXPECT_NE(text.find("msosc = vacuous"), std::string::npos) << text;
  EXPECT_NE(text.find("kappa_bounded = true"), std::string::npos) << text;
  const auto rows = read_csv(out / "probe.csv");
  ASSERT_EQ(rows.size(), 81u);
  EXPECT_EQ(rows[0][0], "radius");
}

TEST(CLIProperty, ReproducibleOutputs) {
  const fs::path out = scratch("repro");
  const std::string args = "--no-timing --seed 5 solve --family rmc --mode random --m 30 --n 30 --r 2";
  ASSERT_EQ(run_cli(args, out / "a"), kExitConverged);
  ASSERT_EQ(run_cli(args, out / "b"), kExitConverged);
  EXPECT_EQ(slurp(out / "a" / "history.csv"), slurp(out / "b" / "history.csv"));
  EXPECT_EQ(slurp(out / "a" / "summary.txt"), slurp(out / "b" / "summary.txt"));
  expect_history_invariants(out / "a" / "history.csv");

  ASSERT_EQ(run_cli("--no-timing --jobs 1 analyze --family circle", out / "c"), kExitConverged);
  ASSERT_EQ(run_cli("--no-timing --jobs 3 analyze --family circle", out / "d"), kExitConverged);
  EXPECT_EQ(slurp(out / "c" / "probe.csv"), slurp(out / "d" / "probe.csv"));
  EXPECT_EQ(slurp(out / "c" / "conditions.txt"), slurp(out / "d" / "conditions.txt"));
}
