#pragma once

/// Run configuration and the line-oriented problem-file format:
///
///   # comment
///   [problem]
///   family = rmc
///   m = 200
///   [alm]
///   rho0 = 10
///   [matrix]
///   1 0 2
///   0 1 0
///
/// Unknown sections and keys produce warnings. Values that do not parse or
/// fall outside their range raise ConfigError carrying the line number.

#include "riemalm/alm.hpp"

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace riemalm {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(int line, const std::string &msg)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct ProblemSpec {
  /// circle | sphere-l1 | rmc
  std::string family = "circle";
  /// sphere-l1: paper5x5 | random; rmc: basic5x5 | random. Empty means the
  /// family default (paper5x5, basic5x5).
  std::string mode;
  Index n = 0;
  Index m = 0;
  Index r = 0;
  double mu = 0.25;
  double oversample = 3.0;
  std::optional<std::uint64_t> seed;
  std::optional<Mat> matrix;
};

struct RunConfig {
  ProblemSpec problem;
  ALMConfig alm;
  /// [alm] keys set explicitly by file or flags; experiments only apply
  /// their own defaults to the others.
  std::set<std::string> alm_overrides;
  std::filesystem::path out_dir = "out";
  int jobs = 1;
  bool fixed_rho = false;
  bool reference = true;
  bool timing = true;
  std::vector<std::string> warnings;

  /// problem.seed if given, otherwise `fallback`.
  std::uint64_t seed_or(std::uint64_t fallback) const { return problem.seed.value_or(fallback); }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_real(const std::string &v, int line, const std::string &key) {
  double out = 0.0;
  const char *first = v.data(), *last = v.data() + v.size();
  if (!v.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || ptr != last || !std::isfinite(out))
    throw ConfigError(line, "cannot parse '" + v + "' as a real number for " + key);
  return out;
}

inline long long parse_integer(const std::string &v, int line, const std::string &key) {
  long long out = 0;
  const char *first = v.data(), *last = v.data() + v.size();
  if (!v.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || ptr != last)
    throw ConfigError(line, "cannot parse '" + v + "' as an integer for " + key);
  return out;
}

inline void require(bool ok, int line, const std::string &msg) {
  if (!ok) throw ConfigError(line, msg);
}

}  // namespace detail

/// Applies one [alm] key; returns false for unknown keys. Shared with the
/// command-line overrides (line = 0).
inline bool apply_alm_key(ALMConfig &cfg, const std::string &key, const std::string &value,
                          int line) {
  using detail::parse_integer;
  using detail::parse_real;
  using detail::require;
  if (key == "rho0") {
    cfg.rho0 = parse_real(value, line, key);
    require(cfg.rho0 > 0.0, line, "rho0 must be positive");
  } else if (key == "gamma") {
    cfg.gamma = parse_real(value, line, key);
    require(cfg.gamma > 1.0, line, "gamma must be > 1");
  } else if (key == "tau") {
    cfg.tau = parse_real(value, line, key);
    require(cfg.tau > 0.0 && cfg.tau < 1.0, line, "tau must lie in (0, 1)");
  } else if (key == "kkt_tol") {
    cfg.kkt_tol = parse_real(value, line, key);
    require(cfg.kkt_tol > 0.0, line, "kkt_tol must be positive");
  } else if (key == "max_outer") {
    const long long v = parse_integer(value, line, key);
    require(v >= 0 && v <= 1000000, line, "max_outer must lie in [0, 1e6]");
    cfg.max_outer = static_cast<int>(v);
  } else if (key == "eps0") {
    cfg.eps0 = parse_real(value, line, key);
    require(cfg.eps0 > 0.0, line, "eps0 must be positive");
  } else if (key == "eps_decay") {
    cfg.eps_decay = parse_real(value, line, key);
    require(cfg.eps_decay > 0.0 && cfg.eps_decay < 1.0, line, "eps_decay must lie in (0, 1)");
  } else if (key == "rho_max") {
    cfg.rho_max = parse_real(value, line, key);
    require(cfg.rho_max > 0.0, line, "rho_max must be positive");
  } else if (key == "multiplier_bound") {
    cfg.multiplier_bound = parse_real(value, line, key);
    require(cfg.multiplier_bound > 0.0, line, "multiplier_bound must be positive");
  } else if (key == "inner_max_iters") {
    const long long v = parse_integer(value, line, key);
    require(v >= 0 && v <= 100000000, line, "inner_max_iters must lie in [0, 1e8]");
    cfg.inner.max_iters = static_cast<int>(v);
  } else {
    return false;
  }
  return true;
}

inline bool apply_problem_key(ProblemSpec &p, const std::string &key, const std::string &value,
                              int line) {
  using detail::parse_integer;
  using detail::parse_real;
  using detail::require;
  auto dimension = [&](Index &dst) {
    const long long v = parse_integer(value, line, key);
    require(v >= 1 && v <= 100000, line, key + " must lie in [1, 100000]");
    dst = static_cast<Index>(v);
  };
  if (key == "family") {
    require(value == "circle" || value == "sphere-l1" || value == "rmc", line,
            "family must be circle, sphere-l1 or rmc (got '" + value + "')");
    p.family = value;
  } else if (key == "mode") {
    require(value == "paper5x5" || value == "basic5x5" || value == "random", line,
            "mode must be paper5x5, basic5x5 or random (got '" + value + "')");
    p.mode = value;
  } else if (key == "n") {
    dimension(p.n);
  } else if (key == "m") {
    dimension(p.m);
  } else if (key == "r") {
    dimension(p.r);
  } else if (key == "mu") {
    p.mu = parse_real(value, line, key);
    require(p.mu >= 0.0, line, "mu must be >= 0");
  } else if (key == "oversample") {
    p.oversample = parse_real(value, line, key);
    require(p.oversample > 0.0, line, "oversample must be positive");
  } else if (key == "seed") {
    const long long v = parse_integer(value, line, key);
    require(v >= 0, line, "seed must be >= 0");
    p.seed = static_cast<std::uint64_t>(v);
  } else {
    return false;
  }
  return true;
}

/// Parses a problem file from a stream; `cfg` supplies the defaults.
inline void parse_problem_stream(std::istream &in, RunConfig &cfg) {
  enum class Section { None, Problem, Alm, Matrix, Unknown } section = Section::None;
  std::vector<std::vector<double>> rows;
  int matrix_line = 0;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string text = raw;
    if (const auto hash = text.find('#'); hash != std::string::npos) text.resize(hash);
    text = detail::trim(text);
    if (text.empty()) continue;

    if (text.front() == '[') {
      detail::require(text.back() == ']', line, "malformed section header '" + text + "'");
      const std::string name = detail::trim(std::string_view(text).substr(1, text.size() - 2));
      if (name == "problem") section = Section::Problem;
      else if (name == "alm") section = Section::Alm;
      else if (name == "matrix") {
        section = Section::Matrix;
        rows.clear();
        matrix_line = line;
      } else {
        section = Section::Unknown;
        cfg.warnings.push_back("line " + std::to_string(line) + ": unknown section [" + name +
                               "] ignored");
      }
      continue;
    }

    if (section == Section::Matrix) {
      std::istringstream ss(text);
      std::vector<double> row;
      std::string tok;
      while (ss >> tok) row.push_back(detail::parse_real(tok, line, "matrix entry"));
      detail::require(rows.empty() || row.size() == rows.front().size(), line,
                      "matrix row has " + std::to_string(row.size()) + " entries, expected " +
                          std::to_string(rows.empty() ? 0 : rows.front().size()));
      rows.push_back(std::move(row));
      continue;
    }
    if (section == Section::Unknown) continue;

    const auto eq = text.find('=');
    detail::require(eq != std::string::npos, line, "expected key = value, got '" + text + "'");
    const std::string key = detail::trim(std::string_view(text).substr(0, eq));
    const std::string value = detail::trim(std::string_view(text).substr(eq + 1));
    detail::require(!key.empty(), line, "empty key");
    detail::require(!value.empty(), line, "empty value for " + key);

    bool known = false;
    if (section == Section::Problem) {
      known = apply_problem_key(cfg.problem, key, value, line);
    } else if (section == Section::Alm) {
      known = apply_alm_key(cfg.alm, key, value, line);
      if (known) cfg.alm_overrides.insert(key);
    } else {
      throw ConfigError(line, "key '" + key + "' outside of any section");
    }
    if (!known)
      cfg.warnings.push_back("line " + std::to_string(line) + ": unknown key '" + key +
                             "' ignored");
  }
  if (!rows.empty()) {
    Mat A(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < rows[i].size(); ++j)
        A(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    cfg.problem.matrix = std::move(A);
  } else if (matrix_line > 0) {
    throw ConfigError(matrix_line, "empty [matrix] block");
  }
}

inline RunConfig parse_problem_file(const std::filesystem::path &path, RunConfig defaults = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, "cannot open config file '" + path.string() + "'");
  parse_problem_stream(in, defaults);
  return defaults;
}

inline RunConfig parse_problem_string(const std::string &text, RunConfig defaults = {}) {
  std::istringstream in(text);
  parse_problem_stream(in, defaults);
  return defaults;
}

}  // namespace riemalm
