// riemalm: command-line driver for the Riemannian ALM experiments.
//
//   riemalm [--config PATH] [--seed N] [--out DIR] [--jobs N] [--fixed-rho]
//           <solve | figure1 | sphere-l1 | rmc | analyze> [command options]
//
// Exit codes: 0 converged, 1 error, 2 partial convergence, 3 failed check.

#include "riemalm/experiments.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>

using namespace riemalm;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  int jobs = 1;
  bool fixed_rho = false;
  bool no_timing = false;
  bool no_reference = false;

  std::string family;
  std::string mode;
  std::optional<Index> n, m, r;
  std::optional<double> mu, oversample;
  // [alm] overrides, keyed like the config file.
  std::map<std::string, std::string> alm;
};

void add_alm_options(CLI::App *cmd, Flags &f) {
  const std::pair<const char *, const char *> keys[] = {
      {"--rho0", "rho0"},         {"--gamma", "gamma"},         {"--tau", "tau"},
      {"--kkt-tol", "kkt_tol"},   {"--max-outer", "max_outer"}, {"--eps0", "eps0"},
      {"--rho-max", "rho_max"},   {"--inner-max-iters", "inner_max_iters"}};
  for (const auto &[flag, key] : keys) {
    const std::string k = key;
    cmd->add_option_function<std::string>(
        flag, [&f, k](const std::string &v) { f.alm[k] = v; }, "override [alm] " + k);
  }
}

RunConfig make_config(const Flags &f) {
  RunConfig cfg;
  if (!f.config.empty()) cfg = parse_problem_file(f.config);
  for (const auto &w : cfg.warnings) std::cerr << "warning: " << w << "\n";
  if (!f.family.empty()) apply_problem_key(cfg.problem, "family", f.family, 0);
  if (!f.mode.empty()) apply_problem_key(cfg.problem, "mode", f.mode, 0);
  if (f.n) cfg.problem.n = *f.n;
  if (f.m) cfg.problem.m = *f.m;
  if (f.r) cfg.problem.r = *f.r;
  if (f.mu) apply_problem_key(cfg.problem, "mu", fmt(*f.mu), 0);
  if (f.oversample) apply_problem_key(cfg.problem, "oversample", fmt(*f.oversample), 0);
  if (f.seed) cfg.problem.seed = *f.seed;
  for (const auto &[k, v] : f.alm) {
    apply_alm_key(cfg.alm, k, v, 0);
    cfg.alm_overrides.insert(k);
  }
  cfg.out_dir = f.out;
  cfg.jobs = f.jobs;
  cfg.fixed_rho = f.fixed_rho;
  cfg.timing = !f.no_timing;
  cfg.reference = !f.no_reference;
  return cfg;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Riemannian augmented Lagrangian experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "problem file")->check(CLI::ExistingFile);
  app.add_option_function<std::uint64_t>("--seed", [&](std::uint64_t s) { f.seed = s; },
                                          "random seed");
  app.add_option("--out", f.out, "output directory")->capture_default_str();
  app.add_option("--jobs", f.jobs, "worker threads")->check(CLI::Range(1, 256));
  app.add_flag("--fixed-rho", f.fixed_rho, "keep rho at rho0");
  app.add_flag("--no-timing", f.no_timing, "write zero wall times");

  auto dims = [&](CLI::App *cmd) {
    cmd->add_option_function<Index>("--n", [&](Index v) { f.n = v; }, "size n");
    cmd->add_option_function<Index>("--m", [&](Index v) { f.m = v; }, "size m");
    cmd->add_option_function<Index>("--r", [&](Index v) { f.r = v; }, "rank r");
  };

  auto *solve = app.add_subcommand("solve", "run the ALM on one problem");
  solve->add_option("--family", f.family, "circle | sphere-l1 | rmc");
  solve->add_option("--mode", f.mode, "paper5x5 | basic5x5 | random");
  solve->add_option_function<double>("--mu", [&](double v) { f.mu = v; }, "l1 weight");
  solve->add_flag("--no-reference", f.no_reference, "omit distance to the known solution");
  dims(solve);
  add_alm_options(solve, f);

  auto *figure1 = app.add_subcommand("figure1", "fixed-penalty rate study on the circle example");

  auto *sphere = app.add_subcommand("sphere-l1", "l1-regularized eigenvector problem");
  sphere->add_option("--mode", f.mode, "paper5x5 | random")->check(CLI::IsMember({"paper5x5", "random"}));
  sphere->add_option_function<double>("--mu", [&](double v) { f.mu = v; }, "l1 weight");
  dims(sphere);
  add_alm_options(sphere, f);

  auto *rmc = app.add_subcommand("rmc", "robust matrix completion");
  rmc->add_option("--mode", f.mode, "basic5x5 | random")->check(CLI::IsMember({"basic5x5", "random"}));
  rmc->add_option_function<double>("--oversample", [&](double v) { f.oversample = v; },
                                   "oversampling rate");
  dims(rmc);
  add_alm_options(rmc, f);

  auto *analyze = app.add_subcommand("analyze", "condition checks, calmness probe, error bound");
  analyze->add_option("--family", f.family, "circle | sphere-l1 | rmc");
  analyze->add_option("--mode", f.mode, "paper5x5 | basic5x5 | random");
  analyze->add_option_function<double>("--mu", [&](double v) { f.mu = v; }, "l1 weight");
  dims(analyze);
  add_alm_options(analyze, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitError;
  }

  try {
    const RunConfig cfg = make_config(f);
    if (solve->parsed()) return cmd_solve(cfg);
    if (figure1->parsed()) return cmd_figure1(cfg);
    if (sphere->parsed()) return cmd_sphere_l1(cfg);
    if (rmc->parsed()) return cmd_rmc(cfg);
    if (analyze->parsed()) return cmd_analyze(cfg);
  } catch (const ConfigError &e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
