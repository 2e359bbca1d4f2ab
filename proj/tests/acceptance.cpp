// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include "checks.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>

using namespace riemalm;

namespace {

struct Line {
  bool pass = false;
  std::string detail;
};

std::vector<std::vector<IterationRecord>> g_histories;

void keep(const ALMResult &r) { g_histories.push_back(r.history); }

RunConfig family_config(const std::string &family, const std::string &mode = "") {
  RunConfig cfg;
  cfg.problem.family = family;
  cfg.problem.mode = mode;
  return cfg;
}

ALMResult run_built(const BuiltProblem &b) {
  ALMResult r = alm_run(b.P, b.alm_defaults, b.x0, b.y0, b.z0, b.reference);
  keep(r);
  return r;
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

Line circle_exact() {
  const BuiltProblem b = build_problem(family_config("circle"));
  const ALMResult r = run_built(b);
  const KKTReference ref = circle_reference();
  const double ex = (r.x.ambient - ref.x.ambient).cwiseAbs().maxCoeff();
  const double ey = std::abs(r.y(0) - ref.y(0));
  const double ez = std::abs(r.z(0) - ref.z(0));
  const double err = std::max({ex, ey, ez});
  return {r.converged() && err <= 1e-6,
          "max triple error " + sci(err) + " after " + std::to_string(r.history.size() - 1) +
              " iterations"};
}

Line figure1_rates() {
  const Figure1Result f = figure1_run();
  std::ostringstream os;
  os << "slopes";
  for (const auto &run : f.runs) {
    keep(run.result);
    os << ' ' << sci(run.fit.slope) << " (R2 " << sci(run.fit.r2) << ")";
  }
  return {f.all_converged && f.fits_linear && f.slopes_decreasing, os.str()};
}

Line sphere_paper() {
  const BuiltProblem b = build_problem(family_config("sphere-l1"));
  const ALMResult r = run_built(b);
  const SphereL1Check c = check_sphere_l1_paper(b.P, r);
  bool msrcq = false;
  MsoscVerdict msosc = MsoscVerdict::Fail;
  if (r.converged()) {
    msrcq = msrcq_check(b.P, r.x, r.y, r.z).pass;
    msosc = msosc_check(b.P, r.x, r.y, r.z).verdict;
  }
  return {r.converged() && c.pass && msrcq && msosc == MsoscVerdict::Vacuous,
          "| |x| - e2 | = " + sci(c.x_error) + ", |y - y*| = " + sci(c.y_error) + ", msrcq " +
              (msrcq ? "pass" : "fail") + ", msosc " + to_string(msosc)};
}

Line sphere_random_msrcq() {
  int passed = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    RunConfig cfg = family_config("sphere-l1", "random");
    cfg.problem.n = 10;
    cfg.problem.seed = seed;
    const BuiltProblem b = build_problem(cfg);
    const ALMResult r = run_built(b);
    if (r.converged() && msrcq_check(b.P, r.x, r.y, r.z).pass) ++passed;
  }
  return {passed == 20, std::to_string(passed) + "/20 instances pass"};
}

Line rmc_basic() {
  const BuiltProblem b = build_problem(family_config("rmc"));
  const ALMResult r = run_built(b);
  const double err = (r.x.ambient - b.rmc->A_ex).norm();
  const double rmax = r.history.back().R_max;
  return {r.converged() && err <= 1e-6 && rmax <= 1e-7,
          "error " + sci(err) + ", max residual " + sci(rmax)};
}

Line rmc_scaled() {
  bool ok = true;
  std::ostringstream os;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    RunConfig cfg = family_config("rmc", "random");
    cfg.problem.m = cfg.problem.n = 200;
    cfg.problem.r = 5;
    cfg.problem.oversample = 3.0;
    cfg.problem.seed = seed;
    const BuiltProblem b = build_problem(cfg);
    const ALMResult r = run_built(b);
    const double err = (r.x.ambient - b.rmc->A_ex).norm();
    const double rmax = r.history.back().R_max;
    const auto iters = r.history.size() - 1;
    ok = ok && r.converged() && rmax <= 1e-7 && err <= 1e-5 && iters <= 60;
    os << (seed > 1 ? "; " : "") << "seed " << seed << ": " << iters << " iterations, residual "
       << sci(rmax) << ", error " << sci(err);
  }
  return {ok, os.str()};
}

Line circle_error_bound() {
  const BuiltProblem b = build_problem(family_config("circle"));
  ALMConfig polish = b.alm_defaults;
  polish.kkt_tol = 1e-12;
  polish.max_outer = 500;
  const ALMResult r = alm_run(b.P, polish, b.x0, b.y0, b.z0, b.reference);
  keep(r);
  if (!r.converged()) return {false, "polish did not converge"};
  const ErrorBoundReport e = error_bound_fit(b.P, r.x, r.y, r.z, 500, 0.05, 1);
  bool inside = true;
  for (const auto &s : e.samples)
    if (!(e.c1 * s.R <= s.dist * (1 + 1e-12) && s.dist <= e.c2 * s.R * (1 + 1e-12)))
      inside = false;
  const bool ok = std::isfinite(e.c1) && std::isfinite(e.c2) && e.c1 > 0.0 && e.c1 <= e.c2 &&
                  e.used == 500 && inside && e.c2 / e.c1 <= 1e4;
  return {ok, "c1 " + sci(e.c1) + ", c2 " + sci(e.c2) + ", ratio " + sci(e.c2 / e.c1) + ", " +
                  std::to_string(e.used) + " samples"};
}

Line circle_calmness() {
  const RunConfig cfg = family_config("circle");
  const BuiltProblem b = build_problem(cfg);
  const AnalysisResult a = analyze(b, cfg);
  keep(a.polish);
  if (!a.probe) return {false, "probe not run"};
  const auto &radii = a.probe->radii;
  const double first = radii.front().max_ratio, last = radii.back().max_ratio;
  int failed = 0;
  for (const auto &r : radii) failed += r.failed;
  return {last <= 2.0 * first, "kappa(1e-2) " + sci(first) + ", kappa(1e-5) " + sci(last) +
                                   ", unsolved trials " + std::to_string(failed)};
}

Line properties() {
  struct Named {
    const char *name;
    checks::Outcome out;
  };
  std::vector<Named> parts;
  parts.push_back({"prox", checks::prox_identities()});
  parts.push_back({"envelope", checks::envelope_gradient_fd()});
  checks::Outcome proj = checks::projection_identities();
  proj.merge(checks::retraction_feasibility());
  parts.push_back({"manifold", proj});
  parts.push_back({"aug_lagrangian", checks::aug_lagrangian_fd()});
  checks::Outcome chain;
  for (const auto &h : g_histories) chain.merge(checks::chain_identity(h));
  parts.push_back({"chain", chain});
  parts.push_back({"psi", checks::psi_conjugate_oracle()});
  parts.push_back({"epiderivative", checks::epiderivative_oracles()});
  bool ok = true;
  std::ostringstream os;
  for (const auto &p : parts) {
    ok = ok && p.out.ok;
    os << (os.tellp() > 0 ? ", " : "") << p.name << ' ' << (p.out.ok ? "ok" : "FAILED") << " ("
       << p.out.cases << " cases, worst " << sci(p.out.worst) << ")";
  }
  return {ok, os.str()};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char *name;
    double budget_s;
    std::function<Line()> run;
  };
  const Criterion criteria[] = {
      {1, "circle example", 1.0, circle_exact},
      {2, "fixed-penalty rate ordering", 10.0, figure1_rates},
      {3, "sphere-l1 5x5 instance", 5.0, sphere_paper},
      {4, "msrcq on random sphere-l1", 30.0, sphere_random_msrcq},
      {5, "rmc basic 5x5", 5.0, rmc_basic},
      {6, "rmc 200x200 r=5", 300.0, rmc_scaled},
      {7, "two-sided error bound", 10.0, circle_error_bound},
      {8, "calmness boundedness", 60.0, circle_calmness},
      {9, "property suites", 1e9, properties},
  };
  int failures = 0;
  for (const auto &c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Line line;
    try {
      line = c.run();
    } catch (const std::exception &e) {
      line = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.budget_s;
    const bool pass = line.pass && in_time;
    if (!pass) ++failures;
    std::printf("criterion %d %s: %s (%s; %.2f s%s)\n", c.id, c.name, pass ? "PASS" : "FAIL",
                line.detail.c_str(), secs, in_time ? "" : ", over time budget");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
