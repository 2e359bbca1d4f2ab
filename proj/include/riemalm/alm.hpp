#pragma once

/// Inexact Riemannian augmented Lagrangian method with a Riemannian
/// gradient-descent subproblem solver.

#include "riemalm/problem.hpp"

#include <chrono>
#include <functional>
#include <cmath>
#include <optional>
#include <vector>

namespace riemalm {

struct InnerConfig {
  int max_iters = 5000;
  double armijo_c = 1e-4;
  double backtrack = 0.5;
  double init_step = 1.0;
  /// Barzilai-Borwein initial trial steps; when false every iteration starts
  /// from init_step.
  bool bb_steps = true;
};

struct ALMConfig {
  double rho0 = 1.0;
  double gamma = 10.0;
  /// Sufficient-progress factor of the penalty test.
  double tau = 0.8;
  double eps0 = 1e-2;
  double eps_decay = 0.5;
  double eps_floor = 1e-12;
  /// eps_k is capped by eps_residual_factor * R_k so that eps_k = o(R_k).
  double eps_residual_factor = 0.1;
  double multiplier_bound = 1e8;
  /// Cap on penalty growth; rho never drops below its current value.
  double rho_max = 1e6;
  double kkt_tol = 1e-7;
  int max_outer = 200;
  /// Keeps rho at rho0 for the whole run.
  bool fixed_rho = false;
  InnerConfig inner;

  void validate() const {
    auto fail = [](const char *msg) { throw std::invalid_argument(msg); };
    if (!(rho0 > 0.0)) fail("rho0 must be positive");
    if (!(gamma > 1.0)) fail("gamma must be > 1");
    if (!(tau > 0.0 && tau < 1.0)) fail("tau must lie in (0, 1)");
    if (!(eps0 > 0.0)) fail("eps0 must be positive");
    if (!(eps_decay > 0.0 && eps_decay < 1.0)) fail("eps_decay must lie in (0, 1)");
    if (!(eps_floor > 0.0)) fail("eps_floor must be positive");
    if (!(eps_residual_factor > 0.0)) fail("eps_residual_factor must be positive");
    if (!(multiplier_bound > 0.0)) fail("multiplier_bound must be positive");
    if (!(rho_max > 0.0)) fail("rho_max must be positive");
    if (!(kkt_tol > 0.0)) fail("kkt_tol must be positive");
    if (max_outer < 0) fail("max_outer must be >= 0");
    if (inner.max_iters < 0) fail("inner.max_iters must be >= 0");
    if (!(inner.armijo_c > 0.0 && inner.armijo_c < 1.0)) fail("armijo_c must lie in (0, 1)");
    if (!(inner.backtrack > 0.0 && inner.backtrack < 1.0)) fail("backtrack must lie in (0, 1)");
    if (!(inner.init_step > 0.0)) fail("init_step must be positive");
  }
};

// ---------------------------------------------------------------------------
// Subproblem

struct SubproblemResult {
  Point x;
  double grad_norm = 0.0;
  int iters = 0;
  bool converged = false;
  /// Stopped early because (x, y_hat, z_hat) already met the KKT tolerance.
  bool kkt_exit = false;
  /// Final evaluation of L_rho at x (value, gradient, multiplier estimates).
  AugLagValue state;
};

/// Minimizes L_rho(., w, p) over M until ||grad|| <= eps by Riemannian
/// gradient descent with Armijo backtracking along the retraction.
///
/// The first trial step is `init_step`, later ones are Barzilai-Borwein
/// estimates. When the change in L_rho is below its rounding level the
/// sufficient-decrease test is taken from the slope at the trial point
/// (the approximate Armijo condition of Hager and Zhang).
///
/// With kkt_tol > 0 the loop also stops once the multiplier estimates at the
/// current iterate give a KKT triple with max-component residual <= kkt_tol.
inline SubproblemResult subproblem_solve(const ProblemInstance &P, const Mat &w, const Mat &p,
                                         double rho, const Point &x_init, double eps,
                                         const InnerConfig &cfg = {}, double kkt_tol = 0.0) {
  if (!(eps > 0.0)) throw std::invalid_argument("subproblem_solve requires eps > 0");
  const Manifold &M = P.manifold;
  SubproblemResult res{x_init, 0.0, 0, false, false, aug_lagrangian(P, x_init, w, p, rho)};
  double gnorm = res.state.rgrad.norm();
  double step = cfg.init_step;
  constexpr double kNoise = 1e-10;
  constexpr double kWolfeDelta = 0.1;

  // The stationarity block of the estimate is gnorm itself.
  auto meets_kkt = [&] {
    if (!(kkt_tol > 0.0) || gnorm > kkt_tol) return false;
    const Mat g1 = P.g1.value(res.x.ambient);
    if ((g1 - P.theta.prox(g1 + res.state.y_hat, 1.0)).norm() > kkt_tol) return false;
    if (P.g2) {
      const Mat g2 = P.g2->value(res.x.ambient);
      if ((g2 - P.Q->project(g2 + res.state.z_hat)).norm() > kkt_tol) return false;
    }
    return true;
  };

  int it = 0;
  for (; it < cfg.max_iters && gnorm > eps; ++it) {
    if (meets_kkt()) {
      res.kkt_exit = true;
      break;
    }
    const Mat &g = res.state.rgrad;
    const double slope = gnorm * gnorm;
    bool accepted = false;
    Point x_new;
    AugLagValue trial;
    double t = step;
    for (int bt = 0; bt < 80; ++bt, t *= cfg.backtrack) {
      try {
        x_new = retract(M, res.x, -t * g);
      } catch (const RankDeficiencyError &) {
        continue;
      }
      trial = aug_lagrangian(P, x_new, w, p, rho);
      const double dval = trial.value - res.state.value;
      if (dval <= -cfg.armijo_c * t * slope) {
        accepted = true;
        break;
      }
      if (std::abs(dval) <= kNoise * (1.0 + std::abs(res.state.value))) {
        const double dphi = -inner(trial.rgrad, project_tangent(M, x_new, g));
        if (dphi <= (1.0 - 2.0 * kWolfeDelta) * slope) {
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) break;

    // Barzilai-Borwein step with tangent vectors transported by projection.
    const Mat s = project_tangent(M, x_new, -t * g);
    const Mat yv = trial.rgrad - project_tangent(M, x_new, g);
    const double sy = inner(s, yv);
    if (cfg.bb_steps)
      step = sy > 0.0 ? std::clamp(s.squaredNorm() / sy, 1e-12, 1e12) : std::min(2.0 * t, 1e12);

    res.x = std::move(x_new);
    res.state = std::move(trial);
    gnorm = res.state.rgrad.norm();
  }
  res.iters = it;
  res.grad_norm = gnorm;
  res.converged = gnorm <= eps || res.kkt_exit;
  return res;
}

// ---------------------------------------------------------------------------
// Outer-loop pieces

struct Multipliers {
  Mat y;
  Mat z;
};

/// y+ = rho [u - prox_{theta/rho}(u)], u = g1(x) + w/rho (evaluated as the
///      clamp of rho u to [-mu, mu]);
/// z+ = rho [v - Pi_Q(v)],              v = g2(x) + p/rho.
inline Multipliers update_multipliers(const ProblemInstance &P, const Point &x_next,
                                      const Mat &w, const Mat &p, double rho) {
  if (!(rho > 0.0)) throw std::invalid_argument("update_multipliers requires rho > 0");
  Multipliers out;
  const Mat u = P.g1.value(x_next.ambient) + w / rho;
  out.y = rho * P.theta.clamp_dual(u, 1.0 / rho);
  if (P.g2) {
    const Mat v = P.g2->value(x_next.ambient) + p / rho;
    out.z = rho * (v - P.Q->project(v));
  } else {
    out.z = Mat(0, 0);
  }
  return out;
}

/// V(x, w, p, rho) = max(||g1 - prox_theta(g1 + w/rho)||, ||g2 - Pi_Q(g2 + p/rho)||).
/// Note the unit-parameter prox_theta.
inline double auxiliary_V(const ProblemInstance &P, const Point &x, const Mat &w, const Mat &p,
                          double rho) {
  if (!(rho > 0.0)) throw std::invalid_argument("auxiliary_V requires rho > 0");
  const Mat g1 = P.g1.value(x.ambient);
  double v = (g1 - P.theta.prox(g1 + w / rho, 1.0)).norm();
  if (P.g2) {
    const Mat g2 = P.g2->value(x.ambient);
    v = std::max(v, (g2 - P.Q->project(g2 + p / rho)).norm());
  }
  return v;
}

/// Keeps rho when k = 0 or V_new <= tau V_prev, otherwise multiplies by gamma.
inline double penalty_update(double V_new, double V_prev, double rho, double gamma, double tau,
                             int k) {
  if (k == 0 || V_new <= tau * V_prev) return rho;
  return gamma * rho;
}

/// The three blocks of the KKT residual.
struct KKTResidual {
  double stationarity = 0.0;
  double theta_block = 0.0;
  double constraint_block = 0.0;

  double sum() const { return stationarity + theta_block + constraint_block; }
  double max() const { return std::max({stationarity, theta_block, constraint_block}); }
};

inline KKTResidual kkt_residual_components(const ProblemInstance &P, const Point &x,
                                           const Mat &y, const Mat &z) {
  KKTResidual r;
  r.stationarity = lagrangian_rgrad(P, x, y, z).norm();
  const Mat g1 = P.g1.value(x.ambient);
  r.theta_block = (g1 - P.theta.prox(g1 + y, 1.0)).norm();
  if (P.g2) {
    const Mat g2 = P.g2->value(x.ambient);
    r.constraint_block = (g2 - P.Q->project(g2 + z)).norm();
  }
  return r;
}

/// R(x, y, z) = ||grad_x L|| + ||g1 - prox_theta(g1 + y)|| + ||g2 - Pi_Q(g2 + z)||.
inline double kkt_residual(const ProblemInstance &P, const Point &x, const Mat &y,
                           const Mat &z) {
  return kkt_residual_components(P, x, y, z).sum();
}

// ---------------------------------------------------------------------------
// Full run

/// A KKT triple used as reference for distance logging.
struct KKTReference {
  Point x;
  Mat y;
  Mat z;
};

inline double triple_distance(const ProblemInstance &P, const Point &x, const Mat &y,
                              const Mat &z, const KKTReference &ref) {
  double d = distance(P.manifold, x, ref.x) + (y - ref.y).norm();
  if (P.g2) d += (z - ref.z).norm();
  return d;
}

struct IterationRecord {
  int k = 0;
  double rho = 0.0;
  double R = 0.0;
  double R_max = 0.0;
  double V = 0.0;
  double inner_grad_norm = 0.0;
  int inner_iters = 0;
  double eps_k = 0.0;
  double wall_time = 0.0;
  std::optional<double> dist_to_ref;

  // Per-iteration diagnostics (zero on the initial record).
  bool inner_converged = true;
  bool clamped = false;
  /// ||grad L_rho(x, w, p) - grad L(x, y+, z+)||.
  double chain_gap = 0.0;
  /// ||g1 - prox_theta(g1 + y+)|| and ||g1 - prox_{theta/rho}(g1 + w/rho)||.
  double theta_residual = 0.0;
  double theta_shift = 0.0;
  /// inner_grad_norm + ||y+ - w|| / rho + ||z+ - p|| / rho, an upper bound on R.
  double residual_bound = 0.0;
};

enum class ALMStatus { Converged, PartialConvergence };

struct ALMResult {
  ALMStatus status = ALMStatus::PartialConvergence;
  Point x;
  Mat y;
  Mat z;
  std::vector<IterationRecord> history;
  int subproblem_stalls = 0;

  bool converged() const { return status == ALMStatus::Converged; }
};

/// Called after every history record with the iterate it describes.
using IterationObserver =
    std::function<void(const IterationRecord &, const Point &, const Mat &, const Mat &)>;

inline ALMResult alm_run(const ProblemInstance &P, const ALMConfig &cfg, const Point &x0,
                         const Mat &y0, const Mat &z0,
                         const std::optional<KKTReference> &reference = std::nullopt,
                         const IterationObserver &observe = {}) {
  cfg.validate();
  if (!is_feasible(P.manifold, x0, 1e-8))
    throw std::invalid_argument("alm_run: x0 is not feasible on the manifold");
  require_same_shape(y0, P.zero_y(), "alm_run(y0)");
  if (P.g2) require_same_shape(z0, P.zero_z(), "alm_run(z0)");

  using clock = std::chrono::steady_clock;
  const auto t_start = clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - t_start).count(); };

  ALMResult out;
  out.x = x0;
  out.y = y0;
  out.z = P.g2 ? z0 : Mat(0, 0);
  double rho = cfg.rho0;
  double V_prev = 0.0;

  auto components = kkt_residual_components(P, out.x, out.y, out.z);
  {
    IterationRecord rec;
    rec.k = 0;
    rec.rho = rho;
    rec.R = components.sum();
    rec.R_max = components.max();
    rec.wall_time = elapsed();
    if (reference) rec.dist_to_ref = triple_distance(P, out.x, out.y, out.z, *reference);
    out.history.push_back(rec);
    if (observe) observe(rec, out.x, out.y, out.z);
  }

  const double B = cfg.multiplier_bound;
  for (int k = 0;; ++k) {
    if (components.max() <= cfg.kkt_tol) {
      out.status = ALMStatus::Converged;
      break;
    }
    if (k >= cfg.max_outer) {
      out.status = ALMStatus::PartialConvergence;
      break;
    }

    // Safeguarded multipliers (w, p) in the box of half-width B.
    const Mat w = out.y.cwiseMax(-B).cwiseMin(B);
    const Mat p = out.z.cwiseMax(-B).cwiseMin(B);
    const bool clamped = (w - out.y).cwiseAbs().sum() + (p - out.z).cwiseAbs().sum() > 0.0;

    const double eps_k = std::max(
        cfg.eps_floor,
        std::min(cfg.eps0 * std::pow(cfg.eps_decay, k), cfg.eps_residual_factor * components.sum()));

    SubproblemResult sub = subproblem_solve(P, w, p, rho, out.x, eps_k, cfg.inner, cfg.kkt_tol);
    if (!sub.converged) ++out.subproblem_stalls;

    Multipliers next = update_multipliers(P, sub.x, w, p, rho);
    const double V_new = auxiliary_V(P, sub.x, w, p, rho);
    const double rho_next =
        cfg.fixed_rho
            ? rho
            : std::max(rho, std::min(cfg.rho_max,
                                     penalty_update(V_new, V_prev, rho, cfg.gamma, cfg.tau, k)));

    IterationRecord rec;
    rec.k = k + 1;
    rec.V = V_new;
    rec.inner_grad_norm = sub.grad_norm;
    rec.inner_iters = sub.iters;
    rec.eps_k = eps_k;
    rec.inner_converged = sub.converged;
    rec.clamped = clamped;
    rec.chain_gap = (sub.state.rgrad - lagrangian_rgrad(P, sub.x, next.y, next.z)).norm();
    {
      const Mat g1 = P.g1.value(sub.x.ambient);
      rec.theta_residual = (g1 - P.theta.prox(g1 + next.y, 1.0)).norm();
      const Mat u = g1 + w / rho;
      rec.theta_shift = (g1 - P.theta.prox(u, 1.0 / rho)).norm();
    }
    rec.residual_bound = sub.grad_norm + (next.y - w).norm() / rho;
    if (P.g2) rec.residual_bound += (next.z - p).norm() / rho;

    out.x = std::move(sub.x);
    out.y = std::move(next.y);
    out.z = std::move(next.z);
    V_prev = V_new;
    rho = rho_next;

    components = kkt_residual_components(P, out.x, out.y, out.z);
    rec.rho = rho;
    rec.R = components.sum();
    rec.R_max = components.max();
    rec.wall_time = elapsed();
    if (reference) rec.dist_to_ref = triple_distance(P, out.x, out.y, out.z, *reference);
    out.history.push_back(rec);
    if (observe) observe(rec, out.x, out.y, out.z);
  }
  return out;
}

}  // namespace riemalm
