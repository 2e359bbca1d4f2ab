#pragma once

/// Numerical checks around a KKT point: the natural map, critical cone,
/// strict Robinson and second-order conditions, a calmness probe under
/// tilt/shift perturbations, and a two-sided error-bound fit.

#include "riemalm/alm.hpp"

#include <atomic>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>
#include <vector>

namespace riemalm {

/// Gate on R for the condition checks.
inline constexpr double kKKTGate = 1e-6;
/// Relative singular-value threshold for the span tests.
inline constexpr double kSpanRelTol = 1e-8;
/// Membership tolerance for cone tests.
inline constexpr double kConeTol = 1e-8;

struct KKTTriple {
  Point x;
  Mat y;
  Mat z;
  double R = 0.0;
};

inline KKTTriple make_triple(const ProblemInstance &P, Point x, Mat y, Mat z) {
  KKTTriple t{std::move(x), std::move(y), std::move(z), 0.0};
  t.R = kkt_residual(P, t.x, t.y, t.z);
  return t;
}

// ---------------------------------------------------------------------------
// Natural map

struct NaturalMap {
  Mat stationarity;
  Mat theta_block;
  Mat constraint_block;

  /// Sum of blockwise Frobenius norms; equals kkt_residual.
  double block_norm_sum() const {
    return stationarity.norm() + theta_block.norm() + constraint_block.norm();
  }

  Vec stacked() const {
    Vec out(stationarity.size() + theta_block.size() + constraint_block.size());
    out << flatten(stationarity), flatten(theta_block), flatten(constraint_block);
    return out;
  }
};

/// F(x, y, z) = (grad_x L, g1 - prox_theta(g1 + y), g2 - Pi_Q(g2 + z)).
inline NaturalMap natural_map(const ProblemInstance &P, const Point &x, const Mat &y,
                              const Mat &z) {
  NaturalMap F;
  F.stationarity = lagrangian_rgrad(P, x, y, z);
  const Mat g1 = P.g1.value(x.ambient);
  F.theta_block = g1 - P.theta.prox(g1 + y, 1.0);
  if (P.g2) {
    const Mat g2 = P.g2->value(x.ambient);
    F.constraint_block = g2 - P.Q->project(g2 + z);
  } else {
    F.constraint_block = Mat(0, 0);
  }
  return F;
}

// ---------------------------------------------------------------------------
// Cone descriptions

namespace detail {

inline void require_tangent(const ProblemInstance &P, const Point &x, const Mat &xi, double tol) {
  const double scale = std::max(1.0, xi.norm());
  if ((project_tangent(P.manifold, x, xi) - xi).norm() > tol * scale)
    throw std::invalid_argument("direction is not tangent at x");
}

inline void require_kkt(const ProblemInstance &P, const Point &x, const Mat &y, const Mat &z,
                        const char *what) {
  const double R = kkt_residual(P, x, y, z);
  if (!(R <= kKKTGate))
    throw std::invalid_argument(std::string(what) + ": not an approximate KKT point (R = " +
                                std::to_string(R) + ")");
}

/// Per-coordinate cones of C_theta(g1(x), y) followed by T_Q(g2(x)) cap z^perp.
inline std::vector<CoordCone> critical_pattern(const ProblemInstance &P, const Point &x,
                                               const Mat &y, const Mat &z, double tol) {
  const Mat g1 = P.g1.value(x.ambient);
  std::vector<CoordCone> pattern;
  pattern.reserve(static_cast<std::size_t>(g1.size() + (P.g2 ? z.size() : 0)));
  for (Index i = 0; i < g1.size(); ++i)
    pattern.push_back(P.theta.critical_coordinate(g1.data()[i], y.data()[i], tol));
  if (P.g2) {
    const Mat g2 = P.g2->value(x.ambient);
    for (Index i = 0; i < g2.size(); ++i)
      pattern.push_back(P.Q->critical_coordinate(i, g2.data()[i], z.data()[i], tol));
  }
  return pattern;
}

/// Columns: (Dg1(x) b_j, Dg2(x) b_j) flattened, for an orthonormal tangent basis b_j.
inline Mat stacked_jacobian_on_basis(const ProblemInstance &P, const Point &x,
                                     const Mat &basis) {
  const Index d1 = P.g1.out_rows * P.g1.out_cols;
  const Index d2 = P.g2 ? P.g2->out_rows * P.g2->out_cols : 0;
  Mat J(d1 + d2, basis.cols());
  for (Index j = 0; j < basis.cols(); ++j) {
    const Mat xi = unflatten(basis.col(j), P.manifold.rows(), P.manifold.cols());
    J.col(j).head(d1) = flatten(P.g1.jacobian_apply(x.ambient, xi));
    if (d2 > 0) J.col(j).tail(d2) = flatten(P.g2->jacobian_apply(x.ambient, xi));
  }
  return J;
}

/// Classification tolerance that absorbs the inexactness of (x, y, z).
inline double classification_tol(double R) { return std::max(kConeTol, 10.0 * R); }

}  // namespace detail

/// xi in C(x): Df(x) xi + theta^down(g1(x); Dg1(x) xi) = 0 and
/// Dg2(x) xi in T_Q(g2(x)) cap z^perp.
inline bool critical_cone_member(const ProblemInstance &P, const Point &x, const Mat &z,
                                 const Mat &xi, double tol = kConeTol) {
  detail::require_tangent(P, x, xi, 1e-8);
  const Mat d1 = P.g1.jacobian_apply(x.ambient, xi);
  const double first = inner(P.f.egrad(x.ambient), xi) + P.theta.epi_down(P.g1.value(x.ambient), d1);
  if (std::abs(first) > tol) return false;
  if (P.g2) {
    const Mat s = P.g2->value(x.ambient);
    const Mat d2 = P.g2->jacobian_apply(x.ambient, xi);
    for (Index i = 0; i < s.size(); ++i) {
      const CoordCone c = P.Q->critical_coordinate(i, s.data()[i], z.data()[i], tol);
      if (!coord_cone_member(c, d2.data()[i], tol)) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// M-SRCQ

struct MsrcqReport {
  bool pass = false;
  Index rank_found = 0;
  Index dimension_required = 0;
};

/// (Dg1, Dg2)(x) T_xM + C_theta(g1(x), y) x (T_Q(g2(x)) cap z^perp) = Y x Z,
/// decided by a positive-spanning test on explicit generators.
inline MsrcqReport msrcq_check(const ProblemInstance &P, const Point &x, const Mat &y,
                               const Mat &z, double rel_tol = kSpanRelTol) {
  detail::require_kkt(P, x, y, z, "msrcq_check");
  const double ctol = detail::classification_tol(kkt_residual(P, x, y, z));
  const Mat J = detail::stacked_jacobian_on_basis(P, x, tangent_basis(P.manifold, x));
  const auto pattern = detail::critical_pattern(P, x, y, z, ctol);
  const Index N = J.rows();

  std::vector<Index> free_idx, ray_idx;
  std::vector<double> ray_sign;
  for (Index i = 0; i < N; ++i) {
    switch (pattern[static_cast<std::size_t>(i)]) {
      case CoordCone::Free: free_idx.push_back(i); break;
      case CoordCone::Nonneg: ray_idx.push_back(i); ray_sign.push_back(1.0); break;
      case CoordCone::Nonpos: ray_idx.push_back(i); ray_sign.push_back(-1.0); break;
      case CoordCone::Zero: break;
    }
  }
  Mat subspace(N, J.cols() + static_cast<Index>(free_idx.size()));
  subspace.leftCols(J.cols()) = J;
  subspace.rightCols(static_cast<Index>(free_idx.size())).setZero();
  for (std::size_t k = 0; k < free_idx.size(); ++k)
    subspace(free_idx[k], J.cols() + static_cast<Index>(k)) = 1.0;
  Mat rays = Mat::Zero(N, static_cast<Index>(ray_idx.size()));
  for (std::size_t k = 0; k < ray_idx.size(); ++k)
    rays(ray_idx[k], static_cast<Index>(k)) = ray_sign[k];

  const SpanReport span = positively_spans(subspace, rays, rel_tol);
  return {span.spans, span.rank_found, span.dimension_required};
}

// ---------------------------------------------------------------------------
// M-SOSC

enum class MsoscVerdict { Pass, Fail, Vacuous };

inline const char *to_string(MsoscVerdict v) {
  switch (v) {
    case MsoscVerdict::Pass: return "pass";
    case MsoscVerdict::Fail: return "fail";
    case MsoscVerdict::Vacuous: return "vacuous";
  }
  return "?";
}

struct MsoscReport {
  MsoscVerdict verdict = MsoscVerdict::Fail;
  double min_value = std::numeric_limits<double>::infinity();
  int samples = 0;
  int infinite_conjugates = 0;
  /// Dimension of the largest subspace contained in the critical cone's
  /// linear part (0 when C(x) = {0}).
  Index cone_dimension = 0;
};

namespace detail {

/// C(x) in tangent-basis coordinates: {t : E t = 0, G t >= 0}, returned as
/// a null-space basis N of E and the inequality rows G N.
struct CriticalConeCoords {
  Mat tangent_basis;
  Mat null_basis;
  Mat inequalities;
};

inline CriticalConeCoords critical_cone_coords(const ProblemInstance &P, const Point &x,
                                               const Mat &y, const Mat &z, double ctol) {
  CriticalConeCoords cc;
  cc.tangent_basis = tangent_basis(P.manifold, x);
  const Mat J = stacked_jacobian_on_basis(P, x, cc.tangent_basis);
  const auto pattern = critical_pattern(P, x, y, z, ctol);
  std::vector<Index> eq, ge;
  std::vector<double> sign;
  for (Index i = 0; i < J.rows(); ++i) {
    switch (pattern[static_cast<std::size_t>(i)]) {
      case CoordCone::Zero: eq.push_back(i); break;
      case CoordCone::Nonneg: ge.push_back(i); sign.push_back(1.0); break;
      case CoordCone::Nonpos: ge.push_back(i); sign.push_back(-1.0); break;
      case CoordCone::Free: break;
    }
  }
  Mat E(static_cast<Index>(eq.size()), J.cols());
  for (std::size_t k = 0; k < eq.size(); ++k) E.row(static_cast<Index>(k)) = J.row(eq[k]);
  cc.null_basis = null_space_basis(E, kSpanRelTol);
  Mat G(static_cast<Index>(ge.size()), J.cols());
  for (std::size_t k = 0; k < ge.size(); ++k)
    G.row(static_cast<Index>(k)) = sign[k] * J.row(ge[k]);
  cc.inequalities = G * cc.null_basis;
  return cc;
}

/// {t : G t >= 0} = {0} iff the rows of G positively span the t-space.
inline bool cone_is_trivial(const CriticalConeCoords &cc) {
  const Index k = cc.null_basis.cols();
  if (k == 0) return true;
  if (cc.inequalities.rows() == 0) return false;
  return positively_spans(Mat(k, 0), cc.inequalities.transpose(), kSpanRelTol).spans;
}

}  // namespace detail

/// <xi, Hess_x L xi> - psi*_{(g1(x), Dg1(x) xi)}(y) > 0 on sampled unit
/// directions of C(x) \ {0}; vacuous when C(x) = {0}. Polyhedral Q only, so
/// the second-order term of Q vanishes.
inline MsoscReport msosc_check(const ProblemInstance &P, const Point &x, const Mat &y,
                               const Mat &z, int n_samples = 200, double tol = 0.0,
                               std::uint64_t seed = 1) {
  detail::require_kkt(P, x, y, z, "msosc_check");
  const double ctol = detail::classification_tol(kkt_residual(P, x, y, z));
  const auto cc = detail::critical_cone_coords(P, x, y, z, ctol);
  MsoscReport rep;
  rep.cone_dimension = cc.null_basis.cols();
  if (detail::cone_is_trivial(cc)) {
    rep.verdict = MsoscVerdict::Vacuous;
    return rep;
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Mat g1 = P.g1.value(x.ambient);
  const Index k = cc.null_basis.cols();
  int attempts = 0;
  const int max_attempts = std::max(1000, 200 * n_samples);
  while (rep.samples < n_samples && attempts < max_attempts) {
    ++attempts;
    Vec t(k);
    for (Index i = 0; i < k; ++i) t(i) = normal(rng);
    if (cc.inequalities.rows() > 0) {
      // Fold onto the cone: flip violated coordinates of the image when the
      // inequality rows are coordinate-like; otherwise plain rejection.
      if ((cc.inequalities * t).minCoeff() < 0.0) continue;
    }
    Vec c = cc.null_basis * t;
    Mat xi = unflatten(cc.tangent_basis * c, P.manifold.rows(), P.manifold.cols());
    const double nrm = xi.norm();
    if (nrm == 0.0) continue;
    xi /= nrm;
    if (!critical_cone_member(P, x, z, xi, std::max(ctol, 1e-7))) continue;
    const double quad = inner(xi, lagrangian_rhess_apply(P, x, y, z, xi));
    const ConjugateValue conj =
        P.theta.psi_conjugate(g1, P.g1.jacobian_apply(x.ambient, xi), y, ctol, std::max(ctol, 1e-8));
    ++rep.samples;
    if (!conj.finite) {
      ++rep.infinite_conjugates;
      rep.min_value = -std::numeric_limits<double>::infinity();
      continue;
    }
    rep.min_value = std::min(rep.min_value, quad - conj.value);
  }
  rep.verdict = (rep.samples > 0 && rep.infinite_conjugates == 0 && rep.min_value > tol)
                    ? MsoscVerdict::Pass
                    : MsoscVerdict::Fail;
  return rep;
}

struct ConditionReport {
  MsrcqReport msrcq;
  MsoscReport msosc;
  bool critical_cone_trivial = false;
  double residual = 0.0;
  double classification_tol = 0.0;
  double span_rel_tol = kSpanRelTol;

  std::string to_text() const {
    std::ostringstream os;
    os << "kkt_residual = " << residual << "\n"
       << "msrcq = " << (msrcq.pass ? "pass" : "fail") << "\n"
       << "msrcq_rank = " << msrcq.rank_found << "\n"
       << "msrcq_dimension = " << msrcq.dimension_required << "\n"
       << "msosc = " << to_string(msosc.verdict) << "\n"
       << "msosc_samples = " << msosc.samples << "\n"
       << "msosc_min_value = " << msosc.min_value << "\n"
       << "critical_cone_trivial = " << (critical_cone_trivial ? "true" : "false") << "\n"
       << "classification_tol = " << classification_tol << "\n"
       << "span_rel_tol = " << span_rel_tol << "\n";
    return os.str();
  }
};

inline ConditionReport check_conditions(const ProblemInstance &P, const Point &x, const Mat &y,
                                        const Mat &z, int msosc_samples = 200,
                                        std::uint64_t seed = 1) {
  ConditionReport rep;
  rep.residual = kkt_residual(P, x, y, z);
  rep.classification_tol = detail::classification_tol(rep.residual);
  rep.msrcq = msrcq_check(P, x, y, z);
  rep.msosc = msosc_check(P, x, y, z, msosc_samples, 0.0, seed);
  rep.critical_cone_trivial = rep.msosc.verdict == MsoscVerdict::Vacuous;
  return rep;
}

// ---------------------------------------------------------------------------
// Calmness probe

struct ProbeTrial {
  double radius = 0.0;
  int trial = 0;
  bool solved = false;
  double ratio = 0.0;
  double residual = 0.0;
  int outer_iters = 0;
};

struct RadiusSummary {
  double radius = 0.0;
  int trials = 0;
  int failed = 0;
  double max_ratio = 0.0;
};

struct ProbeReport {
  std::vector<ProbeTrial> trials;
  std::vector<RadiusSummary> radii;
  double kappa_hat = 0.0;
  /// No growth beyond 2x between consecutive radii.
  bool bounded = false;
};

struct ProbeConfig {
  std::vector<double> radii{1e-2, 1e-3, 1e-4, 1e-5};
  int trials_per_radius = 20;
  std::uint64_t seed = 1;
  int jobs = 1;
  ALMConfig alm;
};

namespace detail {

/// Runs body(i) for i in [0, count) on up to `jobs` threads.
template <class Body>
void parallel_for(int count, int jobs, Body &&body) {
  jobs = std::max(1, std::min(jobs, count));
  if (jobs == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  for (int j = 0; j < jobs; ++j)
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto &t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  return h;
}

struct Perturbation {
  Mat a;
  Mat b;
  Mat c;
};

/// Unit-norm joint direction (a, b, c) for trial `trial`.
inline Perturbation unit_perturbation(const ProblemInstance &P, std::uint64_t seed, int trial) {
  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(trial)));
  Perturbation q;
  q.a = gaussian_matrix(P.manifold.rows(), P.manifold.cols(), rng);
  q.b = gaussian_matrix(P.g1.out_rows, P.g1.out_cols, rng);
  q.c = P.g2 ? gaussian_matrix(P.g2->out_rows, P.g2->out_cols, rng) : Mat(0, 0);
  const double nrm =
      std::sqrt(q.a.squaredNorm() + q.b.squaredNorm() + q.c.squaredNorm());
  q.a /= nrm;
  q.b /= nrm;
  if (q.c.size() > 0) q.c /= nrm;
  return q;
}

}  // namespace detail

/// For each radius r and trial, solves the KKT system perturbed by
/// q = (a, b, c) with ||q|| = r (a is an ambient tilt of f) by warm-started
/// ALM and records (d(x_q, x*) + ||y_q - y*|| + ||z_q - z*||) / r.
/// Directions depend on the trial index only, so radii are compared along
/// the same rays.
inline ProbeReport calmness_probe(const ProblemInstance &P, const Point &xs, const Mat &ys,
                                  const Mat &zs, const ProbeConfig &cfg) {
  if (!(kkt_residual(P, xs, ys, zs) <= 1e-10))
    throw std::invalid_argument("calmness_probe: reference triple is not KKT to 1e-10");
  if (!msrcq_check(P, xs, ys, zs).pass)
    throw std::invalid_argument("calmness_probe: M-SRCQ fails, multipliers are not unique");
  for (double r : cfg.radii)
    if (!(r > 0.0)) throw std::invalid_argument("calmness_probe: radii must be positive");

  const int per = cfg.trials_per_radius;
  const int total = static_cast<int>(cfg.radii.size()) * per;
  ProbeReport rep;
  rep.trials.resize(static_cast<std::size_t>(total));
  const KKTReference ref{xs, ys, zs};

  detail::parallel_for(total, cfg.jobs, [&](int idx) {
    const int ri = idx / per, t = idx % per;
    const double r = cfg.radii[static_cast<std::size_t>(ri)];
    const auto q = detail::unit_perturbation(P, cfg.seed, t);
    const ProblemInstance Pq = perturb(P, r * q.a, r * q.b, q.c.size() ? Mat(r * q.c) : Mat());
    ALMConfig acfg = cfg.alm;
    acfg.kkt_tol = std::min(1e-10, r * 1e-3);
    ProbeTrial out;
    out.radius = r;
    out.trial = t;
    const ALMResult res = alm_run(Pq, acfg, xs, ys, zs);
    out.solved = res.converged();
    out.outer_iters = static_cast<int>(res.history.size()) - 1;
    out.residual = res.history.back().R_max;
    out.ratio = triple_distance(P, res.x, res.y, res.z, ref) / r;
    rep.trials[static_cast<std::size_t>(idx)] = out;
  });

  for (std::size_t ri = 0; ri < cfg.radii.size(); ++ri) {
    RadiusSummary s;
    s.radius = cfg.radii[ri];
    for (int t = 0; t < per; ++t) {
      const auto &tr = rep.trials[ri * static_cast<std::size_t>(per) + static_cast<std::size_t>(t)];
      ++s.trials;
      if (!tr.solved) {
        ++s.failed;
        continue;
      }
      s.max_ratio = std::max(s.max_ratio, tr.ratio);
    }
    rep.radii.push_back(s);
    rep.kappa_hat = std::max(rep.kappa_hat, s.max_ratio);
  }
  rep.bounded = !rep.radii.empty();
  for (std::size_t i = 1; i < rep.radii.size(); ++i)
    if (rep.radii[i].max_ratio > 2.0 * rep.radii[i - 1].max_ratio) rep.bounded = false;
  for (const auto &s : rep.radii)
    if (s.failed == s.trials) rep.bounded = false;
  return rep;
}

// ---------------------------------------------------------------------------
// Error-bound fit

struct ErrorBoundSample {
  double dist = 0.0;
  double R = 0.0;
};

struct ErrorBoundReport {
  std::vector<ErrorBoundSample> samples;
  double c1 = 0.0;
  double c2 = 0.0;
  int used = 0;
  bool degenerate = true;
};

/// Samples (retract(x*, xi), y* + dy, z* + dz) with (xi, dy, dz) uniform in
/// the ball of the given radius and fits c1 = min dist/R, c2 = max dist/R.
inline ErrorBoundReport error_bound_fit(const ProblemInstance &P, const Point &xs, const Mat &ys,
                                        const Mat &zs, int n_samples = 500, double radius = 0.05,
                                        std::uint64_t seed = 1) {
  if (!(radius > 0.0)) throw std::invalid_argument("error_bound_fit: radius must be positive");
  const KKTReference ref{xs, ys, zs};
  const Mat B = tangent_basis(P.manifold, xs);
  const Index dt = B.cols(), dy = ys.size(), dz = P.g2 ? zs.size() : 0;
  const Index dim = dt + dy + dz;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  ErrorBoundReport rep;
  rep.c1 = std::numeric_limits<double>::infinity();
  for (int s = 0; s < n_samples; ++s) {
    Vec v(dim);
    for (Index i = 0; i < dim; ++i) v(i) = normal(rng);
    v *= radius * std::pow(unif(rng), 1.0 / static_cast<double>(dim)) / v.norm();
    const Mat xi = unflatten(B * v.head(dt), P.manifold.rows(), P.manifold.cols());
    Point x;
    try {
      x = retract(P.manifold, xs, xi);
    } catch (const RankDeficiencyError &) {
      continue;
    }
    const Mat y = ys + unflatten(v.segment(dt, dy), ys.rows(), ys.cols());
    const Mat z = dz > 0 ? Mat(zs + unflatten(v.tail(dz), zs.rows(), zs.cols())) : zs;
    ErrorBoundSample smp{triple_distance(P, x, y, z, ref), kkt_residual(P, x, y, z)};
    rep.samples.push_back(smp);
    if (smp.R > 1e-14) {
      const double q = smp.dist / smp.R;
      rep.c1 = std::min(rep.c1, q);
      rep.c2 = std::max(rep.c2, q);
      ++rep.used;
    }
  }
  rep.degenerate = rep.used == 0;
  if (rep.degenerate) rep.c1 = rep.c2 = 0.0;
  return rep;
}

}  // namespace riemalm
