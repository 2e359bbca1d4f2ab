#pragma once

// Randomized property checks shared by the unit tests and the acceptance
// runner. Each returns an Outcome holding the worst observed error.

#include "riemalm/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace riemalm::checks {

struct Outcome {
  bool ok = true;
  int cases = 0;
  double worst = 0.0;

  void record(double err, double limit) {
    ++cases;
    worst = std::max(worst, err);
    if (!(err <= limit)) ok = false;
  }
  void merge(const Outcome &o) {
    ok = ok && o.ok;
    cases += o.cases;
    worst = std::max(worst, o.worst);
  }
};

inline Mat gaussian(Index rows, Index cols, std::mt19937_64 &rng, double scale = 1.0) {
  return scale * gaussian_matrix(rows, cols, rng);
}

inline double uniform(std::mt19937_64 &rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Index uniform_index(std::mt19937_64 &rng, Index lo, Index hi) {
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

/// Nonexpansiveness of the soft threshold and the identity
/// prox(u, t) + clamp(u, t) = u.
inline Outcome prox_identities(int trials = 1000, std::uint64_t seed = 11) {
  std::mt19937_64 rng(seed);
  Outcome out;
  for (int k = 0; k < trials; ++k) {
    const Index n = uniform_index(rng, 1, 6);
    const ScaledL1 theta(uniform(rng, 0.05, 2.0));
    const double t = uniform(rng, 0.1, 3.0);
    const Mat u = gaussian(n, 1, rng, 2.0), v = gaussian(n, 1, rng, 2.0);
    const double expand = (theta.prox(u, t) - theta.prox(v, t)).norm() - (u - v).norm();
    out.record(std::max(0.0, expand), 1e-12);
    const double gap = (theta.prox(u, t) + theta.clamp_dual(u, t) - u).cwiseAbs().maxCoeff();
    out.record(gap, 1e-12 * std::max(1.0, u.cwiseAbs().maxCoeff()));
  }
  return out;
}

/// Envelope gradient against central differences of the envelope value,
/// h = 1e-5, skipping points within 1e-4 of the kinks |u_i| = mu / rho.
inline Outcome envelope_gradient_fd(int trials = 1000, std::uint64_t seed = 12) {
  std::mt19937_64 rng(seed);
  Outcome out;
  const double h = 1e-5;
  int done = 0;
  while (done < trials) {
    const Index n = uniform_index(rng, 1, 4);
    const ScaledL1 theta(uniform(rng, 0.05, 2.0));
    const double rho = uniform(rng, 0.5, 20.0);
    const Mat u = gaussian(n, 1, rng);
    const double kink = theta.mu() / rho;
    if (((u.array().abs() - kink).abs() < 1e-4).any()) continue;
    ++done;
    const Mat g = moreau_env(theta, u, rho).grad;
    Mat fd(n, 1);
    for (Index i = 0; i < n; ++i) {
      Mat up = u, um = u;
      up(i) += h;
      um(i) -= h;
      fd(i) = (moreau_env(theta, up, rho).value - moreau_env(theta, um, rho).value) / (2 * h);
    }
    out.record((fd - g).norm() / std::max(g.norm(), 1e-12), 1e-6);
  }
  return out;
}

inline Manifold random_manifold(std::mt19937_64 &rng, bool sphere) {
  if (sphere) return Manifold::sphere(uniform_index(rng, 2, 8));
  const Index m = uniform_index(rng, 2, 8), n = uniform_index(rng, 2, 8);
  return Manifold::fixed_rank(m, n, uniform_index(rng, 1, std::min(m, n)));
}

/// Idempotence and self-adjointness of the tangent projection on both
/// manifolds.
inline Outcome projection_identities(int trials = 200, std::uint64_t seed = 13) {
  std::mt19937_64 rng(seed);
  Outcome out;
  for (int k = 0; k < trials; ++k) {
    const Manifold M = random_manifold(rng, k % 2 == 0);
    const Point x = random_point(M, rng());
    const Mat u = gaussian(M.rows(), M.cols(), rng), v = gaussian(M.rows(), M.cols(), rng);
    const Mat pu = project_tangent(M, x, u);
    out.record((project_tangent(M, x, pu) - pu).norm() / std::max(1.0, u.norm()), 1e-10);
    const double asym = std::abs(inner(pu, v) - inner(u, project_tangent(M, x, v)));
    out.record(asym / std::max(1.0, u.norm() * v.norm()), 1e-10);
  }
  return out;
}

/// Sphere retractions stay on the sphere to 1e-12; fixed-rank retractions
/// keep exactly r singular values above the rank threshold.
inline Outcome retraction_feasibility(int trials = 200, std::uint64_t seed = 14) {
  std::mt19937_64 rng(seed);
  Outcome out;
  for (int k = 0; k < trials; ++k) {
    const bool sphere = k % 2 == 0;
    const Manifold M = random_manifold(rng, sphere);
    const Point x = random_point(M, rng());
    Mat xi = random_tangent(M, x, rng());
    if (xi.norm() == 0.0) continue;
    if (sphere) {
      xi *= uniform(rng, 0.0, 3.0) / xi.norm();
      out.record(std::abs(retract(M, x, xi).ambient.norm() - 1.0), 1e-12);
    } else {
      // Below the smallest singular value (>= 1) the rank cannot drop.
      xi *= 0.5 / xi.norm();
      const Point y = retract(M, x, xi);
      const Vec s = Eigen::JacobiSVD<Mat>(y.ambient).singularValues();
      const auto above = (s.array() > kRankThreshold).count();
      out.record(above == M.rank() && is_feasible(M, y, 1e-10) ? 0.0 : 1.0, 0.0);
    }
  }
  return out;
}

/// Random instances of the three built-in families for derivative checks.
inline std::vector<ProblemInstance> derivative_families(std::uint64_t seed = 15) {
  std::vector<ProblemInstance> out;
  out.push_back(build_family(CircleExample{}));
  out.push_back(build_family(SphereL1{sphere_l1_paper_matrix(), 0.25}));
  out.push_back(build_family(rmc_random(8, 7, 2, 2.0, seed).family()));
  return out;
}

/// Central-difference gradient of x -> L_rho(x, w, p) along the retraction
/// in each direction of an orthonormal tangent basis.
inline Mat aug_lagrangian_fd_grad(const ProblemInstance &P, const Point &x, const Mat &w,
                                  const Mat &p, double rho, double h = 1e-6) {
  const Mat B = tangent_basis(P.manifold, x);
  Vec d(B.cols());
  for (Index j = 0; j < B.cols(); ++j) {
    const Mat b = unflatten(B.col(j), P.manifold.rows(), P.manifold.cols());
    const double lp = aug_lagrangian(P, retract(P.manifold, x, h * b), w, p, rho, false).value;
    const double lm = aug_lagrangian(P, retract(P.manifold, x, -h * b), w, p, rho, false).value;
    d(j) = (lp - lm) / (2 * h);
  }
  return unflatten(B * d, P.manifold.rows(), P.manifold.cols());
}

/// aug_lagrangian rgrad against central differences, `points` random
/// points per family, rho = 5.
inline Outcome aug_lagrangian_fd(int points = 100, std::uint64_t seed = 16) {
  std::mt19937_64 rng(seed);
  Outcome out;
  for (const ProblemInstance &P : derivative_families()) {
    for (int k = 0; k < points; ++k) {
      const Point x = random_point(P.manifold, rng());
      const Mat w = gaussian(P.g1.out_rows, P.g1.out_cols, rng);
      const Mat p = P.g2 ? gaussian(P.g2->out_rows, P.g2->out_cols, rng) : Mat(0, 0);
      const Mat g = aug_lagrangian(P, x, w, p, 5.0).rgrad;
      const Mat fd = aug_lagrangian_fd_grad(P, x, w, p, 5.0);
      out.record((fd - g).norm() / std::max(g.norm(), 1e-12), 1e-5);
    }
  }
  return out;
}

/// grad_x L_rho(x, w, p) = grad_x L(x, y+, z+) on every recorded iteration.
inline Outcome chain_identity(const std::vector<IterationRecord> &history) {
  Outcome out;
  for (std::size_t i = 1; i < history.size(); ++i) out.record(history[i].chain_gap, 1e-10);
  return out;
}

/// Grid-search value of sup_w <y, w> - theta_down2(x; xi, w) over the cube
/// [-1e8, 1e8]^n with 21 points per axis. The function is positively
/// homogeneous in w, so the sup is 0 or +infinity.
inline double psi_grid_sup(const ScaledL1 &theta, const Mat &x, const Mat &xi, const Mat &y) {
  const Index n = x.size();
  const double scale = 1e8;
  double best = -std::numeric_limits<double>::infinity();
  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  while (true) {
    Mat w(n, 1);
    for (Index i = 0; i < n; ++i) w(i) = scale * (-1.0 + 0.1 * idx[static_cast<std::size_t>(i)]);
    best = std::max(best, inner(y, w) - theta.epi_down2(x, xi, w));
    Index i = 0;
    while (i < n && ++idx[static_cast<std::size_t>(i)] == 21) idx[static_cast<std::size_t>(i++)] = 0;
    if (i == n) break;
  }
  return best;
}

/// psi_conjugate finiteness against the grid oracle (+infinity when the grid
/// sup exceeds 1e6) on random instances of dimension 1 to 3.
inline Outcome psi_conjugate_oracle(int trials = 200, std::uint64_t seed = 17) {
  std::mt19937_64 rng(seed);
  Outcome out;
  for (int k = 0; k < trials; ++k) {
    const Index n = uniform_index(rng, 1, 3);
    const double mu = uniform(rng, 0.1, 1.0);
    const ScaledL1 theta(mu);
    Mat x(n, 1), xi(n, 1), y(n, 1);
    for (Index i = 0; i < n; ++i) {
      const auto pick = uniform_index(rng, 0, 2);
      x(i) = pick == 0 ? 0.0 : (pick == 1 ? 1.0 : -1.0) * uniform(rng, 0.1, 2.0);
      const auto dir = uniform_index(rng, 0, 2);
      xi(i) = dir == 0 ? 0.0 : (dir == 1 ? 1.0 : -1.0) * uniform(rng, 0.1, 2.0);
      switch (uniform_index(rng, 0, 4)) {
        case 0: y(i) = mu; break;
        case 1: y(i) = -mu; break;
        case 2: y(i) = uniform(rng, -mu + 0.05, mu - 0.05); break;
        case 3: y(i) = mu + uniform(rng, 0.05, 1.0); break;
        default: y(i) = -mu - uniform(rng, 0.05, 1.0); break;
      }
    }
    const bool oracle_infinite = psi_grid_sup(theta, x, xi, y) > 1e6;
    const ConjugateValue v = theta.psi_conjugate(x, xi, y);
    const bool agree = v.finite ? (!oracle_infinite && v.value == 0.0) : oracle_infinite;
    out.record(agree ? 0.0 : 1.0, 0.0);
  }
  return out;
}

/// theta^down and theta^downdown against their difference quotients,
/// t = 1e-9 for the first order and t = 1e-4 for the second.
inline Outcome epiderivative_oracles(int trials = 500, std::uint64_t seed = 18) {
  std::mt19937_64 rng(seed);
  Outcome out;
  for (int k = 0; k < trials; ++k) {
    const Index n = uniform_index(rng, 1, 5);
    const ScaledL1 theta(uniform(rng, 0.1, 1.0));
    Mat x(n, 1), xi(n, 1);
    for (Index i = 0; i < n; ++i) {
      const bool zero = uniform_index(rng, 0, 1) == 0;
      x(i) = zero ? 0.0 : (uniform_index(rng, 0, 1) ? 1.0 : -1.0) * uniform(rng, 0.1, 1.0);
      const bool flat = uniform_index(rng, 0, 2) == 0;
      xi(i) = flat ? 0.0 : (uniform_index(rng, 0, 1) ? 1.0 : -1.0) * uniform(rng, 0.1, 1.0);
    }
    const Mat d = gaussian(n, 1, rng), w = gaussian(n, 1, rng);
    // Termwise differences keep the quotient free of cancellation in the sum.
    auto delta = [&](const Mat &step) {
      double acc = 0.0;
      for (Index i = 0; i < n; ++i) acc += std::abs(x(i) + step(i)) - std::abs(x(i));
      return theta.mu() * acc;
    };
    const double t1 = 1e-9;
    out.record(std::abs(delta(t1 * d) / t1 - theta.epi_down(x, d)), 1e-6);
    const double t2 = 1e-4;
    const double q2 = (delta(t2 * xi + 0.5 * t2 * t2 * w) - t2 * theta.epi_down(x, xi)) /
                      (0.5 * t2 * t2);
    out.record(std::abs(q2 - theta.epi_down2(x, xi, w)), 1e-6);
  }
  return out;
}

}  // namespace riemalm::checks
