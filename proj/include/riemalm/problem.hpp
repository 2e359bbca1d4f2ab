#pragma once

/// Composite problems  min f(x) + theta(g1(x))  s.t.  g2(x) in Q,  x in M,
/// their (augmented) Lagrangians, and the built-in problem families.
///
/// Every map is defined on the ambient space and supplies Euclidean
/// derivatives; Riemannian quantities come from tangent projection.

#include "riemalm/convex.hpp"
#include "riemalm/manifold.hpp"

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace riemalm {

/// Smooth real function with ambient gradient and optional ambient
/// Hessian-vector product.
struct SmoothFunction {
  std::function<double(const Mat &)> value;
  std::function<Mat(const Mat &)> egrad;
  std::function<Mat(const Mat &, const Mat &)> ehess_apply;
};

/// Smooth map g: ambient -> R^{rows x cols} with its Jacobian, the ambient
/// adjoint of the Jacobian, and optionally the ambient Hessian of
/// x -> <y, g(x)> applied to a direction.
struct SmoothMap {
  Index out_rows = 0;
  Index out_cols = 1;
  std::function<Mat(const Mat &)> value;
  std::function<Mat(const Mat &, const Mat &)> jacobian_apply;
  std::function<Mat(const Mat &, const Mat &)> jacobian_adjoint;
  std::function<Mat(const Mat &, const Mat &, const Mat &)> adjoint_hess_apply;
};

struct ProblemInstance {
  Manifold manifold;
  SmoothFunction f;
  SmoothMap g1;
  ScaledL1 theta;
  std::optional<SmoothMap> g2;
  std::optional<ConvexSet> Q;
  std::string label;

  bool has_constraint() const { return g2.has_value(); }

  Mat zero_y() const { return Mat::Zero(g1.out_rows, g1.out_cols); }
  Mat zero_z() const {
    return g2 ? Mat::Zero(g2->out_rows, g2->out_cols) : Mat(0, 0);
  }
};

inline void validate(const ProblemInstance &P) {
  if (P.g2.has_value() != P.Q.has_value())
    throw std::invalid_argument("g2 must be present iff Q is present");
  if (P.g2 && (P.Q->rows() != P.g2->out_rows || P.Q->cols() != P.g2->out_cols))
    throw std::invalid_argument("shape of Q does not match g2");
  if (!P.f.value || !P.f.egrad || !P.g1.value || !P.g1.jacobian_apply ||
      !P.g1.jacobian_adjoint)
    throw std::invalid_argument("problem maps are incomplete");
}

// ---------------------------------------------------------------------------
// Lagrangian L(x, y, z) = f(x) + <y, g1(x)> + <z, g2(x)>

inline double lagrangian_value(const ProblemInstance &P, const Point &x, const Mat &y,
                               const Mat &z) {
  double v = P.f.value(x.ambient) + inner(y, P.g1.value(x.ambient));
  if (P.g2) v += inner(z, P.g2->value(x.ambient));
  return v;
}

inline Mat lagrangian_egrad(const ProblemInstance &P, const Mat &x, const Mat &y,
                            const Mat &z) {
  Mat g = P.f.egrad(x) + P.g1.jacobian_adjoint(x, y);
  if (P.g2) g += P.g2->jacobian_adjoint(x, z);
  return g;
}

inline Mat lagrangian_rgrad(const ProblemInstance &P, const Point &x, const Mat &y,
                            const Mat &z) {
  return project_tangent(P.manifold, x, lagrangian_egrad(P, x.ambient, y, z));
}

/// Ambient Hessian of L(., y, z) applied to xi. Falls back to central
/// differences of the ambient gradient (h = 1e-6 (1 + ||x||)) when any
/// analytic second-order piece is missing.
inline Mat lagrangian_ehess_apply(const ProblemInstance &P, const Mat &x, const Mat &y,
                                  const Mat &z, const Mat &xi) {
  const bool analytic = P.f.ehess_apply && P.g1.adjoint_hess_apply &&
                        (!P.g2 || P.g2->adjoint_hess_apply);
  if (analytic) {
    Mat h = P.f.ehess_apply(x, xi) + P.g1.adjoint_hess_apply(x, y, xi);
    if (P.g2) h += P.g2->adjoint_hess_apply(x, z, xi);
    return h;
  }
  const double nrm = xi.norm();
  if (nrm == 0.0) return Mat::Zero(xi.rows(), xi.cols());
  const double h = 1e-6 * (1.0 + x.norm());
  const Mat dir = xi / nrm;
  return (lagrangian_egrad(P, x + h * dir, y, z) - lagrangian_egrad(P, x - h * dir, y, z)) *
         (nrm / (2.0 * h));
}

/// Riemannian Hessian of L(., y, z) at x applied to a tangent xi.
inline Mat lagrangian_rhess_apply(const ProblemInstance &P, const Point &x, const Mat &y,
                                  const Mat &z, const Mat &xi) {
  if (P.manifold.is_sphere()) {
    return riemannian_hess_apply(P.manifold, x, lagrangian_egrad(P, x.ambient, y, z),
                                 lagrangian_ehess_apply(P, x.ambient, y, z, xi), xi);
  }
  return riemannian_hess_fd(
      P.manifold, x, [&](const Mat &a) { return lagrangian_egrad(P, a, y, z); }, xi);
}

// ---------------------------------------------------------------------------
// Augmented Lagrangian
// L_rho(x, w, p) = f(x) + theta^rho(g1(x) + w/rho) + rho/2 dist^2(g2(x) + p/rho, Q)

struct AugLagValue {
  double value = 0.0;
  Mat rgrad;
  /// Multiplier estimates rho (u - prox_{theta/rho}(u)) and rho (v - Pi_Q v);
  /// by the envelope chain rule grad L_rho(x, w, p) = grad L(x, y_hat, z_hat).
  Mat y_hat;
  Mat z_hat;
};

inline AugLagValue aug_lagrangian(const ProblemInstance &P, const Point &x, const Mat &w,
                                  const Mat &p, double rho, bool with_gradient = true) {
  if (!(rho > 0.0)) throw std::invalid_argument("aug_lagrangian requires rho > 0");
  AugLagValue out;
  const Mat &xa = x.ambient;
  const auto env = moreau_env(P.theta, P.g1.value(xa) + w / rho, rho);
  out.value = P.f.value(xa) + env.value;
  out.y_hat = env.grad;
  if (P.g2) {
    const auto d2 = dist2_grad(*P.Q, P.g2->value(xa) + p / rho, rho);
    out.value += d2.value;
    out.z_hat = d2.grad;
  } else {
    out.z_hat = Mat(0, 0);
  }
  if (with_gradient) out.rgrad = lagrangian_rgrad(P, x, out.y_hat, out.z_hat);
  return out;
}

// ---------------------------------------------------------------------------
// Perturbed instances: f - <a, x>, g1 + b, g2 + c.

inline ProblemInstance perturb(const ProblemInstance &P, const Mat &a, const Mat &b,
                               const Mat &c) {
  ProblemInstance out = P;
  if (a.size() > 0) {
    require_same_shape(a, Mat::Zero(P.manifold.rows(), P.manifold.cols()), "perturb(a)");
    const auto f = P.f;
    out.f.value = [f, a](const Mat &x) { return f.value(x) - inner(a, x); };
    out.f.egrad = [f, a](const Mat &x) -> Mat { return f.egrad(x) - a; };
  }
  if (b.size() > 0) {
    require_same_shape(b, P.zero_y(), "perturb(b)");
    const auto g1 = P.g1.value;
    out.g1.value = [g1, b](const Mat &x) -> Mat { return g1(x) + b; };
  }
  if (c.size() > 0) {
    if (!P.g2) throw std::invalid_argument("perturb(c) without constraint");
    require_same_shape(c, P.zero_z(), "perturb(c)");
    const auto g2 = P.g2->value;
    out.g2->value = [g2, c](const Mat &x) -> Mat { return g2(x) + c; };
  }
  out.label = P.label + "+perturbed";
  return out;
}

// ---------------------------------------------------------------------------
// Built-in families

/// min x2^2 + |x1 - x2|  s.t.  2 x1 + x2 >= 0,  x on the unit circle.
struct CircleExample {};

/// min -||A x||^2 + mu ||x||_1 on the unit sphere.
struct SphereL1 {
  Mat A;
  double mu = 0.25;
};

/// min ||P_Omega(X - A)||_1 over rank-r matrices. `omega` lists observed
/// (row, col) pairs.
struct RobustCompletion {
  Mat A;
  std::vector<std::pair<Index, Index>> omega;
  Index rank = 1;
};

using BuiltinFamily = std::variant<CircleExample, SphereL1, RobustCompletion>;

namespace detail {

inline SmoothMap identity_map(Index n) {
  SmoothMap g;
  g.out_rows = n;
  g.out_cols = 1;
  g.value = [](const Mat &x) -> Mat { return x; };
  g.jacobian_apply = [](const Mat &, const Mat &xi) -> Mat { return xi; };
  g.jacobian_adjoint = [](const Mat &, const Mat &y) -> Mat { return y; };
  g.adjoint_hess_apply = [](const Mat &, const Mat &, const Mat &xi) -> Mat {
    return Mat::Zero(xi.rows(), xi.cols());
  };
  return g;
}

inline ProblemInstance build(const CircleExample &) {
  SmoothFunction f;
  f.value = [](const Mat &x) { return x(1) * x(1); };
  f.egrad = [](const Mat &x) -> Mat {
    Mat g(2, 1);
    g << 0.0, 2.0 * x(1);
    return g;
  };
  f.ehess_apply = [](const Mat &, const Mat &xi) -> Mat {
    Mat h(2, 1);
    h << 0.0, 2.0 * xi(1);
    return h;
  };

  auto linear_scalar = [](double c0, double c1) {
    SmoothMap g;
    g.out_rows = 1;
    g.out_cols = 1;
    g.value = [=](const Mat &x) -> Mat { return Mat::Constant(1, 1, c0 * x(0) + c1 * x(1)); };
    g.jacobian_apply = [=](const Mat &, const Mat &xi) -> Mat {
      return Mat::Constant(1, 1, c0 * xi(0) + c1 * xi(1));
    };
    g.jacobian_adjoint = [=](const Mat &, const Mat &y) -> Mat {
      Mat a(2, 1);
      a << c0 * y(0), c1 * y(0);
      return a;
    };
    g.adjoint_hess_apply = [](const Mat &, const Mat &, const Mat &xi) -> Mat {
      return Mat::Zero(xi.rows(), xi.cols());
    };
    return g;
  };

  return ProblemInstance{Manifold::sphere(2), f,
                         linear_scalar(1.0, -1.0),
                         ScaledL1(1.0),
                         linear_scalar(2.0, 1.0),
                         ConvexSet::nonneg(1),
                         "circle"};
}

inline ProblemInstance build(const SphereL1 &fam) {
  if (fam.A.rows() != fam.A.cols() || fam.A.rows() < 2)
    throw std::invalid_argument("SphereL1 requires a square A with n >= 2");
  const Index n = fam.A.rows();
  const Mat G = fam.A.transpose() * fam.A;
  SmoothFunction f;
  f.value = [G](const Mat &x) { return -inner(x, G * x); };
  f.egrad = [G](const Mat &x) -> Mat { return -2.0 * (G * x); };
  f.ehess_apply = [G](const Mat &, const Mat &xi) -> Mat { return -2.0 * (G * xi); };
  return ProblemInstance{Manifold::sphere(n), f,          identity_map(n), ScaledL1(fam.mu),
                         std::nullopt,        std::nullopt, "sphere-l1"};
}

inline ProblemInstance build(const RobustCompletion &fam) {
  const Index m = fam.A.rows(), n = fam.A.cols();
  Mat mask = Mat::Zero(m, n);
  for (const auto &[i, j] : fam.omega) {
    if (i < 0 || i >= m || j < 0 || j >= n)
      throw std::invalid_argument("RMC: observed index out of range");
    mask(i, j) = 1.0;
  }
  const Mat A = fam.A;
  SmoothFunction f;
  f.value = [](const Mat &) { return 0.0; };
  f.egrad = [m, n](const Mat &) -> Mat { return Mat::Zero(m, n); };
  f.ehess_apply = [m, n](const Mat &, const Mat &) -> Mat { return Mat::Zero(m, n); };
  SmoothMap g;
  g.out_rows = m;
  g.out_cols = n;
  g.value = [mask, A](const Mat &x) -> Mat { return mask.cwiseProduct(x - A); };
  g.jacobian_apply = [mask](const Mat &, const Mat &xi) -> Mat { return mask.cwiseProduct(xi); };
  g.jacobian_adjoint = [mask](const Mat &, const Mat &y) -> Mat { return mask.cwiseProduct(y); };
  g.adjoint_hess_apply = [m, n](const Mat &, const Mat &, const Mat &) -> Mat {
    return Mat::Zero(m, n);
  };
  return ProblemInstance{Manifold::fixed_rank(m, n, fam.rank),
                         f,
                         g,
                         ScaledL1(1.0),
                         std::nullopt,
                         std::nullopt,
                         "rmc"};
}

}  // namespace detail

inline ProblemInstance build_family(const BuiltinFamily &family) {
  ProblemInstance P = std::visit([](const auto &fam) { return detail::build(fam); }, family);
  validate(P);
  return P;
}

/// The 5 x 5 matrix of the sphere-l1 example; the optimum is x = -e2 (or e2).
inline Mat sphere_l1_paper_matrix() {
  Mat A = Mat::Zero(5, 5);
  A(0, 0) = 10.0;
  A(1, 1) = 25.0;
  A(2, 2) = 1.028;
  A(2, 3) = 1.104;
  A(3, 2) = 1.104;
  A(3, 3) = 1.672;
  A(4, 4) = 8.0;
  return A;
}

}  // namespace riemalm
