#pragma once

/// Proximal and variational calculus for theta = mu * ||.||_1 and for the
/// polyhedral constraint sets Q. Matrices are handled as flattened vectors.

#include "riemalm/linalg.hpp"

#include <limits>
#include <variant>

namespace riemalm {

/// Tolerance used to classify a coordinate of x as zero in the directional
/// epiderivative formulas.
inline constexpr double kZeroClassTol = 1e-10;

/// Per-coordinate description of a polyhedral cone that is a product of
/// one-dimensional cones.
enum class CoordCone { Free, Zero, Nonneg, Nonpos };

/// Value of a conjugate that is either finite or +infinity.
struct ConjugateValue {
  bool finite = true;
  double value = 0.0;

  static ConjugateValue infinite() { return {false, std::numeric_limits<double>::infinity()}; }
  static ConjugateValue of(double v) { return {true, v}; }
};

/// theta(u) = mu * sum_i |u_i|.
class ScaledL1 {
 public:
  /// mu = 0 gives theta == 0.
  explicit ScaledL1(double mu = 1.0) : mu_(mu) {
    if (!(mu >= 0.0) || !std::isfinite(mu)) throw std::invalid_argument("ScaledL1 requires mu >= 0");
  }

  double mu() const { return mu_; }

  double value(const Mat &u) const { return mu_ * u.cwiseAbs().sum(); }

  /// prox_{t theta}(u): elementwise soft threshold at t * mu.
  Mat prox(const Mat &u, double t) const {
    if (!(t > 0.0)) throw std::invalid_argument("prox requires t > 0");
    return u - clamp_dual(u, t);
  }

  /// Projection onto [-t mu, t mu], the prox of the conjugate; satisfies
  /// prox(u, t) + clamp_dual(u, t) == u.
  Mat clamp_dual(const Mat &u, double t) const {
    const double thr = t * mu_;
    return u.cwiseMax(-thr).cwiseMin(thr);
  }

  /// First-order directional epiderivative theta^down(x; d).
  double epi_down(const Mat &x, const Mat &d, double zero_tol = kZeroClassTol) const {
    require_same_shape(x, d, "epiderivative_down");
    double acc = 0.0;
    for (Index i = 0; i < x.size(); ++i) {
      const double xi = x.data()[i], di = d.data()[i];
      if (std::abs(xi) <= zero_tol)
        acc += std::abs(di);
      else
        acc += xi > 0.0 ? di : -di;
    }
    return mu_ * acc;
  }

  /// Lower second-order epiderivative theta_-^{down down}(x; xi, w).
  double epi_down2(const Mat &x, const Mat &xi, const Mat &w,
                   double zero_tol = kZeroClassTol) const {
    require_same_shape(x, xi, "epiderivative_down2");
    require_same_shape(x, w, "epiderivative_down2");
    double acc = 0.0;
    for (Index i = 0; i < x.size(); ++i) {
      const double wi = w.data()[i];
      switch (second_order_block(x.data()[i], xi.data()[i], zero_tol)) {
        case CoordCone::Free: acc += std::abs(wi); break;
        case CoordCone::Nonneg: acc += wi; break;
        case CoordCone::Nonpos: acc -= wi; break;
        case CoordCone::Zero: break;
      }
    }
    return mu_ * acc;
  }

  /// Conjugate of w -> theta_-^{down down}(x; xi, w) at y. Zero when y is
  /// blockwise compatible (|y_i| <= mu on the {x_i = 0, xi_i = 0} block,
  /// y_i = mu on the positive block, y_i = -mu on the negative block),
  /// +infinity otherwise.
  ConjugateValue psi_conjugate(const Mat &x, const Mat &xi, const Mat &y,
                               double zero_tol = kZeroClassTol,
                               double compat_tol = 1e-8) const {
    require_same_shape(x, xi, "psi_conjugate");
    require_same_shape(x, y, "psi_conjugate");
    for (Index i = 0; i < x.size(); ++i) {
      const double yi = y.data()[i];
      switch (second_order_block(x.data()[i], xi.data()[i], zero_tol)) {
        case CoordCone::Free:
          if (std::abs(yi) > mu_ + compat_tol) return ConjugateValue::infinite();
          break;
        case CoordCone::Nonneg:
          if (std::abs(yi - mu_) > compat_tol) return ConjugateValue::infinite();
          break;
        case CoordCone::Nonpos:
          if (std::abs(yi + mu_) > compat_tol) return ConjugateValue::infinite();
          break;
        case CoordCone::Zero: break;
      }
    }
    return ConjugateValue::of(0.0);
  }

  /// Per-coordinate form of C_theta(u, y) = {d : theta^down(u; d) = <d, y>}
  /// for a subgradient y in d theta(u).
  CoordCone critical_coordinate(double u, double y, double tol) const {
    if (std::abs(u) > tol || mu_ == 0.0) return CoordCone::Free;
    if (y >= mu_ - tol) return CoordCone::Nonneg;
    if (y <= -mu_ + tol) return CoordCone::Nonpos;
    return CoordCone::Zero;
  }

 private:
  // Block of coordinate i in the second-order formula: Free marks the
  // {x_i = 0, xi_i = 0} block (|w_i| term), Nonneg/Nonpos the signed blocks.
  static CoordCone second_order_block(double x, double xi, double zero_tol) {
    if (x > zero_tol) return CoordCone::Nonneg;
    if (x < -zero_tol) return CoordCone::Nonpos;
    if (xi > zero_tol) return CoordCone::Nonneg;
    if (xi < -zero_tol) return CoordCone::Nonpos;
    return CoordCone::Free;
  }

  double mu_;
};

/// Moreau envelope theta^rho(u) = min_p theta(p) + rho/2 ||u - p||^2 and its
/// gradient rho (u - prox_{theta/rho}(u)).
struct EnvelopeValue {
  double value = 0.0;
  Mat grad;
};

inline EnvelopeValue moreau_env(const ScaledL1 &theta, const Mat &u, double rho) {
  if (!(rho > 0.0)) throw std::invalid_argument("moreau_env requires rho > 0");
  // u - prox(u, 1/rho) taken as the clamp itself, which avoids cancellation
  // at large rho.
  const Mat diff = theta.clamp_dual(u, 1.0 / rho);
  return {theta.value(u - diff) + 0.5 * rho * diff.squaredNorm(), rho * diff};
}

struct ZeroSet {};
struct NonnegOrthant {};
struct FullSpace {};
struct Box {
  Mat lower;
  Mat upper;
};

/// Closed convex polyhedral set Q of a given shape.
class ConvexSet {
 public:
  using Kind = std::variant<ZeroSet, NonnegOrthant, Box, FullSpace>;

  static ConvexSet zero(Index rows, Index cols = 1) { return {ZeroSet{}, rows, cols}; }
  static ConvexSet nonneg(Index rows, Index cols = 1) { return {NonnegOrthant{}, rows, cols}; }
  static ConvexSet full(Index rows, Index cols = 1) { return {FullSpace{}, rows, cols}; }
  static ConvexSet box(Mat lower, Mat upper) {
    require_same_shape(lower, upper, "Box");
    if ((lower.array() > upper.array()).any())
      throw std::invalid_argument("Box requires lower <= upper");
    const Index r = lower.rows(), c = lower.cols();
    return {Box{std::move(lower), std::move(upper)}, r, c};
  }

  const Kind &kind() const { return kind_; }
  Index rows() const { return rows_; }
  Index cols() const { return cols_; }

  Mat project(const Mat &v) const {
    check_shape(v);
    return std::visit(
        [&](const auto &k) -> Mat {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, ZeroSet>) return Mat::Zero(v.rows(), v.cols());
          else if constexpr (std::is_same_v<K, NonnegOrthant>) return v.cwiseMax(0.0);
          else if constexpr (std::is_same_v<K, Box>) return v.cwiseMax(k.lower).cwiseMin(k.upper);
          else return v;
        },
        kind_);
  }

  bool contains(const Mat &s, double tol) const {
    return (project(s) - s).cwiseAbs().maxCoeff() <= tol;
  }

  /// Per-coordinate form of T_Q(s) intersected with z^perp, for z in N_Q(s).
  /// Pass z = 0 to get the tangent cone alone.
  CoordCone critical_coordinate(Index i, double s, double z, double tol) const {
    return std::visit(
        [&](const auto &k) -> CoordCone {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, ZeroSet>) return CoordCone::Zero;
          else if constexpr (std::is_same_v<K, FullSpace>) return CoordCone::Free;
          else if constexpr (std::is_same_v<K, NonnegOrthant>) {
            if (s > tol) return CoordCone::Free;
            return z < -tol ? CoordCone::Zero : CoordCone::Nonneg;
          } else {
            const double lo = k.lower.data()[i], hi = k.upper.data()[i];
            const bool at_lo = s <= lo + tol, at_hi = s >= hi - tol;
            if (at_lo && at_hi) return CoordCone::Zero;
            if (at_lo) return z < -tol ? CoordCone::Zero : CoordCone::Nonneg;
            if (at_hi) return z > tol ? CoordCone::Zero : CoordCone::Nonpos;
            return CoordCone::Free;
          }
        },
        kind_);
  }

  void check_shape(const Mat &v) const {
    if (v.rows() != rows_ || v.cols() != cols_)
      throw std::invalid_argument("ConvexSet: shape mismatch");
  }

 private:
  ConvexSet(Kind kind, Index rows, Index cols)
      : kind_(std::move(kind)), rows_(rows), cols_(cols) {}
  Kind kind_;
  Index rows_;
  Index cols_;
};

inline Mat project_set(const ConvexSet &Q, const Mat &v) { return Q.project(v); }

/// (rho/2) dist^2(v, Q) and its gradient rho (v - Pi_Q v).
inline EnvelopeValue dist2_grad(const ConvexSet &Q, const Mat &v, double rho) {
  const Mat diff = v - Q.project(v);
  return {0.5 * rho * diff.squaredNorm(), rho * diff};
}

/// z in N_Q(s) iff s = Pi_Q(s + z).
inline bool normal_cone_member(const ConvexSet &Q, const Mat &s, const Mat &z, double tol) {
  require_same_shape(s, z, "normal_cone_member");
  if (!Q.contains(s, tol))
    throw std::invalid_argument("normal_cone_member: s is not in Q");
  return (Q.project(s + z) - s).cwiseAbs().maxCoeff() <= tol;
}

/// Membership of d in a coordinate-product cone.
inline bool coord_cone_member(CoordCone c, double d, double tol) {
  switch (c) {
    case CoordCone::Free: return true;
    case CoordCone::Zero: return std::abs(d) <= tol;
    case CoordCone::Nonneg: return d >= -tol;
    case CoordCone::Nonpos: return d <= tol;
  }
  return false;
}

}  // namespace riemalm
