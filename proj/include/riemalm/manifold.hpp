#pragma once

/// Closed-form geometry of the unit sphere S^{n-1} and of the manifold of
/// m x n matrices of fixed rank r, both as embedded submanifolds with the
/// ambient Euclidean (Frobenius) metric.

#include "riemalm/linalg.hpp"

#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>

namespace riemalm {

/// Singular values at or below this threshold count as zero.
inline constexpr double kRankThreshold = 1e-12;

class RankDeficiencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ManifoldKind { Sphere, FixedRank };

/// Exponential map (default) or the cheaper normalization x + xi / ||x + xi||.
enum class SphereRetraction { Exponential, Normalize };

class Manifold {
 public:
  static Manifold sphere(Index n,
                         SphereRetraction retraction = SphereRetraction::Exponential) {
    if (n < 2) throw std::invalid_argument("sphere dimension must be >= 2");
    Manifold m;
    m.kind_ = ManifoldKind::Sphere;
    m.rows_ = n;
    m.cols_ = 1;
    m.rank_ = 0;
    m.sphere_retraction_ = retraction;
    return m;
  }

  static Manifold fixed_rank(Index rows, Index cols, Index rank) {
    if (rows < 1 || cols < 1)
      throw std::invalid_argument("fixed-rank dimensions must be positive");
    if (rank < 1 || rank > std::min(rows, cols))
      throw std::invalid_argument("fixed-rank rank must satisfy 1 <= r <= min(m, n)");
    Manifold m;
    m.kind_ = ManifoldKind::FixedRank;
    m.rows_ = rows;
    m.cols_ = cols;
    m.rank_ = rank;
    return m;
  }

  ManifoldKind kind() const { return kind_; }
  bool is_sphere() const { return kind_ == ManifoldKind::Sphere; }
  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index rank() const { return rank_; }
  SphereRetraction sphere_retraction() const { return sphere_retraction_; }

  /// Intrinsic dimension.
  Index dimension() const {
    if (is_sphere()) return rows_ - 1;
    return (rows_ + cols_ - rank_) * rank_;
  }

 private:
  Manifold() = default;
  ManifoldKind kind_ = ManifoldKind::Sphere;
  Index rows_ = 0;
  Index cols_ = 0;
  Index rank_ = 0;
  SphereRetraction sphere_retraction_ = SphereRetraction::Exponential;
};

/// Thin SVD factors X = U diag(s) V^T with s sorted descending.
struct LowRankFactors {
  Mat U;
  Vec s;
  Mat V;
};

/// A point on the manifold. Fixed-rank points also carry their factors, kept
/// consistent with `ambient`.
struct Point {
  Mat ambient;
  std::optional<LowRankFactors> factors;
};

namespace detail {

inline void require_ambient_shape(const Manifold &M, const Mat &v, const char *what) {
  if (v.rows() != M.rows() || v.cols() != M.cols())
    throw std::invalid_argument(std::string(what) + ": expected " +
                                std::to_string(M.rows()) + "x" +
                                std::to_string(M.cols()) + " ambient, got " +
                                std::to_string(v.rows()) + "x" +
                                std::to_string(v.cols()));
}

inline const LowRankFactors &factors_of(const Point &x) {
  if (!x.factors) throw std::invalid_argument("fixed-rank point without factors");
  return *x.factors;
}

inline Point point_from_factors(Mat U, Vec s, Mat V) {
  if (s.size() > 0 && s(s.size() - 1) <= kRankThreshold)
    throw RankDeficiencyError("fixed-rank retraction dropped rank (sigma_min = " +
                              std::to_string(s(s.size() - 1)) + ")");
  Point p;
  p.ambient = U * s.asDiagonal() * V.transpose();
  p.factors = LowRankFactors{std::move(U), std::move(s), std::move(V)};
  return p;
}

/// Truncated SVD of a dense matrix to rank r.
inline Point truncate_dense(const Mat &a, Index r) {
  Eigen::BDCSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return point_from_factors(svd.matrixU().leftCols(r), svd.singularValues().head(r),
                            svd.matrixV().leftCols(r));
}

/// Orthonormal basis (m x r) of a space containing the columns of `b` and
/// orthogonal to the columns of the orthonormal `basis`. Requires m >= 2r.
inline Mat complement_orthonormal(const Mat &b, const Mat &basis) {
  const Index m = b.rows(), r = b.cols();
  Mat q = Eigen::HouseholderQR<Mat>(b).householderQ() * Mat::Identity(m, r);
  q -= basis * (basis.transpose() * q);
  return Eigen::HouseholderQR<Mat>(q).householderQ() * Mat::Identity(m, r);
}

}  // namespace detail

/// Builds a point from an ambient representation that already lies on M.
inline Point make_point(const Manifold &M, const Mat &ambient) {
  detail::require_ambient_shape(M, ambient, "make_point");
  if (M.is_sphere()) {
    if (std::abs(ambient.norm() - 1.0) > 1e-12)
      throw std::invalid_argument("make_point: sphere point must have unit norm");
    return Point{ambient, std::nullopt};
  }
  Point p = detail::truncate_dense(ambient, M.rank());
  if ((p.ambient - ambient).norm() > 1e-10 * std::max(1.0, ambient.norm()))
    throw std::invalid_argument("make_point: matrix does not have rank r");
  p.ambient = ambient;
  return p;
}

/// Metric projection of an arbitrary ambient matrix onto M (normalization on
/// the sphere, truncated SVD on the fixed-rank manifold).
inline Point project_to_manifold(const Manifold &M, const Mat &ambient) {
  detail::require_ambient_shape(M, ambient, "project_to_manifold");
  if (M.is_sphere()) {
    const double nrm = ambient.norm();
    if (nrm <= 0.0) throw std::invalid_argument("cannot normalize the zero vector");
    return Point{ambient / nrm, std::nullopt};
  }
  return detail::truncate_dense(ambient, M.rank());
}

/// Checks the point invariants to the given tolerances.
inline bool is_feasible(const Manifold &M, const Point &x, double tol = 1e-10) {
  if (x.ambient.rows() != M.rows() || x.ambient.cols() != M.cols()) return false;
  if (M.is_sphere()) return std::abs(x.ambient.norm() - 1.0) <= std::max(tol, 1e-12);
  if (!x.factors) return false;
  const auto &f = *x.factors;
  const Index r = M.rank();
  if (f.U.cols() != r || f.V.cols() != r || f.s.size() != r) return false;
  if ((f.U.transpose() * f.U - Mat::Identity(r, r)).norm() > tol) return false;
  if ((f.V.transpose() * f.V - Mat::Identity(r, r)).norm() > tol) return false;
  if (f.s.minCoeff() <= kRankThreshold) return false;
  const Mat rebuilt = f.U * f.s.asDiagonal() * f.V.transpose();
  return (rebuilt - x.ambient).norm() <= tol * std::max(1.0, x.ambient.norm());
}

/// Orthogonal projection of an ambient vector onto T_x M.
inline Mat project_tangent(const Manifold &M, const Point &x, const Mat &v) {
  detail::require_ambient_shape(M, v, "project_tangent");
  if (M.is_sphere()) return v - x.ambient * inner(x.ambient, v);
  const auto &f = detail::factors_of(x);
  const Mat UtV = f.U.transpose() * v;  // r x n
  const Mat VV = v * f.V;               // m x r
  const Mat core = UtV * f.V;           // r x r
  return f.U * UtV + VV * f.V.transpose() - f.U * core * f.V.transpose();
}

inline Mat riemannian_grad(const Manifold &M, const Point &x, const Mat &egrad) {
  return project_tangent(M, x, egrad);
}

/// Retraction R_x(xi): exact exponential map on the sphere (or normalization,
/// per the manifold flag); metric projection of x + xi on the fixed-rank
/// manifold. xi must be tangent at x.
inline Point retract(const Manifold &M, const Point &x, const Mat &xi) {
  detail::require_ambient_shape(M, xi, "retract");
  if (M.is_sphere()) {
    const double nrm = xi.norm();
    if (nrm == 0.0) return x;
    Mat y;
    if (M.sphere_retraction() == SphereRetraction::Exponential)
      y = std::cos(nrm) * x.ambient + (std::sin(nrm) / nrm) * xi;
    else
      y = x.ambient + xi;
    y /= y.norm();
    return Point{std::move(y), std::nullopt};
  }

  const auto &f = detail::factors_of(x);
  const Index m = M.rows(), n = M.cols(), r = M.rank();
  if (xi.norm() == 0.0) return x;
  if (m < 2 * r || n < 2 * r)
    return detail::truncate_dense(x.ambient + xi, r);

  // x + xi = [U Qu] [[S + C, Rv^T], [Ru, 0]] [V Qv]^T for tangent xi.
  const Mat xiV = xi * f.V;
  const Mat Utxi = f.U.transpose() * xi;
  const Mat C = Utxi * f.V;
  const Mat Up = xiV - f.U * C;
  const Mat Vp = Utxi.transpose() - f.V * C.transpose();
  const Mat Qu = detail::complement_orthonormal(Up, f.U);
  const Mat Qv = detail::complement_orthonormal(Vp, f.V);
  Mat K = Mat::Zero(2 * r, 2 * r);
  K.topLeftCorner(r, r) = f.s.asDiagonal();
  K.topLeftCorner(r, r) += C;
  K.topRightCorner(r, r) = (Qv.transpose() * Vp).transpose();
  K.bottomLeftCorner(r, r) = Qu.transpose() * Up;
  Eigen::JacobiSVD<Mat> svd(K, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat Ub(m, 2 * r), Vb(n, 2 * r);
  Ub << f.U, Qu;
  Vb << f.V, Qv;
  return detail::point_from_factors(Ub * svd.matrixU().leftCols(r),
                                    svd.singularValues().head(r),
                                    Vb * svd.matrixV().leftCols(r));
}

/// Riemannian distance: exact geodesic distance on the sphere; ambient
/// Frobenius distance on the fixed-rank manifold (a locally equivalent
/// surrogate, the geodesic distance has no closed form there).
inline double distance(const Manifold &M, const Point &x, const Point &y) {
  if (M.is_sphere()) {
    // atan2 form is accurate for nearby points, where acos loses digits.
    const double c = std::clamp(inner(x.ambient, y.ambient), -1.0, 1.0);
    const double s = (x.ambient - y.ambient * c).norm();
    return std::atan2(s, c);
  }
  return (x.ambient - y.ambient).norm();
}

/// Riemannian Hessian-vector product on the sphere from the ambient gradient
/// and ambient Hessian-vector product: Pi_x(ehess_xi) - <x, egrad> xi.
inline Mat riemannian_hess_apply(const Manifold &M, const Point &x, const Mat &egrad,
                                 const Mat &ehess_xi, const Mat &xi) {
  if (!M.is_sphere())
    throw std::invalid_argument(
        "closed-form Hessian is sphere-only; use riemannian_hess_fd on fixed-rank");
  return project_tangent(M, x, ehess_xi) - inner(x.ambient, egrad) * xi;
}

/// Central finite difference of the projected gradient field along the
/// retraction, projected back onto T_x M. Works on both manifolds.
inline Mat riemannian_hess_fd(const Manifold &M, const Point &x,
                              const std::function<Mat(const Mat &)> &egrad,
                              const Mat &xi, double h = 0.0) {
  const double nrm = xi.norm();
  if (nrm == 0.0) return Mat::Zero(xi.rows(), xi.cols());
  if (h <= 0.0) h = 1e-6 * (1.0 + x.ambient.norm());
  const Mat dir = xi / nrm;
  const Point xp = retract(M, x, h * dir);
  const Point xm = retract(M, x, -h * dir);
  const Mat gp = project_tangent(M, xp, egrad(xp.ambient));
  const Mat gm = project_tangent(M, xm, egrad(xm.ambient));
  return project_tangent(M, x, (gp - gm) * (nrm / (2.0 * h)));
}

/// Orthonormal basis of T_x M, one flattened tangent vector per column.
inline Mat tangent_basis(const Manifold &M, const Point &x) {
  if (M.is_sphere()) {
    Mat xt = x.ambient.transpose();
    return null_space_basis(xt, 1e-12);
  }
  const auto &f = detail::factors_of(x);
  const Index m = M.rows(), n = M.cols(), r = M.rank();
  const Mat Uperp = null_space_basis(Mat(f.U.transpose()), 1e-12);
  const Mat Vperp = null_space_basis(Mat(f.V.transpose()), 1e-12);
  Mat basis(m * n, M.dimension());
  Index col = 0;
  auto push = [&](const Mat &t) { basis.col(col++) = flatten(t); };
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < r; ++j) push(f.U.col(i) * f.V.col(j).transpose());
  for (Index i = 0; i < Uperp.cols(); ++i)
    for (Index j = 0; j < r; ++j) push(Uperp.col(i) * f.V.col(j).transpose());
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < Vperp.cols(); ++j) push(f.U.col(i) * Vperp.col(j).transpose());
  return basis;
}

inline Mat gaussian_matrix(Index rows, Index cols, std::mt19937_64 &rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat a(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) a(i, j) = normal(rng);
  return a;
}

/// Deterministic random point. Fixed-rank points have Haar-like factors and
/// singular values in [1, 2].
inline Point random_point(const Manifold &M, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  if (M.is_sphere()) return project_to_manifold(M, gaussian_matrix(M.rows(), 1, rng));
  const Index m = M.rows(), n = M.cols(), r = M.rank();
  Mat U = Eigen::HouseholderQR<Mat>(gaussian_matrix(m, r, rng)).householderQ() *
          Mat::Identity(m, r);
  Mat V = Eigen::HouseholderQR<Mat>(gaussian_matrix(n, r, rng)).householderQ() *
          Mat::Identity(n, r);
  std::uniform_real_distribution<double> unif(1.0, 2.0);
  Vec s(r);
  for (Index i = 0; i < r; ++i) s(i) = unif(rng);
  std::sort(s.data(), s.data() + r, std::greater<>());
  return detail::point_from_factors(std::move(U), std::move(s), std::move(V));
}

inline Mat random_tangent(const Manifold &M, const Point &x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return project_tangent(M, x, gaussian_matrix(M.rows(), M.cols(), rng));
}

}  // namespace riemalm
