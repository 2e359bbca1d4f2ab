#pragma once

/// Dense linear-algebra helpers shared by every module. All ambient objects
/// (vectors, matrices, tangent vectors, multipliers) are stored as
/// Eigen::MatrixXd; a vector is an n x 1 matrix.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace riemalm {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

/// Frobenius inner product.
inline double inner(const Mat &a, const Mat &b) {
  return (a.array() * b.array()).sum();
}

inline void require_same_shape(const Mat &a, const Mat &b, const char *what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  }
}

/// Column-major flattening of a matrix into a vector.
inline Vec flatten(const Mat &a) {
  return Eigen::Map<const Vec>(a.data(), a.size());
}

inline Mat unflatten(const Vec &v, Index rows, Index cols) {
  return Eigen::Map<const Mat>(v.data(), rows, cols);
}

/// Numerical rank with threshold rel_tol * sigma_max.
inline Index numerical_rank(const Mat &a, double rel_tol) {
  if (a.size() == 0) return 0;
  Eigen::BDCSVD<Mat> svd(a);
  const Vec &s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  Index rank = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (s(i) > rel_tol * s(0)) ++rank;
  return rank;
}

/// Orthonormal basis for the column span of `a` (threshold rel_tol * sigma_max).
inline Mat orthonormal_column_basis(const Mat &a, double rel_tol) {
  if (a.cols() == 0) return Mat(a.rows(), 0);
  Eigen::BDCSVD<Mat> svd(a, Eigen::ComputeThinU);
  const Vec &s = svd.singularValues();
  Index rank = 0;
  if (s.size() > 0 && s(0) > 0.0)
    for (Index i = 0; i < s.size(); ++i)
      if (s(i) > rel_tol * s(0)) ++rank;
  return svd.matrixU().leftCols(rank);
}

/// Orthonormal basis of the null space of `a` (columns), threshold
/// rel_tol * sigma_max. A matrix with zero rows has the full space as kernel.
inline Mat null_space_basis(const Mat &a, double rel_tol) {
  const Index n = a.cols();
  if (a.rows() == 0) return Mat::Identity(n, n);
  Eigen::BDCSVD<Mat> svd(a, Eigen::ComputeFullV);
  const Vec &s = svd.singularValues();
  Index rank = 0;
  if (s.size() > 0 && s(0) > 0.0)
    for (Index i = 0; i < s.size(); ++i)
      if (s(i) > rel_tol * s(0)) ++rank;
  return svd.matrixV().rightCols(n - rank);
}

/// Nonnegative least squares min ||A x - b|| s.t. x >= 0 (Lawson-Hanson
/// active set method). Returns the solution.
inline Vec nnls(const Mat &A, const Vec &b, int max_iter = 0) {
  const Index n = A.cols();
  if (max_iter <= 0) max_iter = static_cast<int>(3 * n + 10);
  Vec x = Vec::Zero(n);
  Eigen::Array<bool, Eigen::Dynamic, 1> passive =
      Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(n, false);
  const double tol = 1e-12 * std::max(1.0, A.norm() * b.norm());

  auto solve_passive = [&]() {
    std::vector<Index> idx;
    for (Index j = 0; j < n; ++j)
      if (passive(j)) idx.push_back(j);
    Vec z = Vec::Zero(n);
    if (idx.empty()) return z;
    Mat Ap(A.rows(), static_cast<Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) Ap.col(k) = A.col(idx[k]);
    Vec zp = Ap.completeOrthogonalDecomposition().solve(b);
    for (std::size_t k = 0; k < idx.size(); ++k) z(idx[k]) = zp(k);
    return z;
  };

  for (int outer = 0; outer < max_iter; ++outer) {
    Vec w = A.transpose() * (b - A * x);
    Index best = -1;
    double best_w = tol;
    for (Index j = 0; j < n; ++j)
      if (!passive(j) && w(j) > best_w) {
        best_w = w(j);
        best = j;
      }
    if (best < 0) break;
    passive(best) = true;
    for (int inner_it = 0; inner_it < max_iter; ++inner_it) {
      Vec z = solve_passive();
      bool feasible = true;
      for (Index j = 0; j < n; ++j)
        if (passive(j) && z(j) <= 0.0) feasible = false;
      if (feasible) {
        x = z;
        break;
      }
      double alpha = 1.0;
      for (Index j = 0; j < n; ++j)
        if (passive(j) && z(j) <= 0.0) alpha = std::min(alpha, x(j) / (x(j) - z(j)));
      x += alpha * (z - x);
      for (Index j = 0; j < n; ++j)
        if (passive(j) && std::abs(x(j)) <= 1e-15) {
          passive(j) = false;
          x(j) = 0.0;
        }
    }
  }
  return x;
}

/// Result of a positive-spanning test.
struct SpanReport {
  bool spans = false;
  Index rank_found = 0;
  Index dimension_required = 0;
};

/// Decides whether span(subspace columns) + cone(ray columns) equals the
/// whole ambient space R^N.
///
/// The subspace is orthogonalized first; rays are projected onto its
/// orthogonal complement W. The projected rays generate W as a cone iff they
/// have full rank in W and admit a strictly positive combination summing to
/// zero, which is checked by NNLS with weights shifted to be >= 1.
inline SpanReport positively_spans(const Mat &subspace, const Mat &rays,
                                   double rel_tol) {
  const Index N = std::max(subspace.rows(), rays.rows());
  SpanReport report;
  report.dimension_required = N;
  Mat all(N, subspace.cols() + rays.cols());
  if (subspace.cols() > 0) all.leftCols(subspace.cols()) = subspace;
  if (rays.cols() > 0) all.rightCols(rays.cols()) = rays;
  report.rank_found = numerical_rank(all, rel_tol);
  if (report.rank_found < N) return report;

  // Scale reference for projected quantities.
  const double scale = std::max(1.0, all.cwiseAbs().maxCoeff());
  Mat Q = subspace.cols() > 0 ? orthonormal_column_basis(subspace, rel_tol)
                               : Mat(N, 0);
  if (Q.cols() == N) {
    report.spans = true;
    return report;
  }
  Mat projected = rays - Q * (Q.transpose() * rays);
  if (projected.cols() == 0) return report;
  // Look for lambda >= 1 with projected * lambda = 0: lambda = 1 + mu, mu >= 0.
  Vec ones = Vec::Ones(projected.cols());
  Vec rhs = -projected * ones;
  Vec mu = nnls(projected, rhs);
  double residual = (projected * (ones + mu)).norm();
  double ref = scale * (ones + mu).norm();
  report.spans = residual <= 1e-9 * ref;
  return report;
}

}  // namespace riemalm
