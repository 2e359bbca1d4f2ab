#pragma once

/// Data generators for the built-in families: the 5 x 5 sphere-l1 and
/// robust-completion examples, and their random counterparts.

#include "riemalm/problem.hpp"

#include <cmath>
#include <cstdint>
#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

namespace riemalm {

/// Robust matrix completion data: observed A = A_ex + E_out on Omega.
struct RmcData {
  Mat A;
  Mat A_ex;
  std::vector<std::pair<Index, Index>> omega;
  Index rank = 0;
  Index outliers = 0;

  RobustCompletion family() const { return RobustCompletion{A, omega, rank}; }
};

/// Rank-3 ground truth U diag(1,2,3) V^T on a 5 x 5 grid, fully observed,
/// with outliers in the lower-right 2 x 2 block. Outliers have random signs
/// and magnitudes in [0.1, 0.5], so the outlier block stays below the
/// smallest singular value of the ground truth.
inline RmcData rmc_basic5x5(std::uint64_t seed = 42) {
  const double h = std::sqrt(2.0) / 2.0;
  Mat U = Mat::Zero(5, 3), V = Mat::Zero(5, 3);
  U(0, 0) = 1.0;
  U(1, 1) = -h;
  U(2, 1) = h;
  U(1, 2) = h;
  U(2, 2) = h;
  V(0, 0) = 1.0;
  V(1, 1) = 0.6;
  V(2, 1) = -0.8;
  V(1, 2) = 0.8;
  V(2, 2) = 0.6;
  Vec s(3);
  s << 1.0, 2.0, 3.0;

  RmcData d;
  d.rank = 3;
  d.A_ex = U * s.asDiagonal() * V.transpose();
  d.A = d.A_ex;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> magnitude(0.1, 0.5);
  std::bernoulli_distribution negative(0.5);
  for (Index i = 3; i < 5; ++i)
    for (Index j = 3; j < 5; ++j) {
      const double v = magnitude(rng);
      d.A(i, j) += negative(rng) ? -v : v;
    }
  d.outliers = 4;
  for (Index j = 0; j < 5; ++j)
    for (Index i = 0; i < 5; ++i) d.omega.emplace_back(i, j);
  return d;
}

/// A_ex = L R^T with standard normal factors; |Omega| = oversample (m+n-r) r
/// entries drawn uniformly without replacement; round(3%) of the observed
/// entries carry outliers drawn from the exponential distribution with mean 10.
inline RmcData rmc_random(Index m, Index n, Index r, double oversample, std::uint64_t seed,
                          double outlier_fraction = 0.03, double outlier_mean = 10.0) {
  if (m < 1 || n < 1 || r < 1 || r > std::min(m, n))
    throw std::invalid_argument("rmc_random: need 1 <= r <= min(m, n)");
  if (!(oversample > 0.0)) throw std::invalid_argument("rmc_random: oversample must be positive");
  const double samples = oversample * static_cast<double>((m + n - r) * r);
  if (samples > static_cast<double>(m * n))
    throw std::invalid_argument("rmc_random: oversample (m+n-r) r exceeds m n");
  const auto count = static_cast<Index>(std::llround(samples));

  std::mt19937_64 rng(seed);
  RmcData d;
  d.rank = r;
  const Mat L = gaussian_matrix(m, r, rng);
  const Mat R = gaussian_matrix(n, r, rng);
  d.A_ex = L * R.transpose();

  // Partial Fisher-Yates over column-major linear indices.
  std::vector<Index> idx(static_cast<std::size_t>(m * n));
  std::iota(idx.begin(), idx.end(), Index{0});
  for (Index k = 0; k < count; ++k) {
    std::uniform_int_distribution<Index> pick(k, m * n - 1);
    std::swap(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  idx.resize(static_cast<std::size_t>(count));
  std::sort(idx.begin(), idx.end());
  d.omega.reserve(idx.size());
  for (Index li : idx) d.omega.emplace_back(li % m, li / m);

  d.A = d.A_ex;
  d.outliers = static_cast<Index>(std::llround(outlier_fraction * static_cast<double>(count)));
  std::vector<Index> pos(idx.size());
  std::iota(pos.begin(), pos.end(), Index{0});
  std::exponential_distribution<double> expo(1.0 / outlier_mean);
  for (Index k = 0; k < d.outliers; ++k) {
    std::uniform_int_distribution<Index> pick(k, count - 1);
    std::swap(pos[static_cast<std::size_t>(k)], pos[static_cast<std::size_t>(pick(rng))]);
    const auto &[i, j] = d.omega[static_cast<std::size_t>(pos[static_cast<std::size_t>(k)])];
    d.A(i, j) += expo(rng);
  }
  return d;
}

/// Rank-r truncated SVD of the rescaled zero-filled observations, after
/// dropping observed entries larger than `cutoff` robust standard deviations
/// (1.4826 times the median absolute observed value).
inline Point rmc_initial_point(const Manifold &M, const RmcData &d, double cutoff = 3.0) {
  std::vector<double> mags;
  mags.reserve(d.omega.size());
  for (const auto &[i, j] : d.omega) mags.push_back(std::abs(d.A(i, j)));
  const auto mid = mags.begin() + static_cast<std::ptrdiff_t>(mags.size() / 2);
  std::nth_element(mags.begin(), mid, mags.end());
  const double limit = cutoff * 1.4826 * *mid;

  Mat Y = Mat::Zero(d.A.rows(), d.A.cols());
  std::size_t kept = 0;
  for (const auto &[i, j] : d.omega)
    if (limit == 0.0 || std::abs(d.A(i, j)) <= limit) {
      Y(i, j) = d.A(i, j);
      ++kept;
    }
  if (kept > 0) Y *= static_cast<double>(d.A.size()) / static_cast<double>(kept);
  return project_to_manifold(M, Y);
}

/// Square matrix with i.i.d. standard normal entries.
inline Mat sphere_l1_random_matrix(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return gaussian_matrix(n, n, rng);
}

}  // namespace riemalm
