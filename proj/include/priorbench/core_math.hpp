#pragma once

// Numerical primitives shared by the rest of the library: a seeded generator,
// moment estimation and the symmetric PSD square root.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "priorbench/errors.hpp"

namespace priorbench {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return mix_seed(base ^ mix_seed(stream + 0x5851f42d4c957f2dULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                    std::uint64_t sub) {
  return derive_seed(derive_seed(base, stream), sub);
}

/// Deterministic random source.
///
/// Bits come from std::mt19937_64, whose output sequence is fixed by the C++
/// standard. Every conversion on top of it (uniform doubles, bounded integers,
/// normals) is done here rather than through the std:: distributions, whose
/// algorithms are implementation-defined. Normals use the basic Box-Muller
/// transform and cache the second variate of each pair.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1).
  double uniform_open() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n), unbiased by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ContractError("SeededRng::below: n must be positive");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t r = engine_();
    while (r >= limit) r = engine_();
    return r % n;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Fisher-Yates shuffle driven by SeededRng (std::shuffle is not portable).
template <typename T>
void shuffle_in_place(std::vector<T>& items, SeededRng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

inline Matrix sample_standard_normal(SeededRng& rng, Eigen::Index rows, Eigen::Index cols) {
  if (rows < 1 || cols < 1) {
    throw ContractError("sample_standard_normal: shape must be at least 1x1");
  }
  Matrix out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = rng.normal();
  }
  return out;
}

struct GaussianStats {
  Vector mean;
  Matrix covariance;

  Eigen::Index dim() const { return mean.size(); }
};

/// Column means and unbiased (N-1) covariance of the rows of `samples`.
inline GaussianStats estimate_moments(const Matrix& samples) {
  const Eigen::Index n = samples.rows();
  if (n < 2) {
    throw DegenerateInputError("estimate_moments: need at least 2 samples, got " +
                               std::to_string(n));
  }
  GaussianStats stats;
  stats.mean = samples.colwise().mean().transpose();
  const Matrix centered = samples.rowwise() - stats.mean.transpose();
  stats.covariance = (centered.transpose() * centered) / static_cast<double>(n - 1);
  // Exact symmetry regardless of summation order.
  stats.covariance = 0.5 * (stats.covariance + stats.covariance.transpose()).eval();
  return stats;
}

struct SymmetricEigen {
  Vector values;  // unsorted, matching the columns of `vectors`
  Matrix vectors;
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Sweeps over all (p, q) pairs until the off-diagonal Frobenius norm drops
/// below `tol` times the Frobenius norm of the input (absolute `tol` for the
/// zero matrix). Only the upper triangle is read.
inline SymmetricEigen jacobi_eigen(const Matrix& input, double tol = 1e-10,
                                   int max_sweeps = 100) {
  if (input.rows() != input.cols()) {
    throw ContractError("jacobi_eigen: matrix must be square");
  }
  const Eigen::Index n = input.rows();
  Matrix a = input.triangularView<Eigen::Upper>();
  a.triangularView<Eigen::StrictlyLower>() = a.transpose().triangularView<Eigen::StrictlyLower>();
  Matrix v = Matrix::Identity(n, n);

  const double scale = a.norm();
  const double threshold = scale > 0.0 ? tol * scale : tol;

  auto off_norm = [&] {
    double s = 0.0;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) s += 2.0 * a(p, q) * a(p, q);
    }
    return std::sqrt(s);
  };

  for (int sweep = 0; sweep < max_sweeps && off_norm() > threshold; ++sweep) {
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  return {a.diagonal(), v};
}

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

/// Symmetric PSD square root via Jacobi eigendecomposition.
///
/// Accepts matrices symmetric within 1e-8 (relative to max(1, max|m|)) whose
/// eigenvalues are >= -1e-8 on the same scale; small negative eigenvalues are
/// clamped to zero.
inline Matrix psd_matrix_sqrt(const Matrix& m, double tol = 1e-8) {
  if (m.rows() != m.cols()) throw InvalidMatrixError("psd_matrix_sqrt: matrix is not square");
  if (!m.allFinite()) throw InvalidMatrixError("psd_matrix_sqrt: non-finite entries");
  const double scale = std::max(1.0, max_abs(m));
  const double asym = max_abs(m - m.transpose());
  if (asym > tol * scale) {
    throw InvalidMatrixError("psd_matrix_sqrt: matrix is not symmetric (max asymmetry " +
                             std::to_string(asym) + ")");
  }
  const Matrix sym = 0.5 * (m + m.transpose());
  SymmetricEigen eig = jacobi_eigen(sym);
  for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
    double& lambda = eig.values[i];
    if (lambda < -tol * scale) {
      throw InvalidMatrixError("psd_matrix_sqrt: matrix is indefinite (eigenvalue " +
                               std::to_string(lambda) + ")");
    }
    lambda = std::sqrt(std::max(lambda, 0.0));
  }
  Matrix root = eig.vectors * eig.values.asDiagonal() * eig.vectors.transpose();
  return 0.5 * (root + root.transpose());
}

}  // namespace priorbench
