#pragma once

#include "heavyball/objective.hpp"

#include <cstddef>

namespace hb {

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration with a Rayleigh-quotient estimate.
///
/// The start vector is a fixed pseudo-random unit vector (seed 0x5eed), so the
/// result is deterministic. Iteration stops once the residual
/// ||M v - theta v|| <= tol * theta, which guarantees an eigenvalue within a
/// relative distance tol of theta. Throws InvalidParameter for non-square or
/// non-symmetric input and ConvergenceError (carrying the last estimate) when
/// `max_iters` is exhausted.
double max_eigenvalue(const Matrix& m, double tol = 1e-12, std::size_t max_iters = 1'000'000);

/// Smallest eigenvalue of a symmetric matrix (dense self-adjoint solver).
double min_eigenvalue_symmetric(const Matrix& m);

/// Thin SVD restricted to the numerically nonzero singular values:
/// A = U diag(s) V^T with rank(A) columns in U and V.
struct RankRevealingSvd {
  Matrix u;
  Vector s;
  Matrix v;

  Eigen::Index rank() const noexcept { return s.size(); }
  /// A^+ b.
  Vector pseudo_solve(const Vector& b) const;
};

RankRevealingSvd rank_revealing_svd(const Matrix& a);

}  // namespace hb
