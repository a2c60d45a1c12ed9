#include "heavyball/linalg.hpp"

#include "heavyball/errors.hpp"
#include "heavyball/rng.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

namespace hb {

namespace {

void require_symmetric(const Matrix& m, const char* who) {
  if (m.rows() != m.cols() || m.rows() == 0)
    throw InvalidParameter(std::string(who) + ": matrix must be square and non-empty");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw InvalidParameter(std::string(who) + ": matrix is not symmetric");
}

}  // namespace

double max_eigenvalue(const Matrix& m, double tol, std::size_t max_iters) {
  require_symmetric(m, "max_eigenvalue");
  if (!(tol > 0.0)) throw InvalidParameter("max_eigenvalue: tolerance must be positive");

  Rng rng(0x5eed);
  Vector v(m.rows());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
  v.normalize();

  double theta = 0.0;
  for (std::size_t it = 0; it < max_iters; ++it) {
    const Vector w = m * v;
    theta = v.dot(w) / v.squaredNorm();
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;
    if ((w - theta * v).norm() <= tol * std::abs(theta)) return theta;
    v = w / wn;
  }
  throw ConvergenceError("max_eigenvalue: power iteration did not converge", theta);
}

double min_eigenvalue_symmetric(const Matrix& m) {
  require_symmetric(m, "min_eigenvalue_symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw ConvergenceError("min_eigenvalue_symmetric: eigensolver failed",
                           std::numeric_limits<double>::quiet_NaN());
  return es.eigenvalues().minCoeff();
}

RankRevealingSvd rank_revealing_svd(const Matrix& a) {
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double cutoff = static_cast<double>(std::max(a.rows(), a.cols())) *
                        std::numeric_limits<double>::epsilon() * (s.size() > 0 ? s[0] : 0.0);
  Eigen::Index r = 0;
  while (r < s.size() && s[r] > cutoff) ++r;
  RankRevealingSvd out;
  out.u = svd.matrixU().leftCols(r);
  out.s = s.head(r);
  out.v = svd.matrixV().leftCols(r);
  return out;
}

Vector RankRevealingSvd::pseudo_solve(const Vector& b) const {
  const Vector coeffs = (u.transpose() * b).cwiseQuotient(s);
  return v * coeffs;
}

}  // namespace hb
