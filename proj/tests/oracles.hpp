#pragma once

// Independent reference implementations used only by the tests.

#include "heavyball/objective.hpp"
#include "heavyball/rng.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace oracle {

using hb::Matrix;
using hb::Vector;

/// Exact fraction over 64-bit integers; throws on overflow.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  Rational(std::int64_t n = 0, std::int64_t d = 1) : num(n), den(d) {
    if (den == 0) throw std::domain_error("zero denominator");
    if (den < 0) {
      num = -num;
      den = -den;
    }
    const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) {
      num /= g;
      den /= g;
    }
  }

  static std::int64_t mul(std::int64_t a, std::int64_t b) {
    std::int64_t r = 0;
    if (__builtin_mul_overflow(a, b, &r)) throw std::overflow_error("rational overflow");
    return r;
  }
  static std::int64_t add(std::int64_t a, std::int64_t b) {
    std::int64_t r = 0;
    if (__builtin_add_overflow(a, b, &r)) throw std::overflow_error("rational overflow");
    return r;
  }

  friend Rational operator+(Rational a, Rational b) {
    return {add(mul(a.num, b.den), mul(b.num, a.den)), mul(a.den, b.den)};
  }
  friend Rational operator-(Rational a, Rational b) { return a + Rational(-b.num, b.den); }
  friend Rational operator*(Rational a, Rational b) {
    return {mul(a.num, b.num), mul(a.den, b.den)};
  }
  friend Rational operator/(Rational a, Rational b) {
    return {mul(a.num, b.den), mul(a.den, b.num)};
  }
  friend bool operator==(Rational a, Rational b) { return a.num == b.num && a.den == b.den; }

  double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }
};

/// Central differences, one coordinate at a time.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                          double h = 1e-6) {
  Vector g(x.size());
  Vector xp = x, xm = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    xm[i] = x[i] - h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
    xp[i] = xm[i] = x[i];
  }
  return g;
}

inline double dense_max_eigenvalue(const Matrix& m) {
  return Eigen::SelfAdjointEigenSolver<Matrix>(m, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
}

inline double dense_min_eigenvalue(const Matrix& m) {
  return Eigen::SelfAdjointEigenSolver<Matrix>(m, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

inline Vector gaussian_vector(hb::Rng& rng, Eigen::Index n, double scale = 1.0) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

/// 1/2 sum_i (y_i - a_i . x)^2 with the rows visited last to first.
inline double least_squares_value(const Matrix& a, const Vector& y, const Vector& x) {
  double total = 0.0;
  for (Eigen::Index i = a.rows() - 1; i >= 0; --i) {
    double dot = 0.0;
    for (Eigen::Index j = a.cols() - 1; j >= 0; --j) dot += a(i, j) * x[j];
    const double r = y[i] - dot;
    total += 0.5 * r * r;
  }
  return total;
}

inline double logistic_value(const Matrix& a, const Vector& y, double lambda, const Vector& x) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    double dot = 0.0;
    for (Eigen::Index j = 0; j < a.cols(); ++j) dot += a(i, j) * x[j];
    const double t = -y[i] * dot;
    total += t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
  }
  double sq = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) sq += x[j] * x[j];
  return total + 0.5 * lambda * sq;
}

}  // namespace oracle
