#pragma once

#include "heavyball/linalg.hpp"
#include "heavyball/objective.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace hb {

enum class Distribution { gaussian, bernoulli };

/// How labels are drawn: `natural` follows the feature distribution
/// (N(0,1) or {0,1}); `sign` draws 2 * Bernoulli(1/2) - 1 for classification.
enum class LabelKind { natural, sign };

std::string_view to_string(Distribution d);
Distribution parse_distribution(std::string_view s);

/// Design matrix with one sample per row (row i is A_i^T) plus labels.
struct Dataset {
  Matrix features;
  Vector labels;
  Distribution distribution = Distribution::gaussian;
  std::uint64_t seed = 0;

  Eigen::Index samples() const noexcept { return features.rows(); }
  Eigen::Index dimension() const noexcept { return features.cols(); }
};

/// Draws features row by row (row-major order) and then the labels, all from
/// one Rng(seed) stream.
Dataset generate_data(Eigen::Index n, Eigen::Index m, Distribution dist, std::uint64_t seed,
                      LabelKind labels = LabelKind::natural);

/// CSV layout: header `n,m,dist,seed`, one line with those values, then m
/// rows of n features followed by the label. Doubles are written in shortest
/// round-trip form.
void write_dataset_csv(const Dataset& d, const std::filesystem::path& path);
Dataset read_dataset_csv(const std::filesystem::path& path);

/// f(x) = 1/2 sum_i (y_i - A_i^T x)^2.
///
/// L = lambda_max(A^T A), L_i = lambda_max of the i-th diagonal block of
/// A^T A. The minimum, the argmin projection and the RSC constant
/// nu = sigma_min+(A)^2 / 2 come from a rank-revealing SVD of A.
class LinearRegression final : public Problem {
 public:
  LinearRegression(Matrix a, Vector y, BlockPartition blocks);

  const Matrix& design() const noexcept { return a_; }
  const Vector& targets() const noexcept { return y_; }
  /// Minimum-norm minimiser A^+ y.
  const Vector& reference_solution() const noexcept { return x_ref_; }
  Eigen::Index rank() const noexcept { return svd_.rank(); }

 protected:
  double do_value(const Vector& x) const override;
  Vector do_gradient(const Vector& x) const override;
  Vector do_block_gradient(const Vector& x, const BlockRange& block) const override;
  Vector do_project_to_argmin(const Vector& x) const override;
  double do_suboptimality(const Vector& x) const override;

 private:
  Matrix a_;
  Vector y_;
  RankRevealingSvd svd_;
  Vector x_ref_;
};

/// f(x) = sum_i log(1 + exp(-y_i A_i^T x)) + lambda/2 ||x||^2 with y_i in {-1, +1}.
///
/// L = lambda_max(A^T A) + lambda (per block: the block's lambda_max plus
/// lambda). Strong convexity gives nu = lambda / 2 and a unique minimiser,
/// which is computed by damped Newton; min_value is f(x*) - 1e-12.
class LogisticRegression final : public Problem {
 public:
  LogisticRegression(Matrix a, Vector y, double lambda, BlockPartition blocks);

  double regularizer() const noexcept { return lambda_; }
  const Vector& reference_solution() const noexcept { return x_star_; }

  static constexpr double kMinValueMargin = 1e-12;

 protected:
  double do_value(const Vector& x) const override;
  Vector do_gradient(const Vector& x) const override;
  Vector do_block_gradient(const Vector& x, const BlockRange& block) const override;
  Vector do_project_to_argmin(const Vector& x) const override;

 private:
  /// -y .* sigmoid(-y .* Ax), the derivative of the loss w.r.t. Ax.
  Vector loss_derivative(const Vector& x) const;
  Vector newton_minimize() const;

  Matrix a_;
  Vector y_;
  double lambda_;
  Vector x_star_;
};

/// f(x) = 1/2 x^T H x - b^T x with H symmetric PSD and b in range(H).
/// Used for diagnostic instances with known Hessian.
class Quadratic final : public Problem {
 public:
  Quadratic(Matrix h, Vector b, BlockPartition blocks);

  const Matrix& hessian() const noexcept { return h_; }
  const Vector& reference_solution() const noexcept { return x_ref_; }

 protected:
  double do_value(const Vector& x) const override;
  Vector do_gradient(const Vector& x) const override;
  Vector do_block_gradient(const Vector& x, const BlockRange& block) const override;
  Vector do_project_to_argmin(const Vector& x) const override;
  double do_suboptimality(const Vector& x) const override;

 private:
  Matrix h_;
  Vector b_;
  Matrix range_basis_;  // eigenvectors with nonzero eigenvalue
  Vector range_eigs_;
  Vector x_ref_;
};

LinearRegression make_linear_regression(const Dataset& d, BlockPartition blocks);
LinearRegression make_linear_regression(const Dataset& d, std::size_t blocks = 1);
LogisticRegression make_logistic_regression(const Dataset& d, double lambda, BlockPartition blocks);
LogisticRegression make_logistic_regression(const Dataset& d, double lambda, std::size_t blocks = 1);

/// Per-block Lipschitz constants lambda_max(G_ii) of a Gram matrix G.
std::vector<double> block_lipschitz_of(const Matrix& gram, const BlockPartition& blocks);

}  // namespace hb
