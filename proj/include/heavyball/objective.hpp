#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <optional>
#include <vector>

namespace hb {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Half-open index range [offset, offset + size) of one coordinate block.
struct BlockRange {
  Eigen::Index offset = 0;
  Eigen::Index size = 0;

  bool operator==(const BlockRange&) const = default;
};

/// Ordered, disjoint, contiguous blocks covering [0, dimension).
class BlockPartition {
 public:
  BlockPartition() = default;
  /// Throws ContractViolation unless the ranges tile [0, dimension) in order.
  BlockPartition(std::vector<BlockRange> ranges, Eigen::Index dimension);

  static BlockPartition single(Eigen::Index dimension);
  /// `blocks` contiguous blocks whose sizes differ by at most one.
  static BlockPartition uniform(Eigen::Index dimension, std::size_t blocks);

  std::size_t count() const noexcept { return ranges_.size(); }
  Eigen::Index dimension() const noexcept { return dimension_; }
  const BlockRange& operator[](std::size_t i) const { return ranges_.at(i); }
  const std::vector<BlockRange>& ranges() const noexcept { return ranges_; }

  bool operator==(const BlockPartition&) const = default;

 private:
  std::vector<BlockRange> ranges_;
  Eigen::Index dimension_ = 0;
};

struct Capabilities {
  bool has_min_value = false;
  bool has_argmin_projection = false;
  bool has_rsc_constant = false;
};

/// Smooth convex objective with exact value / gradient / block-gradient
/// oracles, Lipschitz metadata and optional ground truth for diagnostics.
///
/// Public entry points validate their inputs (dimension, finiteness, block
/// index) and forward to the protected `do_*` hooks. Instances are immutable
/// after construction and may be shared between threads.
class Problem {
 public:
  virtual ~Problem() = default;

  Eigen::Index dimension() const noexcept { return partition_.dimension(); }
  const BlockPartition& blocks() const noexcept { return partition_; }
  double lipschitz() const noexcept { return lipschitz_; }
  const std::vector<double>& block_lipschitz() const noexcept { return block_lipschitz_; }

  Capabilities capabilities() const noexcept;
  std::optional<double> min_value() const noexcept { return min_value_; }
  std::optional<double> rsc_constant() const noexcept { return rsc_constant_; }

  double value(const Vector& x) const;
  Vector gradient(const Vector& x) const;
  Vector block_gradient(const Vector& x, std::size_t block) const;

  /// Euclidean projection onto arg min f.
  Vector project_to_argmin(const Vector& x) const;

  /// f(x) - min f. Subclasses with a closed-form minimiser override this with
  /// a cancellation-free formula.
  double suboptimality(const Vector& x) const;

 protected:
  Problem() = default;

  /// Must be called exactly once by the derived constructor.
  void set_metadata(BlockPartition partition, double lipschitz,
                    std::vector<double> block_lipschitz);
  void set_min_value(double v) { min_value_ = v; }
  void set_rsc_constant(double nu);
  void enable_argmin_projection() { has_projection_ = true; }

  virtual double do_value(const Vector& x) const = 0;
  virtual Vector do_gradient(const Vector& x) const = 0;
  /// Default: slice of do_gradient.
  virtual Vector do_block_gradient(const Vector& x, const BlockRange& block) const;
  virtual Vector do_project_to_argmin(const Vector& x) const;
  virtual double do_suboptimality(const Vector& x) const;

 private:
  void check_point(const Vector& x) const;

  BlockPartition partition_;
  double lipschitz_ = 0.0;
  std::vector<double> block_lipschitz_;
  std::optional<double> min_value_;
  std::optional<double> rsc_constant_;
  bool has_projection_ = false;
};

/// Central finite-difference gradient. Test oracle only.
Vector finite_difference_gradient(const Problem& p, const Vector& x, double h = 1e-6);

}  // namespace hb
