#include "heavyball/objective.hpp"

#include "heavyball/errors.hpp"

#include <cmath>
#include <string>

namespace hb {

BlockPartition::BlockPartition(std::vector<BlockRange> ranges, Eigen::Index dimension)
    : ranges_(std::move(ranges)), dimension_(dimension) {
  if (dimension_ <= 0) throw ContractViolation("BlockPartition: dimension must be positive");
  if (ranges_.empty()) throw ContractViolation("BlockPartition: at least one block required");
  Eigen::Index next = 0;
  for (const auto& r : ranges_) {
    if (r.size <= 0) throw ContractViolation("BlockPartition: empty block");
    if (r.offset != next)
      throw ContractViolation("BlockPartition: blocks must be contiguous, ordered and disjoint");
    next = r.offset + r.size;
  }
  if (next != dimension_)
    throw ContractViolation("BlockPartition: blocks do not cover [0, dimension)");
}

BlockPartition BlockPartition::single(Eigen::Index dimension) {
  return BlockPartition({{0, dimension}}, dimension);
}

BlockPartition BlockPartition::uniform(Eigen::Index dimension, std::size_t blocks) {
  if (blocks == 0 || static_cast<Eigen::Index>(blocks) > dimension)
    throw ContractViolation("BlockPartition::uniform: need 1 <= blocks <= dimension");
  std::vector<BlockRange> ranges;
  ranges.reserve(blocks);
  const auto m = static_cast<Eigen::Index>(blocks);
  const Eigen::Index base = dimension / m;
  const Eigen::Index extra = dimension % m;
  Eigen::Index offset = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index size = base + (i < extra ? 1 : 0);
    ranges.push_back({offset, size});
    offset += size;
  }
  return BlockPartition(std::move(ranges), dimension);
}

Capabilities Problem::capabilities() const noexcept {
  return {min_value_.has_value(), has_projection_, rsc_constant_.has_value()};
}

void Problem::set_metadata(BlockPartition partition, double lipschitz,
                           std::vector<double> block_lipschitz) {
  if (!(lipschitz > 0.0) || !std::isfinite(lipschitz))
    throw InvalidParameter("Problem: Lipschitz constant must be positive and finite");
  if (block_lipschitz.size() != partition.count())
    throw ContractViolation("Problem: one block Lipschitz constant per block required");
  for (double li : block_lipschitz)
    if (!(li > 0.0) || !std::isfinite(li))
      throw InvalidParameter("Problem: block Lipschitz constants must be positive and finite");
  partition_ = std::move(partition);
  lipschitz_ = lipschitz;
  block_lipschitz_ = std::move(block_lipschitz);
}

void Problem::set_rsc_constant(double nu) {
  if (!(nu > 0.0)) throw InvalidParameter("Problem: RSC constant must be positive");
  rsc_constant_ = nu;
}

void Problem::check_point(const Vector& x) const {
  if (x.size() != dimension())
    throw ContractViolation("Problem: expected vector of length " + std::to_string(dimension()) +
                            ", got " + std::to_string(x.size()));
  if (!x.allFinite()) throw ContractViolation("Problem: non-finite entries in input vector");
}

double Problem::value(const Vector& x) const {
  check_point(x);
  return do_value(x);
}

Vector Problem::gradient(const Vector& x) const {
  check_point(x);
  return do_gradient(x);
}

Vector Problem::block_gradient(const Vector& x, std::size_t block) const {
  check_point(x);
  if (block >= partition_.count())
    throw ContractViolation("Problem: block index " + std::to_string(block) + " out of range");
  return do_block_gradient(x, partition_[block]);
}

Vector Problem::project_to_argmin(const Vector& x) const {
  if (!has_projection_)
    throw UnsupportedCapability("Problem: argmin projection not available for this problem");
  check_point(x);
  return do_project_to_argmin(x);
}

double Problem::suboptimality(const Vector& x) const {
  if (!min_value_) throw UnsupportedCapability("Problem: min value not available");
  check_point(x);
  return do_suboptimality(x);
}

Vector Problem::do_block_gradient(const Vector& x, const BlockRange& block) const {
  return do_gradient(x).segment(block.offset, block.size);
}

Vector Problem::do_project_to_argmin(const Vector&) const {
  throw UnsupportedCapability("Problem: argmin projection not implemented");
}

double Problem::do_suboptimality(const Vector& x) const { return do_value(x) - *min_value_; }

Vector finite_difference_gradient(const Problem& p, const Vector& x, double h) {
  Vector g(x.size());
  Vector probe = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double saved = probe[j];
    probe[j] = saved + h;
    const double fp = p.value(probe);
    probe[j] = saved - h;
    const double fm = p.value(probe);
    probe[j] = saved;
    g[j] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace hb
