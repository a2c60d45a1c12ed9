#pragma once

#include "heavyball/objective.hpp"
#include "heavyball/problems.hpp"
#include "heavyball/solvers.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace hb {

using Edge = std::pair<std::size_t, std::size_t>;

/// Metropolis-Hastings weights: w_ij = 1/(1 + max(d_i, d_j)) on edges,
/// w_ii = 1 - sum_{j != i} w_ij. Throws InvalidParameter on a disconnected graph.
Matrix metropolis_weights(std::size_t nodes, std::span<const Edge> edges);

/// Undirected connected graph with a symmetric, doubly stochastic mixing
/// matrix that respects its sparsity.
class Network {
 public:
  /// Metropolis weights.
  Network(std::size_t nodes, std::vector<Edge> edges);
  /// Caller-supplied W, validated against the graph (a zero weight on an edge
  /// is allowed, so W = I is a valid mixing matrix for any graph).
  Network(std::size_t nodes, std::vector<Edge> edges, Matrix mixing);

  static Network path(std::size_t nodes);

  std::size_t node_count() const noexcept { return neighbors_.size(); }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  bool adjacent(std::size_t i, std::size_t j) const;
  /// Sorted neighbours of i, excluding i.
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return neighbors_.at(i); }
  const Matrix& mixing() const noexcept { return w_; }
  double lambda_min() const noexcept { return lambda_min_; }

 private:
  void build_adjacency(std::size_t nodes, std::vector<Edge> edges);
  double validate_mixing() const;  // returns lambda_min(W)

  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> neighbors_;
  Matrix w_;
  double lambda_min_ = 0.0;
};

/// Edge list: node count on the first non-comment line, then one `i j` pair
/// (0-based) per line. `#` starts a comment.
Network parse_network(std::istream& in);
Network read_network(const std::filesystem::path& path);

using LocalProblems = std::vector<std::shared_ptr<const Problem>>;

/// F(X) = sum_i f_i(x(i)) + tr(X^T (I - W) X) / (2 alpha) over the stacked
/// vector [x(1); ...; x(m)]. One block per node.
///
/// min F and the minimiser come from a gradient-descent reference run
/// (at most 10^6 iterations, stopped once the iterate stalls); the argmin
/// projection returns that minimiser and so assumes it is unique.
class PenaltyObjective final : public Problem {
 public:
  PenaltyObjective(Network network, LocalProblems locals, double alpha);

  const Network& network() const noexcept { return net_; }
  const LocalProblems& locals() const noexcept { return locals_; }
  double alpha() const noexcept { return alpha_; }
  Eigen::Index local_dimension() const noexcept { return n_; }
  double max_local_lipschitz() const noexcept { return max_li_; }
  const Vector& reference_minimizer() const noexcept { return x_star_; }
  std::size_t reference_iterations() const noexcept { return ref_iters_; }

  /// View of the stacked vector as the m x n matrix X (row i = x(i)).
  Matrix unstack(const Vector& x) const;
  Vector stack(const Matrix& X) const;

 private:
  double do_value(const Vector& x) const override;
  Vector do_gradient(const Vector& x) const override;
  Vector do_project_to_argmin(const Vector& x) const override;
  double do_suboptimality(const Vector& x) const override;

  void compute_reference();

  Network net_;
  LocalProblems locals_;
  double alpha_;
  Eigen::Index n_ = 0;
  double max_li_ = 0.0;
  Matrix laplacian_;  // I - W
  Vector x_star_;
  double f_star_ = 0.0;
  std::size_t ref_iters_ = 0;
};

inline constexpr std::size_t kReferenceMaxIterations = 1'000'000;

struct ParamBounds {
  double beta_max = 0.0;
  /// alpha_max(beta) = (1 - 2 beta + lambda_min(W)) / max_i L_i.
  double alpha_max(double beta) const { return (1.0 - 2.0 * beta + lambda_min) / max_lipschitz; }

  double lambda_min = 0.0;
  double max_lipschitz = 0.0;
};

ParamBounds param_bounds(const Network& net, std::span<const double> local_lipschitz);

/// Throws InvalidParameter naming the violated inequality unless
/// 0 <= beta < (1 + lambda_min)/2 and 0 < alpha < (1 - 2 beta + lambda_min)/max L_i.
void validate_decentralized_params(const ParamBounds& b, double alpha, double beta);

/// State of node j as received by node i.
struct NeighborState {
  std::size_t node = 0;
  Vector x;
};

/// x^{k+1}(i) = sum_{j in N(i) + i} w_ij x^k(j) - alpha grad f_i(x^k(i)) + beta (x^k(i) - x^{k-1}(i)).
/// `received` must hold exactly the closed neighbourhood of i (any order);
/// the entry for i itself is x^k(i).
Vector local_step(const Network& net, std::size_t node, std::span<const NeighborState> received,
                  const Vector& x_prev, const Problem& local, double alpha, double beta);

struct DecentralizedConfig {
  double alpha = 0.0;
  double beta = 0.0;
  std::size_t iters = 1000;
  /// Initial stacked state (m x n); zero when empty. X^{-1} = X^0.
  std::optional<Matrix> x0;
  /// Order in which nodes are updated within a round; identity when empty.
  std::vector<std::size_t> node_order;
};

struct DecentralizedRecord {
  std::size_t k = 0;
  double f = 0.0;
  double residual = 0.0;
  double consensus_error = 0.0;
  /// max |local - global| entry of step k -> k+1 (0 on the final record).
  double equivalence_gap = 0.0;
};

struct DecentralizedTrace {
  std::vector<DecentralizedRecord> records;
  /// Same run as a full-scheme trace on F with gamma = alpha and
  /// c = alpha L_F / (2 (1 - beta)), for the Lyapunov checks.
  IterateTrace global;
  std::vector<Matrix> states;  // X^k per record
};

DecentralizedTrace run_decentralized(const PenaltyObjective& F, const DecentralizedConfig& cfg);

/// ||X - 1 mean(X)||_F.
double consensus_error(const Matrix& X);

/// `k,F,residual,consensus_error`.
void write_decentralized_csv(const DecentralizedTrace& t, std::ostream& out);

/// Per-node least-squares problems from one seeded generator (node i uses seed + i).
LocalProblems node_least_squares(std::size_t nodes, Eigen::Index n, Eigen::Index rows,
                                 Distribution dist, std::uint64_t seed);

}  // namespace hb
