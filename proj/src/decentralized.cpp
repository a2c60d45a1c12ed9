#include "heavyball/decentralized.hpp"

#include "heavyball/csv.hpp"
#include "heavyball/errors.hpp"
#include "heavyball/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

namespace hb {

namespace {

constexpr double kMixingTolerance = 1e-12;

std::vector<std::vector<std::size_t>> neighbor_lists(std::size_t nodes,
                                                     std::span<const Edge> edges) {
  std::vector<std::vector<std::size_t>> nb(nodes);
  for (const auto& [a, b] : edges) {
    if (a >= nodes || b >= nodes)
      throw InvalidParameter("edge (" + std::to_string(a) + ", " + std::to_string(b) +
                             ") refers to a node outside [0, " + std::to_string(nodes) + ")");
    if (a == b) throw InvalidParameter("self-loop on node " + std::to_string(a));
    nb[a].push_back(b);
    nb[b].push_back(a);
  }
  for (auto& l : nb) {
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
  }
  return nb;
}

bool connected(const std::vector<std::vector<std::size_t>>& nb) {
  if (nb.empty()) return false;
  std::vector<bool> seen(nb.size(), false);
  std::vector<std::size_t> stack{0};
  seen[0] = true;
  std::size_t count = 1;
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    stack.pop_back();
    for (std::size_t u : nb[v])
      if (!seen[u]) {
        seen[u] = true;
        ++count;
        stack.push_back(u);
      }
  }
  return count == nb.size();
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

Matrix metropolis_weights(std::size_t nodes, std::span<const Edge> edges) {
  const auto nb = neighbor_lists(nodes, edges);
  if (!connected(nb)) throw InvalidParameter("metropolis_weights: graph is not connected");
  Matrix w = Matrix::Zero(static_cast<Eigen::Index>(nodes), static_cast<Eigen::Index>(nodes));
  for (std::size_t i = 0; i < nodes; ++i) {
    for (std::size_t j : nb[i])
      w(i, j) = 1.0 / (1.0 + static_cast<double>(std::max(nb[i].size(), nb[j].size())));
  }
  for (std::size_t i = 0; i < nodes; ++i) {
    double off = 0.0;
    for (std::size_t j : nb[i]) off += w(i, j);
    w(i, i) = 1.0 - off;
  }
  return w;
}

// ---------------------------------------------------------------------------

Network::Network(std::size_t nodes, std::vector<Edge> edges) {
  build_adjacency(nodes, std::move(edges));
  w_ = metropolis_weights(nodes, edges_);
  lambda_min_ = validate_mixing();
}

Network::Network(std::size_t nodes, std::vector<Edge> edges, Matrix mixing) {
  build_adjacency(nodes, std::move(edges));
  w_ = std::move(mixing);
  lambda_min_ = validate_mixing();
}

Network Network::path(std::size_t nodes) {
  std::vector<Edge> e;
  for (std::size_t i = 0; i + 1 < nodes; ++i) e.emplace_back(i, i + 1);
  return Network(nodes, std::move(e));
}

void Network::build_adjacency(std::size_t nodes, std::vector<Edge> edges) {
  if (nodes == 0) throw InvalidParameter("network needs at least one node");
  neighbors_ = neighbor_lists(nodes, edges);
  if (!connected(neighbors_)) throw InvalidParameter("network graph is not connected");
  edges_.clear();
  for (std::size_t i = 0; i < nodes; ++i)
    for (std::size_t j : neighbors_[i])
      if (i < j) edges_.emplace_back(i, j);
}

bool Network::adjacent(std::size_t i, std::size_t j) const {
  const auto& l = neighbors_.at(i);
  return std::binary_search(l.begin(), l.end(), j);
}

double Network::validate_mixing() const {
  const auto m = static_cast<Eigen::Index>(node_count());
  if (w_.rows() != m || w_.cols() != m)
    throw InvalidParameter("mixing matrix must be " + std::to_string(m) + " x " + std::to_string(m));
  if (!w_.allFinite()) throw InvalidParameter("mixing matrix has non-finite entries");
  for (Eigen::Index i = 0; i < m; ++i) {
    if (std::abs(w_.row(i).sum() - 1.0) > kMixingTolerance)
      throw InvalidParameter("mixing matrix row " + std::to_string(i) + " does not sum to 1");
    for (Eigen::Index j = 0; j < m; ++j) {
      if (std::abs(w_(i, j) - w_(j, i)) > kMixingTolerance)
        throw InvalidParameter("mixing matrix is not symmetric");
      if (w_(i, j) < 0.0) throw InvalidParameter("mixing matrix has a negative entry");
      if (i != j && w_(i, j) != 0.0 &&
          !adjacent(static_cast<std::size_t>(i), static_cast<std::size_t>(j)))
        throw InvalidParameter("mixing matrix has weight on a non-edge (" + std::to_string(i) +
                               ", " + std::to_string(j) + ")");
    }
  }
  const double lmin = min_eigenvalue_symmetric(w_);
  // An eigenvalue at -1 up to rounding still leaves no admissible beta.
  if (!(lmin > -1.0 + kMixingTolerance))
    throw InvalidParameter("mixing matrix needs lambda_min(W) > -1");
  return lmin;
}

Network parse_network(std::istream& in) {
  std::string line;
  std::optional<std::size_t> nodes;
  std::vector<Edge> edges;
  std::size_t lineno = 0;
  auto parse_index = [&](const std::string& tok) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      if (tok.empty() || tok[0] == '-') throw std::invalid_argument(tok);
      v = std::stoull(tok, &pos);
    } catch (const std::exception&) {
      throw ParseError("network line " + std::to_string(lineno) + ": bad integer '" + tok + "'");
    }
    if (pos != tok.size())
      throw ParseError("network line " + std::to_string(lineno) + ": bad integer '" + tok + "'");
    return static_cast<std::size_t>(v);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<std::string> toks;
    for (std::string t; ls >> t;) toks.push_back(t);
    if (toks.empty()) continue;
    if (!nodes) {
      if (toks.size() != 1)
        throw ParseError("network line " + std::to_string(lineno) + ": expected the node count");
      nodes = parse_index(toks[0]);
      continue;
    }
    if (toks.size() != 2)
      throw ParseError("network line " + std::to_string(lineno) + ": expected 'i j'");
    edges.emplace_back(parse_index(toks[0]), parse_index(toks[1]));
  }
  if (!nodes) throw ParseError("network file is empty");
  return Network(*nodes, std::move(edges));
}

Network read_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open network file " + path.string());
  return parse_network(in);
}

// ---------------------------------------------------------------------------

PenaltyObjective::PenaltyObjective(Network network, LocalProblems locals, double alpha)
    : net_(std::move(network)), locals_(std::move(locals)), alpha_(alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw InvalidParameter("penalty objective needs alpha > 0");
  if (locals_.size() != net_.node_count())
    throw InvalidParameter("need one local problem per node");
  for (const auto& p : locals_)
    if (!p) throw InvalidParameter("null local problem");
  n_ = locals_.front()->dimension();
  for (const auto& p : locals_)
    if (p->dimension() != n_) throw InvalidParameter("local problems differ in dimension");

  const auto m = static_cast<Eigen::Index>(net_.node_count());
  laplacian_ = Matrix::Identity(m, m) - net_.mixing();
  std::vector<double> block_l;
  for (Eigen::Index i = 0; i < m; ++i) {
    max_li_ = std::max(max_li_, locals_[i]->lipschitz());
    block_l.push_back(locals_[i]->lipschitz() + laplacian_(i, i) / alpha_);
  }
  const double lf = max_li_ + (1.0 - net_.lambda_min()) / alpha_;
  set_metadata(BlockPartition::uniform(m * n_, net_.node_count()), lf, std::move(block_l));
  compute_reference();
}

Matrix PenaltyObjective::unstack(const Vector& x) const {
  const auto m = static_cast<Eigen::Index>(net_.node_count());
  return Eigen::Map<const RowMajor>(x.data(), m, n_);
}

Vector PenaltyObjective::stack(const Matrix& X) const {
  const RowMajor r = X;
  return Eigen::Map<const Vector>(r.data(), r.size());
}

double PenaltyObjective::do_value(const Vector& x) const {
  const Matrix X = unstack(x);
  double f = 0.0;
  for (std::size_t i = 0; i < locals_.size(); ++i)
    f += locals_[i]->value(X.row(static_cast<Eigen::Index>(i)).transpose());
  return f + (X.transpose() * laplacian_ * X).trace() / (2.0 * alpha_);
}

Vector PenaltyObjective::do_gradient(const Vector& x) const {
  const Matrix X = unstack(x);
  Matrix G = laplacian_ * X / alpha_;
  for (std::size_t i = 0; i < locals_.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    G.row(r) += locals_[i]->gradient(X.row(r).transpose()).transpose();
  }
  return stack(G);
}

Vector PenaltyObjective::do_project_to_argmin(const Vector&) const { return x_star_; }

double PenaltyObjective::do_suboptimality(const Vector& x) const { return do_value(x) - f_star_; }

void PenaltyObjective::compute_reference() {
  const double gamma = 1.0 / lipschitz();
  Vector x = Vector::Zero(dimension());
  std::size_t it = 0;
  for (; it < kReferenceMaxIterations; ++it) {
    const Vector next = x - gamma * do_gradient(x);
    const double move = (next - x).norm();
    x = next;
    if (move <= 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + x.norm())) break;
  }
  ref_iters_ = it;
  x_star_ = x;
  f_star_ = do_value(x);
  set_min_value(f_star_);
  enable_argmin_projection();
}

// ---------------------------------------------------------------------------

ParamBounds param_bounds(const Network& net, std::span<const double> local_lipschitz) {
  if (local_lipschitz.empty()) throw InvalidParameter("param_bounds: no local Lipschitz constants");
  ParamBounds b;
  b.lambda_min = net.lambda_min();
  b.max_lipschitz = *std::max_element(local_lipschitz.begin(), local_lipschitz.end());
  b.beta_max = (1.0 + b.lambda_min) / 2.0;
  // Inside the bounds alpha * L_F = alpha max L_i + 1 - lambda_min < 2 (1 - beta).
  const double beta = b.beta_max / 2.0;
  const double alpha = b.alpha_max(beta) / 2.0;
  const double lf = b.max_lipschitz + (1.0 - b.lambda_min) / alpha;
  if (!(2.0 * (1.0 - beta) / lf - alpha > 0.0))
    throw ContractViolation("param_bounds: bounds do not imply the step condition");
  return b;
}

void validate_decentralized_params(const ParamBounds& b, double alpha, double beta) {
  if (!(beta >= 0.0))
    throw InvalidParameter("decentralized: need beta >= 0 (beta = " + csv::format(beta) + ")");
  if (!(beta < b.beta_max))
    throw InvalidParameter("decentralized: need beta < (1 + lambda_min(W))/2 = " +
                           csv::format(b.beta_max) + " (beta = " + csv::format(beta) + ")");
  if (!(alpha > 0.0))
    throw InvalidParameter("decentralized: need alpha > 0 (alpha = " + csv::format(alpha) + ")");
  if (!(alpha < b.alpha_max(beta)))
    throw InvalidParameter("decentralized: need alpha < (1 - 2 beta + lambda_min(W))/max L_i = " +
                           csv::format(b.alpha_max(beta)) + " (alpha = " + csv::format(alpha) +
                           ")");
}

Vector local_step(const Network& net, std::size_t node, std::span<const NeighborState> received,
                  const Vector& x_prev, const Problem& local, double alpha, double beta) {
  if (node >= net.node_count()) throw InvalidParameter("local_step: node out of range");
  std::vector<std::size_t> expected = net.neighbors(node);
  expected.insert(std::upper_bound(expected.begin(), expected.end(), node), node);

  std::vector<const NeighborState*> by_node(expected.size(), nullptr);
  for (const NeighborState& s : received) {
    const auto it = std::lower_bound(expected.begin(), expected.end(), s.node);
    if (it == expected.end() || *it != s.node)
      throw InvalidParameter("local_step: node " + std::to_string(node) +
                             " received a state from non-neighbour " + std::to_string(s.node));
    const auto pos = static_cast<std::size_t>(it - expected.begin());
    if (by_node[pos]) throw InvalidParameter("local_step: duplicate state from node " +
                                             std::to_string(s.node));
    by_node[pos] = &s;
  }
  for (std::size_t p = 0; p < expected.size(); ++p)
    if (!by_node[p])
      throw InvalidParameter("local_step: node " + std::to_string(node) +
                             " is missing the state of node " + std::to_string(expected[p]));

  const Vector* self = nullptr;
  for (std::size_t p = 0; p < expected.size(); ++p) {
    if (by_node[p]->x.size() != local.dimension())
      throw InvalidParameter("local_step: state dimension mismatch");
    if (expected[p] == node) self = &by_node[p]->x;
  }
  // sum_j w_ij x(j) written as x(i) + sum_{j != i} w_ij (x(j) - x(i)) (rows sum
  // to 1): agreeing neighbours contribute exactly nothing, so consensus states
  // and W = I reproduce the single-node step without rounding drift.
  Vector mix = *self;
  for (std::size_t p = 0; p < expected.size(); ++p) {
    if (expected[p] == node) continue;
    mix += net.mixing()(static_cast<Eigen::Index>(node), static_cast<Eigen::Index>(expected[p])) *
           (by_node[p]->x - *self);
  }
  return mix - alpha * local.gradient(*self) + beta * (*self - x_prev);
}

double consensus_error(const Matrix& X) {
  const Eigen::RowVectorXd mean = X.colwise().mean();
  return (X.rowwise() - mean).norm();
}

DecentralizedTrace run_decentralized(const PenaltyObjective& F, const DecentralizedConfig& cfg) {
  const Network& net = F.network();
  const std::size_t m = net.node_count();
  const Eigen::Index n = F.local_dimension();
  std::vector<double> li;
  for (const auto& p : F.locals()) li.push_back(p->lipschitz());
  validate_decentralized_params(param_bounds(net, li), cfg.alpha, cfg.beta);
  if (cfg.alpha != F.alpha())
    throw InvalidParameter("decentralized: cfg.alpha differs from the penalty objective's alpha");

  std::vector<std::size_t> order = cfg.node_order;
  if (order.empty()) {
    order.resize(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
  }
  {
    std::vector<std::size_t> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < m; ++i)
      if (sorted.size() != m || sorted[i] != i)
        throw InvalidParameter("node_order must be a permutation of the nodes");
  }

  Matrix X = cfg.x0 ? *cfg.x0 : Matrix::Zero(static_cast<Eigen::Index>(m), n);
  if (X.rows() != static_cast<Eigen::Index>(m) || X.cols() != n)
    throw InvalidParameter("decentralized: x0 must be nodes x n");
  Matrix X_prev = X;

  DecentralizedTrace out;
  TraceMeta& meta = out.global.meta;
  meta.scheme = UpdateRule::full;
  meta.lipschitz = F.lipschitz();
  meta.c = cfg.alpha * F.lipschitz() / (2.0 * (1.0 - cfg.beta));
  meta.blocks = 1;
  meta.schedule = MomentumSchedule::constant(cfg.beta);
  meta.min_value = F.min_value();
  meta.rsc_constant = F.rsc_constant();

  const double f0 = F.value(F.stack(X));
  for (std::size_t k = 0;; ++k) {
    const Vector x = F.stack(X);
    const Vector x_prev = F.stack(X_prev);
    const double f = F.value(x);
    if (!std::isfinite(f) || f - f0 > kDivergenceFactor * (1.0 + std::abs(f0)))
      throw DivergenceError("decentralized run diverged at k = " + std::to_string(k));
    const Vector grad = F.gradient(x);

    DecentralizedRecord rec;
    rec.k = k;
    rec.f = f;
    rec.residual = F.suboptimality(x);
    rec.consensus_error = consensus_error(X);

    TraceRecord g;
    g.k = k;
    g.f = f;
    g.residual = rec.residual;
    g.step_norm_sq = {(x - x_prev).squaredNorm()};
    g.grad_norm = grad.norm();
    g.beta = {cfg.beta};
    g.gamma = {cfg.alpha};
    g.dist_sq = (x - F.project_to_argmin(x)).squaredNorm();

    if (k == cfg.iters) {
      out.records.push_back(rec);
      out.global.records.push_back(std::move(g));
      out.states.push_back(X);
      break;
    }

    // One synchronous round: every node reads only round-k messages.
    Matrix next(X.rows(), X.cols());
    for (std::size_t i : order) {
      std::vector<NeighborState> inbox;
      inbox.push_back({i, X.row(static_cast<Eigen::Index>(i)).transpose()});
      for (std::size_t j : net.neighbors(i))
        inbox.push_back({j, X.row(static_cast<Eigen::Index>(j)).transpose()});
      next.row(static_cast<Eigen::Index>(i)) =
          local_step(net, i, inbox, X_prev.row(static_cast<Eigen::Index>(i)).transpose(),
                     *F.locals()[i], cfg.alpha, cfg.beta)
              .transpose();
    }
    const Vector global_next = heavy_ball_step(x, x_prev, grad, cfg.alpha, cfg.beta);
    rec.equivalence_gap = (F.stack(next) - global_next).cwiseAbs().maxCoeff();

    out.records.push_back(rec);
    out.global.records.push_back(std::move(g));
    out.states.push_back(X);
    X_prev = std::move(X);
    X = std::move(next);
  }
  return out;
}

void write_decentralized_csv(const DecentralizedTrace& t, std::ostream& out) {
  out << "k,F,residual,consensus_error\n";
  for (const DecentralizedRecord& r : t.records)
    out << r.k << ',' << csv::format(r.f) << ',' << csv::format(r.residual) << ','
        << csv::format(r.consensus_error) << '\n';
}

LocalProblems node_least_squares(std::size_t nodes, Eigen::Index n, Eigen::Index rows,
                                 Distribution dist, std::uint64_t seed) {
  LocalProblems out;
  for (std::size_t i = 0; i < nodes; ++i) {
    const Dataset d = generate_data(n, rows, dist, seed + i);
    out.push_back(std::make_shared<LinearRegression>(make_linear_regression(d)));
  }
  return out;
}

}  // namespace hb
