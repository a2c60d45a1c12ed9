#include "heavyball/problems.hpp"

#include "heavyball/csv.hpp"
#include "heavyball/errors.hpp"
#include "heavyball/rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <fstream>
#include <limits>
#include <string>

namespace hb {

std::string_view to_string(Distribution d) {
  return d == Distribution::gaussian ? "gaussian" : "bernoulli";
}

Distribution parse_distribution(std::string_view s) {
  if (s == "gaussian") return Distribution::gaussian;
  if (s == "bernoulli") return Distribution::bernoulli;
  throw InvalidParameter("unknown distribution '" + std::string(s) + "'");
}

Dataset generate_data(Eigen::Index n, Eigen::Index m, Distribution dist, std::uint64_t seed,
                      LabelKind labels) {
  if (n < 1 || m < 1) throw InvalidParameter("generate_data: n and m must be >= 1");
  Rng rng(seed);
  auto draw = [&] { return dist == Distribution::gaussian ? rng.normal() : (rng.coin() ? 1.0 : 0.0); };

  Dataset d;
  d.distribution = dist;
  d.seed = seed;
  d.features.resize(m, n);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) d.features(i, j) = draw();
  d.labels.resize(m);
  for (Eigen::Index i = 0; i < m; ++i)
    d.labels[i] = labels == LabelKind::sign ? (rng.coin() ? 1.0 : -1.0) : draw();
  return d;
}

void write_dataset_csv(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open " + path.string() + " for writing");
  out << "n,m,dist,seed\n"
      << d.dimension() << ',' << d.samples() << ',' << to_string(d.distribution) << ','
      << d.seed << '\n';
  for (Eigen::Index i = 0; i < d.samples(); ++i) {
    for (Eigen::Index j = 0; j < d.dimension(); ++j) out << csv::format(d.features(i, j)) << ',';
    out << csv::format(d.labels[i]) << '\n';
  }
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("n,m,dist,seed", 0) != 0)
    throw ParseError("dataset csv: missing header 'n,m,dist,seed'");
  if (!std::getline(in, line)) throw ParseError("dataset csv: missing parameter line");
  const auto head = csv::split(line);
  if (head.size() != 4) throw ParseError("dataset csv: malformed parameter line");
  Dataset d;
  const auto n = static_cast<Eigen::Index>(std::stoll(head[0]));
  const auto m = static_cast<Eigen::Index>(std::stoll(head[1]));
  d.distribution = parse_distribution(head[2]);
  d.seed = std::stoull(head[3]);
  if (n < 1 || m < 1) throw ParseError("dataset csv: n and m must be >= 1");
  d.features.resize(m, n);
  d.labels.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!std::getline(in, line)) throw ParseError("dataset csv: too few rows");
    const auto cells = csv::split(line);
    if (static_cast<Eigen::Index>(cells.size()) != n + 1)
      throw ParseError("dataset csv: row " + std::to_string(i) + " has wrong width");
    for (Eigen::Index j = 0; j < n; ++j) d.features(i, j) = csv::parse_double(cells[j]);
    d.labels[i] = csv::parse_double(cells[n]);
  }
  return d;
}

std::vector<double> block_lipschitz_of(const Matrix& gram, const BlockPartition& blocks) {
  std::vector<double> out;
  out.reserve(blocks.count());
  for (const auto& r : blocks.ranges())
    out.push_back(max_eigenvalue(gram.block(r.offset, r.offset, r.size, r.size), 1e-13));
  return out;
}

// ---------------------------------------------------------------------------
// Linear regression

LinearRegression::LinearRegression(Matrix a, Vector y, BlockPartition blocks)
    : a_(std::move(a)), y_(std::move(y)) {
  if (a_.rows() != y_.size()) throw ContractViolation("LinearRegression: A and y disagree in rows");
  if (blocks.dimension() != a_.cols())
    throw ContractViolation("LinearRegression: partition dimension differs from A.cols()");
  if (!a_.allFinite() || !y_.allFinite())
    throw ContractViolation("LinearRegression: non-finite data");
  if (a_.cwiseAbs().maxCoeff() == 0.0)
    throw InvalidParameter("LinearRegression: all-zero design matrix (L would be 0)");

  const Matrix gram = a_.transpose() * a_;
  set_metadata(blocks, max_eigenvalue(gram, 1e-13), block_lipschitz_of(gram, blocks));

  svd_ = rank_revealing_svd(a_);
  x_ref_ = svd_.pseudo_solve(y_);
  set_min_value(0.5 * (a_ * x_ref_ - y_).squaredNorm());
  enable_argmin_projection();
  const double smin = svd_.s[svd_.rank() - 1];
  set_rsc_constant(0.5 * smin * smin);
}

double LinearRegression::do_value(const Vector& x) const {
  return 0.5 * (a_ * x - y_).squaredNorm();
}

Vector LinearRegression::do_gradient(const Vector& x) const {
  const Vector r = a_ * x - y_;
  return a_.transpose() * r;
}

Vector LinearRegression::do_block_gradient(const Vector& x, const BlockRange& block) const {
  const Vector r = a_ * x - y_;
  return a_.middleCols(block.offset, block.size).transpose() * r;
}

Vector LinearRegression::do_project_to_argmin(const Vector& x) const {
  return x - svd_.pseudo_solve(a_ * x - y_);
}

double LinearRegression::do_suboptimality(const Vector& x) const {
  return 0.5 * (a_ * (x - x_ref_)).squaredNorm();
}

LinearRegression make_linear_regression(const Dataset& d, BlockPartition blocks) {
  return LinearRegression(d.features, d.labels, std::move(blocks));
}

LinearRegression make_linear_regression(const Dataset& d, std::size_t blocks) {
  return make_linear_regression(d, BlockPartition::uniform(d.dimension(), blocks));
}

// ---------------------------------------------------------------------------
// Logistic regression

namespace {

/// log(1 + exp(t)) without overflow.
double softplus(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace

LogisticRegression::LogisticRegression(Matrix a, Vector y, double lambda, BlockPartition blocks)
    : a_(std::move(a)), y_(std::move(y)), lambda_(lambda) {
  if (!(lambda_ > 0.0) || !std::isfinite(lambda_))
    throw InvalidParameter("LogisticRegression: lambda must be positive");
  if (a_.rows() != y_.size())
    throw ContractViolation("LogisticRegression: A and y disagree in rows");
  if (blocks.dimension() != a_.cols())
    throw ContractViolation("LogisticRegression: partition dimension differs from A.cols()");
  if (!a_.allFinite()) throw ContractViolation("LogisticRegression: non-finite features");
  for (Eigen::Index i = 0; i < y_.size(); ++i)
    if (y_[i] != 1.0 && y_[i] != -1.0)
      throw InvalidParameter("LogisticRegression: labels must be -1 or +1");

  const Matrix gram = a_.transpose() * a_;
  std::vector<double> block_l = block_lipschitz_of(gram, blocks);
  for (double& l : block_l) l += lambda_;
  set_metadata(blocks, max_eigenvalue(gram, 1e-13) + lambda_, std::move(block_l));
  set_rsc_constant(0.5 * lambda_);

  x_star_ = newton_minimize();
  set_min_value(do_value(x_star_) - kMinValueMargin);
  enable_argmin_projection();
}

double LogisticRegression::do_value(const Vector& x) const {
  const Vector z = a_ * x;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) loss += softplus(-y_[i] * z[i]);
  return loss + 0.5 * lambda_ * x.squaredNorm();
}

Vector LogisticRegression::loss_derivative(const Vector& x) const {
  const Vector z = a_ * x;
  Vector s(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) s[i] = -y_[i] * sigmoid(-y_[i] * z[i]);
  return s;
}

Vector LogisticRegression::do_gradient(const Vector& x) const {
  const Vector s = loss_derivative(x);
  return a_.transpose() * s + lambda_ * x;
}

Vector LogisticRegression::do_block_gradient(const Vector& x, const BlockRange& block) const {
  const Vector s = loss_derivative(x);
  return a_.middleCols(block.offset, block.size).transpose() * s +
         lambda_ * x.segment(block.offset, block.size);
}

Vector LogisticRegression::do_project_to_argmin(const Vector&) const { return x_star_; }

Vector LogisticRegression::newton_minimize() const {
  const Eigen::Index n = a_.cols();
  Vector x = Vector::Zero(n);
  double fx = do_value(x);
  for (int it = 0; it < 200; ++it) {
    const Vector z = a_ * x;
    Vector weights(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double p = sigmoid(y_[i] * z[i]);
      weights[i] = p * (1.0 - p);
    }
    const Vector g = do_gradient(x);
    Matrix h = a_.transpose() * weights.asDiagonal() * a_;
    h.diagonal().array() += lambda_;
    const Vector dx = h.ldlt().solve(-g);
    const double decrement = -g.dot(dx);
    if (!(decrement > 1e-30 * (1.0 + std::abs(fx)))) break;

    double t = 1.0;
    Vector trial = x + dx;
    double ft = do_value(trial);
    while (ft > fx - 0.25 * t * decrement && t > 1e-12) {
      t *= 0.5;
      trial = x + t * dx;
      ft = do_value(trial);
    }
    if (ft > fx) break;
    x = trial;
    fx = ft;
    if (t == 1.0 && decrement < 1e-26 * (1.0 + std::abs(fx))) break;
  }
  return x;
}

LogisticRegression make_logistic_regression(const Dataset& d, double lambda, BlockPartition blocks) {
  return LogisticRegression(d.features, d.labels, lambda, std::move(blocks));
}

LogisticRegression make_logistic_regression(const Dataset& d, double lambda, std::size_t blocks) {
  return make_logistic_regression(d, lambda, BlockPartition::uniform(d.dimension(), blocks));
}

// ---------------------------------------------------------------------------
// Quadratic

Quadratic::Quadratic(Matrix h, Vector b, BlockPartition blocks) : h_(std::move(h)), b_(std::move(b)) {
  if (h_.rows() != h_.cols() || h_.rows() != b_.size())
    throw ContractViolation("Quadratic: H must be square and match b");
  if (blocks.dimension() != h_.rows())
    throw ContractViolation("Quadratic: partition dimension differs from H");

  Eigen::SelfAdjointEigenSolver<Matrix> es(h_);
  const Vector& eig = es.eigenvalues();
  const double cutoff = static_cast<double>(h_.rows()) * std::numeric_limits<double>::epsilon() *
                        std::max(1.0, eig.cwiseAbs().maxCoeff());
  if (eig.minCoeff() < -cutoff) throw InvalidParameter("Quadratic: H is not positive semidefinite");
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < eig.size(); ++i)
    if (eig[i] > cutoff) keep.push_back(i);
  if (keep.empty()) throw InvalidParameter("Quadratic: H is zero");
  range_basis_.resize(h_.rows(), static_cast<Eigen::Index>(keep.size()));
  range_eigs_.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    range_basis_.col(static_cast<Eigen::Index>(j)) = es.eigenvectors().col(keep[j]);
    range_eigs_[static_cast<Eigen::Index>(j)] = eig[keep[j]];
  }
  x_ref_ = range_basis_ * (range_basis_.transpose() * b_).cwiseQuotient(range_eigs_);
  if ((h_ * x_ref_ - b_).norm() > 1e-10 * (1.0 + b_.norm()))
    throw InvalidParameter("Quadratic: b is not in range(H); objective unbounded below");

  set_metadata(blocks, max_eigenvalue(h_, 1e-13), block_lipschitz_of(h_, blocks));
  set_min_value(-0.5 * b_.dot(x_ref_));
  enable_argmin_projection();
  set_rsc_constant(0.5 * range_eigs_.minCoeff());
}

double Quadratic::do_value(const Vector& x) const { return 0.5 * x.dot(h_ * x) - b_.dot(x); }

Vector Quadratic::do_gradient(const Vector& x) const { return h_ * x - b_; }

Vector Quadratic::do_block_gradient(const Vector& x, const BlockRange& block) const {
  return h_.middleRows(block.offset, block.size) * x - b_.segment(block.offset, block.size);
}

Vector Quadratic::do_project_to_argmin(const Vector& x) const {
  const Vector r = h_ * x - b_;
  return x - range_basis_ * (range_basis_.transpose() * r).cwiseQuotient(range_eigs_);
}

double Quadratic::do_suboptimality(const Vector& x) const {
  const Vector e = x - x_ref_;
  return 0.5 * e.dot(h_ * e);
}

}  // namespace hb
