#pragma once

#include "heavyball/solvers.hpp"

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hb {

// ---------------------------------------------------------------------------
// Scalar formulas

/// delta_k = beta/(2 gamma) + ((1 - beta)/gamma - L/2) / 2.
/// Throws InvalidParameter when the result is not positive (step too large).
double delta_full(double beta, double gamma, double lipschitz);

/// xi_k = f(x^k) - min f + delta_k ||x^k - x^{k-1}||^2.
/// Throws InvalidParameter when xi_k < -1e-9 (min f inconsistent with f).
double xi_full(double f, double min_f, double delta, double step_norm_sq);

/// Same with the residual f - min f already formed.
double xi_from_residual(double residual, double delta, double step_norm_sq);

/// eps_k = 4 c delta_k^2 / ((1-c) L) + 4 c / ((1-c) L gamma_k^2).
double epsilon_full(double delta, double gamma, double c, double lipschitz);

/// Stochastic weight: beta/(2 sqrt(m) gamma) + ((1 - beta/sqrt(m))/gamma - L/2) / 2.
double delta_stochastic(double beta, double gamma, double lipschitz, std::size_t blocks);

/// 4 c dbar^2 / ((1-c) L) + 8 c m / ((1-c) L gamma^2), evaluated with the
/// stochastic weight dbar.
double epsilon_stochastic(double delta_bar, double gamma, double c, double lipschitz,
                          std::size_t blocks);

/// Cyclic constant
///   max{ 4c sum_i (delta_{k+1,i}^2 + 1/gamma_{k,i}^2) / ((1-c) Lmin),
///        4c m Lsum / ((1-c) Lmin) }
/// with Lsum = sum_i L_i and Lmin = min_i L_i.
double epsilon_cyclic(std::span<const double> delta_next, std::span<const double> gamma, double c,
                      std::span<const double> block_lipschitz);

// ---------------------------------------------------------------------------
// Series

/// Lyapunov quantities per record. For stochastic series every per-k value is
/// the replicate mean and `xi_stderr` holds its standard error.
struct LyapunovSeries {
  UpdateRule scheme = UpdateRule::full;
  std::vector<std::size_t> k;
  std::vector<double> residual;
  std::vector<double> xi;
  std::vector<double> xi_stderr;
  /// One entry per record: {delta_k}, {delta_{k,1..m}} or {dbar_k}.
  std::vector<std::vector<double>> delta;
  std::vector<double> epsilon;
  std::vector<double> step_norm_sq;
  std::vector<double> grad_norm;
  /// ||x^k - xbar^k||^2 (replicate mean) when the trace carries it.
  std::vector<double> dist_sq;
  /// Stochastic only: xi per replicate, [replicate][record].
  std::vector<std::vector<double>> xi_replicates;
  /// 1 + |f(x^0)|, the scale for absolute tolerances.
  double scale = 1.0;

  std::size_t size() const noexcept { return k.size(); }
  bool has_distance() const noexcept { return !dist_sq.empty(); }
};

LyapunovSeries series_full(const IterateTrace& trace);
LyapunovSeries series_cyclic(const IterateTrace& trace);
/// Needs >= 2 replicates with identical configuration (seeds may differ).
LyapunovSeries series_stochastic(std::span<const IterateTrace> replicates);
/// Dispatches full / cyclic on trace.meta.scheme.
LyapunovSeries series(const IterateTrace& trace);

// ---------------------------------------------------------------------------
// Inequality checks

/// Per-step sufficient-descent audit. For stochastic input the columns are
/// replicate means and `stderr` is their standard error.
struct DescentReport {
  std::vector<std::size_t> k;
  std::vector<double> lhs;
  std::vector<double> rhs;
  std::vector<double> slack;  // lhs - rhs
  std::vector<double> stderr_;
  double tolerance = 0.0;
  std::vector<std::size_t> violations;

  bool ok() const noexcept { return violations.empty(); }
  double min_slack() const;
};

inline constexpr double kDescentTolerance = 1e-10;
inline constexpr double kStandardErrors = 3.0;

/// Full and cyclic schemes; needs consecutive records (record_every = 1).
DescentReport check_descent(const IterateTrace& trace);
/// Stochastic scheme in expectation: a violation is a k where
/// mean(slack) + 3 stderr < -tolerance.
DescentReport check_descent(std::span<const IterateTrace> replicates);

/// Error-bound audit xi_k^2 <= eps_k (xi_k - xi_{k+1}) D_k with
/// D_k = 2 ||x^k - xbar^k||^2 + ||x^k - x^{k-1}||^2 (full, cyclic) or
/// E||x^k - xbar^k||^2 + E||x^k - x^{k-1}||^2 (stochastic means).
struct ErrorBoundReport {
  std::vector<std::size_t> k;
  std::vector<double> lhs;
  std::vector<double> rhs;
  std::vector<double> slack;  // rhs - lhs
  std::vector<std::size_t> violations;
  /// max_k lhs / (rhs + tolerance_k); a violation is a ratio above 1.
  double max_ratio = 0.0;
  bool skipped = false;
  std::string notice;

  bool ok() const noexcept { return !skipped && violations.empty(); }
  double min_slack() const;
};

ErrorBoundReport check_error_bound(const LyapunovSeries& s);

// ---------------------------------------------------------------------------
// Rates

struct RateReport {
  double sup_epsilon = 0.0;
  std::optional<double> r_emp;
  double sublinear_constant = 0.0;  // max_{k>=1} k * residual_k
  std::optional<double> sublinear_bound;  // 4 R_emp sup eps
  std::optional<bool> sublinear_ok;
  std::optional<std::size_t> sublinear_first_violation;

  std::optional<double> ell;
  std::optional<double> omega;
  std::optional<double> max_ratio;  // max xi_{k+1}/xi_k above the floor
  std::optional<double> rho;        // geometric least-squares fit on log xi
  std::optional<bool> linear_ok;
  std::optional<bool> rho_ok;
  std::optional<std::size_t> linear_first_violation;
  std::size_t points_above_floor = 0;
};

inline constexpr double kSublinearRelTolerance = 1e-8;

/// Floor below which xi values are excluded from ratio checks and fits.
double xi_floor(double scale);

/// Needs >= 10 records. The sublinear verdict requires distances to the
/// argmin; the linear verdicts require meta.rsc_constant (or `nu`).
RateReport rate_report(const TraceMeta& meta, const LyapunovSeries& s,
                       std::optional<double> nu = std::nullopt);
RateReport rate_report(const IterateTrace& trace, const LyapunovSeries& s);

/// Least-squares slope of log(values) against k, exponentiated.
double fit_geometric_rate(std::span<const std::size_t> k, std::span<const double> values);

/// sqrt(k) * min_{i<=k} grad_norm_i for k >= 1 and whether it is
/// non-increasing from `burn_in` on.
struct GradientRateReport {
  std::vector<std::size_t> k;
  std::vector<double> scaled_min;
  bool non_increasing = true;
  std::optional<std::size_t> first_increase;
};

GradientRateReport check_gradient_rate(const LyapunovSeries& s, std::size_t burn_in);

// ---------------------------------------------------------------------------
// Output

/// `k,xi,delta,epsilon,descent_lhs,descent_rhs,slack`; descent cells are
/// empty where no descent step exists (last record, or no report given).
void write_diagnostics_csv(const LyapunovSeries& s, const DescentReport* descent, std::ostream& out);

struct Verdict {
  std::string name;  // e.g. THEOREM_1
  bool pass = false;
  double empirical = 0.0;
  double bound = 0.0;
  std::string note;
};

/// `NAME: PASS|FAIL (empirical=..., bound=...)`.
std::string format_verdict(const Verdict& v);

}  // namespace hb
