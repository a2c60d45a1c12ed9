#include "heavyball/lyapunov.hpp"

#include "heavyball/csv.hpp"
#include "heavyball/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace hb {

namespace {

constexpr double kXiNegativeTolerance = 1e-9;
constexpr std::size_t kMinRatePoints = 10;

double checked_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v))
    throw InvalidParameter(std::string(what) + " must be positive and finite");
  return v;
}

void check_c(double c) {
  if (!(c > 0.0 && c < 1.0)) throw InvalidParameter("c must lie in (0, 1)");
}

double require_residual(const TraceRecord& r) {
  if (!r.residual)
    throw UnsupportedCapability("Lyapunov series needs min f (trace has no residual column)");
  return *r.residual;
}

double scale_of(const IterateTrace& t) {
  if (t.records.empty()) throw InvalidParameter("empty trace");
  return 1.0 + std::abs(t.records.front().f);
}

void require_consecutive(const IterateTrace& t) {
  for (std::size_t j = 1; j < t.records.size(); ++j)
    if (t.records[j].k != t.records[j - 1].k + 1)
      throw InvalidParameter("descent check needs one record per iteration (record_every = 1)");
}

/// Shifted by the first entry so that identical replicates give their
/// common value exactly (and a standard error of exactly zero).
double mean_of(std::span<const double> v) {
  const double shift = v.front();
  double acc = 0.0;
  for (double x : v) acc += x - shift;
  return shift + acc / static_cast<double>(v.size());
}

/// Standard error of the mean (sample standard deviation / sqrt(n)).
double stderr_of(std::span<const double> v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

double weighted_step(const TraceRecord& r, double root_m) {
  double acc = 0.0;
  for (std::size_t i = 0; i < r.step_norm_sq.size(); ++i)
    acc += r.beta[i] / (2.0 * root_m * r.gamma[i]) * r.step_norm_sq[i];
  return acc;
}

void require_per_block(const TraceRecord& r, std::size_t m) {
  if (r.step_norm_sq.size() != m || r.beta.size() != m || r.gamma.size() != m)
    throw InvalidParameter("cyclic record must carry one step/beta/gamma entry per block");
}

void require_single(const TraceRecord& r) {
  if (r.step_norm_sq.size() != 1 || r.beta.size() != 1 || r.gamma.size() != 1)
    throw InvalidParameter("record must carry exactly one step/beta/gamma entry");
}

bool same_config(const TraceMeta& a, const TraceMeta& b) {
  return a.scheme == b.scheme && a.c == b.c && a.lipschitz == b.lipschitz && a.blocks == b.blocks &&
         a.schedule == b.schedule && a.min_value == b.min_value;
}

void check_replicates(std::span<const IterateTrace> reps) {
  if (reps.size() < 2) throw InvalidParameter("stochastic series needs at least 2 replicates");
  const IterateTrace& first = reps.front();
  if (first.meta.scheme != UpdateRule::stochastic)
    throw InvalidParameter("replicates must come from the stochastic scheme");
  for (const IterateTrace& t : reps) {
    if (!same_config(first.meta, t.meta))
      throw InvalidParameter("replicates have mismatched configurations");
    if (t.records.size() != first.records.size())
      throw InvalidParameter("replicates have different lengths");
    for (std::size_t j = 0; j < t.records.size(); ++j)
      if (t.records[j].k != first.records[j].k)
        throw InvalidParameter("replicates were recorded at different iterations");
  }
}

}  // namespace

double delta_full(double beta, double gamma, double lipschitz) {
  checked_positive(gamma, "gamma");
  checked_positive(lipschitz, "L");
  const double d = beta / (2.0 * gamma) + 0.5 * ((1.0 - beta) / gamma - lipschitz / 2.0);
  if (!(d > 0.0)) throw InvalidParameter("delta <= 0: step size too large for the Lyapunov weight");
  return d;
}

double xi_from_residual(double residual, double delta, double step_norm_sq) {
  const double xi = residual + delta * step_norm_sq;
  if (xi < -kXiNegativeTolerance)
    throw InvalidParameter("xi = " + csv::format(xi) + " < 0: min f is inconsistent with f");
  return xi;
}

double xi_full(double f, double min_f, double delta, double step_norm_sq) {
  return xi_from_residual(f - min_f, delta, step_norm_sq);
}

double epsilon_full(double delta, double gamma, double c, double lipschitz) {
  check_c(c);
  checked_positive(gamma, "gamma");
  checked_positive(lipschitz, "L");
  return 4.0 * c * delta * delta / ((1.0 - c) * lipschitz) +
         4.0 * c / ((1.0 - c) * lipschitz * gamma * gamma);
}

double delta_stochastic(double beta, double gamma, double lipschitz, std::size_t blocks) {
  checked_positive(gamma, "gamma");
  checked_positive(lipschitz, "L");
  if (blocks == 0) throw InvalidParameter("block count must be positive");
  const double root_m = std::sqrt(static_cast<double>(blocks));
  const double d =
      beta / (2.0 * root_m * gamma) + 0.5 * ((1.0 - beta / root_m) / gamma - lipschitz / 2.0);
  if (!(d > 0.0)) throw InvalidParameter("delta <= 0: step size too large for the Lyapunov weight");
  return d;
}

double epsilon_stochastic(double delta_bar, double gamma, double c, double lipschitz,
                          std::size_t blocks) {
  check_c(c);
  checked_positive(gamma, "gamma");
  checked_positive(lipschitz, "L");
  const double m = static_cast<double>(blocks);
  return 4.0 * c * delta_bar * delta_bar / ((1.0 - c) * lipschitz) +
         8.0 * c * m / ((1.0 - c) * lipschitz * gamma * gamma);
}

double epsilon_cyclic(std::span<const double> delta_next, std::span<const double> gamma, double c,
                      std::span<const double> block_lipschitz) {
  check_c(c);
  const std::size_t m = block_lipschitz.size();
  if (m == 0 || delta_next.size() != m || gamma.size() != m)
    throw InvalidParameter("epsilon_cyclic: per-block inputs must have equal, non-zero length");
  double l_sum = 0.0;
  double l_min = std::numeric_limits<double>::infinity();
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    checked_positive(block_lipschitz[i], "L_i");
    checked_positive(gamma[i], "gamma_i");
    l_sum += block_lipschitz[i];
    l_min = std::min(l_min, block_lipschitz[i]);
    acc += delta_next[i] * delta_next[i] + 1.0 / (gamma[i] * gamma[i]);
  }
  const double denom = (1.0 - c) * l_min;
  return std::max(4.0 * c * acc / denom, 4.0 * c * static_cast<double>(m) * l_sum / denom);
}

// ---------------------------------------------------------------------------

LyapunovSeries series_full(const IterateTrace& t) {
  if (t.meta.scheme != UpdateRule::full) throw InvalidParameter("series_full: not a full-scheme trace");
  LyapunovSeries s;
  s.scheme = UpdateRule::full;
  s.scale = scale_of(t);
  const bool dist = std::all_of(t.records.begin(), t.records.end(),
                                [](const TraceRecord& r) { return r.dist_sq.has_value(); });
  for (const TraceRecord& r : t.records) {
    require_single(r);
    const double res = require_residual(r);
    const double d = delta_full(r.beta[0], r.gamma[0], t.meta.lipschitz);
    s.k.push_back(r.k);
    s.residual.push_back(res);
    s.delta.push_back({d});
    s.xi.push_back(xi_from_residual(res, d, r.step_norm_sq[0]));
    s.epsilon.push_back(epsilon_full(d, r.gamma[0], t.meta.c, t.meta.lipschitz));
    s.step_norm_sq.push_back(r.step_norm_sq[0]);
    s.grad_norm.push_back(r.grad_norm);
    if (dist) s.dist_sq.push_back(*r.dist_sq);
  }
  return s;
}

LyapunovSeries series_cyclic(const IterateTrace& t) {
  if (t.meta.scheme != UpdateRule::cyclic)
    throw InvalidParameter("series_cyclic: not a cyclic-scheme trace");
  const std::size_t m = t.meta.blocks;
  const std::vector<double>& li = t.meta.block_lipschitz;
  if (li.size() != m) throw InvalidParameter("series_cyclic: need one L_i per block");
  std::vector<MomentumSchedule> schedules = t.meta.block_schedules;
  if (schedules.empty()) schedules.assign(m, t.meta.schedule);
  if (schedules.size() != m) throw InvalidParameter("series_cyclic: need one schedule per block");

  LyapunovSeries s;
  s.scheme = UpdateRule::cyclic;
  s.scale = scale_of(t);
  const bool dist = std::all_of(t.records.begin(), t.records.end(),
                                [](const TraceRecord& r) { return r.dist_sq.has_value(); });
  std::vector<double> delta_next(m);
  for (const TraceRecord& r : t.records) {
    require_per_block(r, m);
    const double res = require_residual(r);
    std::vector<double> d(m);
    double weighted = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      d[i] = delta_full(r.beta[i], r.gamma[i], li[i]);
      weighted += d[i] * r.step_norm_sq[i];
      const double b1 = beta_at(schedules[i], r.k + 1);
      delta_next[i] = delta_full(b1, step_size_full(b1, t.meta.c, li[i]), li[i]);
    }
    s.k.push_back(r.k);
    s.residual.push_back(res);
    s.xi.push_back(xi_from_residual(res, 1.0, weighted));
    s.epsilon.push_back(epsilon_cyclic(delta_next, r.gamma, t.meta.c, li));
    s.delta.push_back(std::move(d));
    s.step_norm_sq.push_back(r.total_step_norm_sq());
    s.grad_norm.push_back(r.grad_norm);
    if (dist) s.dist_sq.push_back(*r.dist_sq);
  }
  return s;
}

LyapunovSeries series_stochastic(std::span<const IterateTrace> reps) {
  check_replicates(reps);
  const TraceMeta& meta = reps.front().meta;
  const std::size_t n_rec = reps.front().records.size();
  const std::size_t n_rep = reps.size();

  LyapunovSeries s;
  s.scheme = UpdateRule::stochastic;
  s.scale = scale_of(reps.front());
  s.xi_replicates.assign(n_rep, std::vector<double>(n_rec));

  bool dist = true;
  for (const IterateTrace& t : reps)
    for (const TraceRecord& r : t.records) dist = dist && r.dist_sq.has_value();

  std::vector<double> xi(n_rep), res(n_rep), step(n_rep), grad(n_rep), dsq(n_rep);
  for (std::size_t j = 0; j < n_rec; ++j) {
    const TraceRecord& r0 = reps.front().records[j];
    require_single(r0);
    const double d = delta_stochastic(r0.beta[0], r0.gamma[0], meta.lipschitz, meta.blocks);
    for (std::size_t q = 0; q < n_rep; ++q) {
      const TraceRecord& r = reps[q].records[j];
      require_single(r);
      res[q] = require_residual(r);
      step[q] = r.step_norm_sq[0];
      grad[q] = r.grad_norm;
      xi[q] = xi_from_residual(res[q], d, step[q]);
      if (dist) dsq[q] = *r.dist_sq;
      s.xi_replicates[q][j] = xi[q];
    }
    const double xi_mean = mean_of(xi);
    s.k.push_back(r0.k);
    s.xi.push_back(xi_mean);
    s.xi_stderr.push_back(stderr_of(xi, xi_mean));
    s.residual.push_back(mean_of(res));
    s.step_norm_sq.push_back(mean_of(step));
    s.grad_norm.push_back(mean_of(grad));
    s.delta.push_back({d});
    s.epsilon.push_back(epsilon_stochastic(d, r0.gamma[0], meta.c, meta.lipschitz, meta.blocks));
    if (dist) s.dist_sq.push_back(mean_of(dsq));
  }
  return s;
}

LyapunovSeries series(const IterateTrace& t) {
  switch (t.meta.scheme) {
    case UpdateRule::full: return series_full(t);
    case UpdateRule::cyclic: return series_cyclic(t);
    case UpdateRule::stochastic: break;
  }
  throw InvalidParameter("stochastic traces need series_stochastic over replicates");
}

// ---------------------------------------------------------------------------

double DescentReport::min_slack() const {
  return slack.empty() ? 0.0 : *std::min_element(slack.begin(), slack.end());
}

double ErrorBoundReport::min_slack() const {
  return slack.empty() ? 0.0 : *std::min_element(slack.begin(), slack.end());
}

DescentReport check_descent(const IterateTrace& t) {
  if (t.meta.scheme == UpdateRule::stochastic)
    throw InvalidParameter("stochastic descent is checked in expectation over replicates");
  require_consecutive(t);
  check_c(t.meta.c);
  double factor_l = t.meta.lipschitz;
  if (t.meta.scheme == UpdateRule::cyclic) {
    if (t.meta.block_lipschitz.empty()) throw InvalidParameter("cyclic trace lacks block L_i");
    factor_l = *std::min_element(t.meta.block_lipschitz.begin(), t.meta.block_lipschitz.end());
  }
  const double factor = (1.0 - t.meta.c) * factor_l / (2.0 * t.meta.c);

  DescentReport rep;
  rep.tolerance = kDescentTolerance * scale_of(t);
  for (std::size_t j = 0; j + 1 < t.records.size(); ++j) {
    const TraceRecord& a = t.records[j];
    const TraceRecord& b = t.records[j + 1];
    const double lhs = (a.f + weighted_step(a, 1.0)) - (b.f + weighted_step(b, 1.0));
    const double rhs = factor * b.total_step_norm_sq();
    rep.k.push_back(a.k);
    rep.lhs.push_back(lhs);
    rep.rhs.push_back(rhs);
    rep.slack.push_back(lhs - rhs);
    if (lhs - rhs < -rep.tolerance) rep.violations.push_back(a.k);
  }
  return rep;
}

DescentReport check_descent(std::span<const IterateTrace> reps) {
  check_replicates(reps);
  for (const IterateTrace& t : reps) require_consecutive(t);
  const TraceMeta& meta = reps.front().meta;
  check_c(meta.c);
  const double factor = (1.0 - meta.c) * meta.lipschitz / (2.0 * meta.c);
  const double root_m = std::sqrt(static_cast<double>(meta.blocks));
  const std::size_t n_rep = reps.size();

  DescentReport rep;
  rep.tolerance = kDescentTolerance * scale_of(reps.front());
  std::vector<double> lhs(n_rep), rhs(n_rep), slack(n_rep);
  for (std::size_t j = 0; j + 1 < reps.front().records.size(); ++j) {
    for (std::size_t q = 0; q < n_rep; ++q) {
      const TraceRecord& a = reps[q].records[j];
      const TraceRecord& b = reps[q].records[j + 1];
      lhs[q] = (a.f + weighted_step(a, root_m)) - (b.f + weighted_step(b, root_m));
      rhs[q] = factor * b.total_step_norm_sq();
      slack[q] = lhs[q] - rhs[q];
    }
    const double mean_slack = mean_of(slack);
    const double se = stderr_of(slack, mean_slack);
    rep.k.push_back(reps.front().records[j].k);
    rep.lhs.push_back(mean_of(lhs));
    rep.rhs.push_back(mean_of(rhs));
    rep.slack.push_back(mean_slack);
    rep.stderr_.push_back(se);
    if (mean_slack + kStandardErrors * se < -rep.tolerance) rep.violations.push_back(rep.k.back());
  }
  return rep;
}

ErrorBoundReport check_error_bound(const LyapunovSeries& s) {
  ErrorBoundReport rep;
  if (!s.has_distance()) {
    rep.skipped = true;
    rep.notice = "error bound skipped: problem has no argmin projection";
    return rep;
  }
  // Absolute uncertainty of a computed xi difference.
  const double xi_tol = 16.0 * std::numeric_limits<double>::epsilon() * s.scale;
  const double dist_weight = s.scheme == UpdateRule::stochastic ? 1.0 : 2.0;
  for (std::size_t j = 0; j + 1 < s.size(); ++j) {
    if (s.k[j + 1] != s.k[j] + 1)
      throw InvalidParameter("error-bound check needs one record per iteration");
    const double d = dist_weight * s.dist_sq[j] + s.step_norm_sq[j];
    const double lhs = s.xi[j] * s.xi[j];
    const double rhs = s.epsilon[j] * (s.xi[j] - s.xi[j + 1]) * d;
    const double tol = s.epsilon[j] * d * xi_tol;
    rep.k.push_back(s.k[j]);
    rep.lhs.push_back(lhs);
    rep.rhs.push_back(rhs);
    rep.slack.push_back(rhs - lhs);
    if (lhs > 0.0) rep.max_ratio = std::max(rep.max_ratio, lhs / (rhs + tol));
    if (lhs > rhs + tol) rep.violations.push_back(s.k[j]);
  }
  return rep;
}

// ---------------------------------------------------------------------------

double xi_floor(double scale) { return 10.0 * std::numeric_limits<double>::epsilon() * scale; }

double fit_geometric_rate(std::span<const std::size_t> k, std::span<const double> values) {
  if (k.size() != values.size() || k.size() < 2)
    throw InvalidParameter("geometric fit needs at least two points");
  double mk = 0.0, mv = 0.0;
  for (std::size_t j = 0; j < k.size(); ++j) {
    if (!(values[j] > 0.0)) throw InvalidParameter("geometric fit needs positive values");
    mk += static_cast<double>(k[j]);
    mv += std::log(values[j]);
  }
  mk /= static_cast<double>(k.size());
  mv /= static_cast<double>(k.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t j = 0; j < k.size(); ++j) {
    const double dx = static_cast<double>(k[j]) - mk;
    sxy += dx * (std::log(values[j]) - mv);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw InvalidParameter("geometric fit needs distinct k");
  return std::exp(sxy / sxx);
}

RateReport rate_report(const TraceMeta& meta, const LyapunovSeries& s, std::optional<double> nu) {
  if (s.size() < kMinRatePoints)
    throw InvalidParameter("rate report needs at least " + std::to_string(kMinRatePoints) +
                           " records");
  RateReport rep;
  rep.sup_epsilon = *std::max_element(s.epsilon.begin(), s.epsilon.end());

  for (std::size_t j = 0; j < s.size(); ++j)
    if (s.k[j] >= 1)
      rep.sublinear_constant =
          std::max(rep.sublinear_constant, static_cast<double>(s.k[j]) * s.residual[j]);

  if (s.has_distance()) {
    rep.r_emp = *std::max_element(s.dist_sq.begin(), s.dist_sq.end());
    rep.sublinear_bound = 4.0 * *rep.r_emp * rep.sup_epsilon;
    rep.sublinear_ok = true;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (s.k[j] == 0) continue;
      const double bound = *rep.sublinear_bound / static_cast<double>(s.k[j]);
      if (s.residual[j] > bound * (1.0 + kSublinearRelTolerance)) {
        rep.sublinear_ok = false;
        rep.sublinear_first_violation = s.k[j];
        break;
      }
    }
  }

  if (!nu) nu = meta.rsc_constant;
  if (!nu) return rep;
  checked_positive(*nu, "nu");

  double ell = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    const double min_delta = *std::min_element(s.delta[j].begin(), s.delta[j].end());
    double v = 0.0;
    switch (s.scheme) {
      case UpdateRule::full: v = s.epsilon[j] * (1.0 / min_delta + 2.0 / *nu); break;
      case UpdateRule::cyclic: v = s.epsilon[j] + 2.0 / *nu + 1.0 / min_delta; break;
      case UpdateRule::stochastic: v = s.epsilon[j] + 1.0 / *nu + 1.0 / min_delta; break;
    }
    ell = std::max(ell, v);
  }
  rep.ell = ell;
  rep.omega = ell / (1.0 + ell);

  const double floor = xi_floor(s.scale);
  std::size_t prefix = 0;
  while (prefix < s.size() && s.xi[prefix] > floor) ++prefix;
  rep.points_above_floor = prefix;

  bool ok = true;
  double max_ratio = 0.0;
  for (std::size_t j = 0; j + 1 < s.size(); ++j) {
    if (!(s.xi[j] > floor)) continue;
    const double steps = static_cast<double>(s.k[j + 1] - s.k[j]);
    const double factor = std::pow(*rep.omega, steps);
    max_ratio = std::max(max_ratio, std::pow(s.xi[j + 1] / s.xi[j], 1.0 / steps));
    bool pass = true;
    if (s.scheme == UpdateRule::stochastic && !s.xi_replicates.empty()) {
      std::vector<double> diff(s.xi_replicates.size());
      for (std::size_t q = 0; q < diff.size(); ++q)
        diff[q] = s.xi_replicates[q][j + 1] - factor * s.xi_replicates[q][j];
      const double md = mean_of(diff);
      pass = md <= kStandardErrors * stderr_of(diff, md);
    } else {
      pass = s.xi[j + 1] <= factor * s.xi[j];
    }
    if (!pass && ok) {
      ok = false;
      rep.linear_first_violation = s.k[j];
    }
  }
  rep.linear_ok = ok;
  rep.max_ratio = max_ratio;

  if (prefix >= 2) {
    rep.rho = fit_geometric_rate(std::span(s.k).first(prefix), std::span(s.xi).first(prefix));
    rep.rho_ok = *rep.rho <= *rep.omega;
  }
  return rep;
}

RateReport rate_report(const IterateTrace& trace, const LyapunovSeries& s) {
  return rate_report(trace.meta, s);
}

GradientRateReport check_gradient_rate(const LyapunovSeries& s, std::size_t burn_in) {
  GradientRateReport rep;
  double running_min = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < s.size(); ++j) {
    running_min = std::min(running_min, s.grad_norm[j]);
    if (s.k[j] == 0) continue;
    rep.k.push_back(s.k[j]);
    rep.scaled_min.push_back(std::sqrt(static_cast<double>(s.k[j])) * running_min);
  }
  for (std::size_t j = 1; j < rep.k.size(); ++j) {
    if (rep.k[j - 1] < burn_in) continue;
    if (rep.scaled_min[j] > rep.scaled_min[j - 1]) {
      rep.non_increasing = false;
      rep.first_increase = rep.k[j];
      break;
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------

void write_diagnostics_csv(const LyapunovSeries& s, const DescentReport* descent, std::ostream& out) {
  out << "k,xi,delta,epsilon,descent_lhs,descent_rhs,slack\n";
  std::size_t d = 0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    out << s.k[j] << ',' << csv::format(s.xi[j]) << ',' << csv::format_list(s.delta[j]) << ','
        << csv::format(s.epsilon[j]) << ',';
    while (descent && d < descent->k.size() && descent->k[d] < s.k[j]) ++d;
    if (descent && d < descent->k.size() && descent->k[d] == s.k[j])
      out << csv::format(descent->lhs[d]) << ',' << csv::format(descent->rhs[d]) << ','
          << csv::format(descent->slack[d]);
    else
      out << ",,";
    out << '\n';
  }
}

std::string format_verdict(const Verdict& v) {
  std::string line = v.name + ": " + (v.pass ? "PASS" : "FAIL") +
                     " (empirical=" + csv::format(v.empirical) + ", bound=" + csv::format(v.bound) +
                     ")";
  if (!v.note.empty()) line += " " + v.note;
  return line;
}

}  // namespace hb
