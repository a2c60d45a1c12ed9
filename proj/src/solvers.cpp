#include "heavyball/solvers.hpp"

#include "heavyball/csv.hpp"
#include "heavyball/errors.hpp"
#include "heavyball/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

namespace hb {

std::string MomentumSchedule::describe() const {
  if (kind == Kind::constant) return "constant:" + csv::format(beta0);
  return "power:" + csv::format(beta0) + ":" + csv::format(theta);
}

MomentumSchedule MomentumSchedule::parse(std::string_view s) {
  const auto parts = csv::split(s, ':');
  try {
    if (parts.size() == 1) return constant(csv::parse_double(parts[0]));
    if (parts.size() == 2 && parts[0] == "constant") return constant(csv::parse_double(parts[1]));
    if (parts.size() == 3 && parts[0] == "power")
      return power_decay(csv::parse_double(parts[1]), csv::parse_double(parts[2]));
  } catch (const ParseError&) {
  }
  throw InvalidParameter("cannot parse momentum schedule '" + std::string(s) +
                         "' (expected <beta>, constant:<beta> or power:<beta0>:<theta>)");
}

double beta_at(const MomentumSchedule& s, std::size_t k) {
  if (s.kind == MomentumSchedule::Kind::constant || k == 0) return s.beta0;
  return std::min(s.beta0, std::pow(static_cast<double>(k), -s.theta));
}

void validate_schedule(const MomentumSchedule& s, double upper) {
  if (!(s.beta0 >= 0.0) || !(s.beta0 < upper))
    throw InvalidParameter("momentum: beta0 = " + csv::format(s.beta0) + " outside [0, " +
                           csv::format(upper) + ")");
  if (s.kind == MomentumSchedule::Kind::power_decay && !(s.theta > 1.0))
    throw InvalidParameter("momentum: power decay requires theta > 1");
}

std::string_view to_string(UpdateRule r) {
  switch (r) {
    case UpdateRule::full: return "full";
    case UpdateRule::cyclic: return "cyclic";
    case UpdateRule::stochastic: return "stochastic";
  }
  return "?";
}

double TraceRecord::total_step_norm_sq() const {
  return std::accumulate(step_norm_sq.begin(), step_norm_sq.end(), 0.0);
}

double step_size_full(double beta, double c, double lipschitz) {
  if (!(beta >= 0.0 && beta < 1.0)) throw InvalidParameter("step_size_full: beta must be in [0, 1)");
  if (!(c > 0.0 && c < 1.0)) throw InvalidParameter("step_size_full: c must be in (0, 1)");
  if (!(lipschitz > 0.0)) throw InvalidParameter("step_size_full: L must be positive");
  return 2.0 * (1.0 - beta) * c / lipschitz;
}

double step_size_stochastic(double beta, double c, double lipschitz, std::size_t blocks) {
  if (blocks == 0) throw InvalidParameter("step_size_stochastic: need at least one block");
  const double root_m = std::sqrt(static_cast<double>(blocks));
  if (!(beta >= 0.0 && beta < root_m))
    throw InvalidParameter("step_size_stochastic: beta must be in [0, sqrt(m))");
  if (!(c > 0.0 && c < 1.0)) throw InvalidParameter("step_size_stochastic: c must be in (0, 1)");
  if (!(lipschitz > 0.0)) throw InvalidParameter("step_size_stochastic: L must be positive");
  return 2.0 * (1.0 - beta / root_m) * c / lipschitz;
}

Vector heavy_ball_step(const Vector& x, const Vector& x_prev, const Vector& grad, double gamma,
                       double beta) {
  if (x.size() != x_prev.size() || x.size() != grad.size())
    throw ContractViolation("heavy_ball_step: dimension mismatch");
  return x - gamma * grad + beta * (x - x_prev);
}

namespace {

void validate_common(const Problem& p, const SolverConfig& cfg) {
  if (!(cfg.c > 0.0 && cfg.c < 1.0)) throw InvalidParameter("solver: c must be in (0, 1)");
  if (cfg.max_iters == 0) throw InvalidParameter("solver: max_iters must be positive");
  if (cfg.record_every == 0) throw InvalidParameter("solver: record_every must be positive");
  if (cfg.x0 && cfg.x0->size() != p.dimension())
    throw ContractViolation("solver: x0 has wrong dimension");
  if (cfg.x0 && !cfg.x0->allFinite()) throw ContractViolation("solver: x0 is not finite");
}

TraceMeta make_meta(const Problem& p, const SolverConfig& cfg, UpdateRule rule) {
  TraceMeta meta;
  meta.scheme = rule;
  meta.c = cfg.c;
  meta.lipschitz = p.lipschitz();
  meta.block_lipschitz = p.block_lipschitz();
  if (cfg.global_block_lipschitz)
    meta.block_lipschitz.assign(meta.block_lipschitz.size(), p.lipschitz());
  meta.blocks = p.blocks().count();
  meta.schedule = cfg.schedule;
  meta.min_value = p.min_value();
  meta.rsc_constant = p.rsc_constant();
  meta.seed = cfg.seed;
  if (rule == UpdateRule::cyclic) {
    meta.block_schedules = cfg.block_schedules.empty()
                               ? std::vector<MomentumSchedule>(meta.blocks, cfg.schedule)
                               : cfg.block_schedules;
  }
  return meta;
}

/// Shared bookkeeping: divergence guard, record cadence, optional columns.
class Recorder {
 public:
  Recorder(const Problem& p, const SolverConfig& cfg, IterateTrace& trace)
      : p_(p), cfg_(cfg), trace_(trace) {
    const auto caps = p.capabilities();
    residual_ = caps.has_min_value;
    distance_ = cfg.track_argmin_distance && caps.has_argmin_projection;
    trace_.records.reserve(cfg.max_iters / cfg.record_every + 2);
  }

  /// Evaluates f(x^k), applies the divergence guard.
  double value(std::size_t k, const Vector& x) {
    const double f = p_.value(x);
    if (k == 0) f0_ = f;
    if (!std::isfinite(f) || f - f0_ > kDivergenceFactor * (1.0 + std::abs(f0_)))
      throw DivergenceError("solver diverged at k = " + std::to_string(k) +
                            " (f = " + csv::format(f) + ")");
    return f;
  }

  bool wants(std::size_t k) const { return k % cfg_.record_every == 0 || k == cfg_.max_iters; }

  void record(std::size_t k, double f, const Vector& x, const Vector& grad,
              std::vector<double> step_norm_sq, std::vector<double> beta,
              std::vector<double> gamma, std::optional<std::size_t> block) {
    TraceRecord r;
    r.k = k;
    r.f = f;
    if (residual_) r.residual = p_.suboptimality(x);
    r.step_norm_sq = std::move(step_norm_sq);
    r.grad_norm = grad.norm();
    r.beta = std::move(beta);
    r.gamma = std::move(gamma);
    r.block = block;
    if (distance_) r.dist_sq = (x - p_.project_to_argmin(x)).squaredNorm();
    trace_.records.push_back(std::move(r));
    if (cfg_.keep_iterates) trace_.iterates.push_back(x);
  }

 private:
  const Problem& p_;
  const SolverConfig& cfg_;
  IterateTrace& trace_;
  bool residual_ = false;
  bool distance_ = false;
  double f0_ = 0.0;
};

Vector start_point(const Problem& p, const SolverConfig& cfg) {
  return cfg.x0 ? *cfg.x0 : Vector::Zero(p.dimension());
}

}  // namespace

IterateTrace run_heavy_ball(const Problem& p, const SolverConfig& cfg) {
  validate_common(p, cfg);
  validate_schedule(cfg.schedule, 1.0);

  IterateTrace trace;
  trace.meta = make_meta(p, cfg, UpdateRule::full);
  Recorder rec(p, cfg, trace);

  Vector x = start_point(p, cfg);
  Vector x_prev = x;
  for (std::size_t k = 0;; ++k) {
    const double f = rec.value(k, x);
    const Vector g = p.gradient(x);
    const double beta = beta_at(cfg.schedule, k);
    const double gamma = step_size_full(beta, cfg.c, p.lipschitz());
    if (rec.wants(k))
      rec.record(k, f, x, g, {(x - x_prev).squaredNorm()}, {beta}, {gamma}, std::nullopt);
    if (k == cfg.max_iters) break;
    Vector next = heavy_ball_step(x, x_prev, g, gamma, beta);
    x_prev = std::move(x);
    x = std::move(next);
  }
  return trace;
}

IterateTrace run_cyclic(const Problem& p, const SolverConfig& cfg) {
  validate_common(p, cfg);
  const auto& blocks = p.blocks();
  const std::size_t m = blocks.count();
  if (!cfg.block_schedules.empty() && cfg.block_schedules.size() != m)
    throw InvalidParameter("run_cyclic: need one schedule per block");

  IterateTrace trace;
  trace.meta = make_meta(p, cfg, UpdateRule::cyclic);
  for (const auto& s : trace.meta.block_schedules) validate_schedule(s, 1.0);
  const auto& schedules = trace.meta.block_schedules;
  const auto& block_l = trace.meta.block_lipschitz;
  Recorder rec(p, cfg, trace);

  Vector x = start_point(p, cfg);
  Vector x_prev = x;
  std::vector<double> betas(m), gammas(m), steps(m);
  for (std::size_t k = 0;; ++k) {
    const double f = rec.value(k, x);
    for (std::size_t i = 0; i < m; ++i) {
      betas[i] = beta_at(schedules[i], k);
      gammas[i] = step_size_full(betas[i], cfg.c, block_l[i]);
    }
    if (rec.wants(k)) {
      for (std::size_t i = 0; i < m; ++i) {
        const auto& r = blocks[i];
        steps[i] = (x.segment(r.offset, r.size) - x_prev.segment(r.offset, r.size)).squaredNorm();
      }
      rec.record(k, f, x, p.gradient(x), steps, betas, gammas, std::nullopt);
    }
    if (k == cfg.max_iters) break;

    // Gauss-Seidel sweep: block i sees blocks < i already at k+1.
    Vector next = x;
    for (std::size_t i = 0; i < m; ++i) {
      const auto& r = blocks[i];
      const Vector gi = p.block_gradient(next, i);
      next.segment(r.offset, r.size) =
          x.segment(r.offset, r.size) - gammas[i] * gi +
          betas[i] * (x.segment(r.offset, r.size) - x_prev.segment(r.offset, r.size));
    }
    x_prev = std::move(x);
    x = std::move(next);
  }
  return trace;
}

IterateTrace run_stochastic(const Problem& p, const SolverConfig& cfg) {
  validate_common(p, cfg);
  const auto& blocks = p.blocks();
  const std::size_t m = blocks.count();
  validate_schedule(cfg.schedule, std::sqrt(static_cast<double>(m)));

  IterateTrace trace;
  trace.meta = make_meta(p, cfg, UpdateRule::stochastic);
  Recorder rec(p, cfg, trace);
  Rng rng(cfg.seed);

  Vector x = start_point(p, cfg);
  Vector x_prev = x;
  for (std::size_t k = 0;; ++k) {
    const double f = rec.value(k, x);
    const double beta = beta_at(cfg.schedule, k);
    const double gamma = step_size_stochastic(beta, cfg.c, p.lipschitz(), m);
    std::optional<std::size_t> block;
    if (k < cfg.max_iters) block = static_cast<std::size_t>(rng.index(m));
    if (rec.wants(k))
      rec.record(k, f, x, p.gradient(x), {(x - x_prev).squaredNorm()}, {beta}, {gamma}, block);
    if (k == cfg.max_iters) break;

    const auto& r = blocks[*block];
    const Vector gi = p.block_gradient(x, *block);
    Vector next = x;
    next.segment(r.offset, r.size) =
        x.segment(r.offset, r.size) - gamma * gi +
        beta * (x.segment(r.offset, r.size) - x_prev.segment(r.offset, r.size));
    x_prev = std::move(x);
    x = std::move(next);
  }
  return trace;
}

IterateTrace run(const Problem& p, const SolverConfig& cfg) {
  switch (cfg.update_rule) {
    case UpdateRule::full: return run_heavy_ball(p, cfg);
    case UpdateRule::cyclic: return run_cyclic(p, cfg);
    case UpdateRule::stochastic: return run_stochastic(p, cfg);
  }
  throw InvalidParameter("unknown update rule");
}

std::vector<IterateTrace> run_stochastic_replicates(const Problem& p, const SolverConfig& cfg,
                                                    std::size_t replicates, std::size_t threads) {
  if (replicates == 0) throw InvalidParameter("run_stochastic_replicates: need >= 1 replicate");
  std::vector<IterateTrace> out(replicates);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, replicates);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t r = next++; r < replicates; r = next++) {
      try {
        SolverConfig local = cfg;
        local.seed = cfg.seed + r;
        out[r] = run_stochastic(p, local);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace hb
