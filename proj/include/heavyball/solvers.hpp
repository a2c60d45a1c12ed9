#pragma once

#include "heavyball/objective.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hb {

/// Inertial parameter sequence beta_k.
struct MomentumSchedule {
  enum class Kind { constant, power_decay };

  Kind kind = Kind::constant;
  double beta0 = 0.0;
  double theta = 2.0;  // power_decay only, > 1

  static MomentumSchedule constant(double beta) { return {Kind::constant, beta, 2.0}; }
  static MomentumSchedule power_decay(double beta0, double theta) {
    return {Kind::power_decay, beta0, theta};
  }

  /// "constant:0.3" or "power:0.5:2".
  std::string describe() const;
  static MomentumSchedule parse(std::string_view s);

  bool operator==(const MomentumSchedule&) const = default;
};

/// beta_k: constant -> beta0; power_decay -> beta0 at k = 0 and
/// min(beta0, k^-theta) for k >= 1. Non-increasing in k.
double beta_at(const MomentumSchedule& s, std::size_t k);

/// Throws InvalidParameter unless 0 <= beta0 < upper (and theta > 1 for power_decay).
void validate_schedule(const MomentumSchedule& s, double upper);

enum class UpdateRule { full, cyclic, stochastic };

std::string_view to_string(UpdateRule r);

struct SolverConfig {
  MomentumSchedule schedule;
  /// Cyclic scheme only: one schedule per block. Empty means `schedule` for
  /// every block.
  std::vector<MomentumSchedule> block_schedules;
  double c = 0.5;
  /// Cyclic scheme only: use the global L for every block instead of the
  /// tight L_i (L bounds every block constant). With c = 1/(2(1-beta)) this
  /// gives gamma = 1/L on every block.
  bool global_block_lipschitz = false;
  std::size_t max_iters = 1000;
  std::uint64_t seed = 0;
  UpdateRule update_rule = UpdateRule::full;
  std::size_t record_every = 1;
  bool keep_iterates = false;
  /// Record ||x^k - proj(x^k)||^2 when the problem supports projection.
  bool track_argmin_distance = true;
  /// Start point; x^{-1} = x^0. Zero when empty.
  std::optional<Vector> x0;
};

/// Everything the diagnostics need to re-derive step sizes and Lyapunov
/// weights from a trace without the problem object.
struct TraceMeta {
  UpdateRule scheme = UpdateRule::full;
  double c = 0.5;
  double lipschitz = 0.0;
  std::vector<double> block_lipschitz;  // cyclic: per-block L_i
  std::size_t blocks = 1;
  MomentumSchedule schedule;
  std::vector<MomentumSchedule> block_schedules;  // cyclic, resolved per block
  std::optional<double> min_value;
  std::optional<double> rsc_constant;
  std::uint64_t seed = 0;
};

struct TraceRecord {
  std::size_t k = 0;
  double f = 0.0;
  std::optional<double> residual;
  /// ||x^k - x^{k-1}||^2; cyclic traces keep one entry per block, others one entry.
  std::vector<double> step_norm_sq;
  double grad_norm = 0.0;
  /// beta_k and gamma_k of the step k -> k+1 (per block for cyclic traces).
  std::vector<double> beta;
  std::vector<double> gamma;
  /// Stochastic: i_k, the block moved in step k -> k+1.
  std::optional<std::size_t> block;
  /// ||x^k - proj_{argmin f}(x^k)||^2 when tracked. Not exported to CSV.
  std::optional<double> dist_sq;

  double total_step_norm_sq() const;
};

struct IterateTrace {
  TraceMeta meta;
  std::vector<TraceRecord> records;
  /// x^k for each record when SolverConfig::keep_iterates is set.
  std::vector<Vector> iterates;
};

double step_size_full(double beta, double c, double lipschitz);
double step_size_stochastic(double beta, double c, double lipschitz, std::size_t blocks);

/// x^{k+1} = x^k - gamma_k grad + beta_k (x^k - x^{k-1}).
Vector heavy_ball_step(const Vector& x, const Vector& x_prev, const Vector& grad, double gamma,
                       double beta);

IterateTrace run_heavy_ball(const Problem& p, const SolverConfig& cfg);
/// One record per sweep over the blocks (Gauss-Seidel order 1..m).
IterateTrace run_cyclic(const Problem& p, const SolverConfig& cfg);
/// One record per iteration; i_k uniform on the blocks from Rng(cfg.seed).
IterateTrace run_stochastic(const Problem& p, const SolverConfig& cfg);
/// Dispatch on cfg.update_rule.
IterateTrace run(const Problem& p, const SolverConfig& cfg);

/// Replicate r uses seed cfg.seed + r. Runs on up to `threads` workers; the
/// result does not depend on the thread count.
std::vector<IterateTrace> run_stochastic_replicates(const Problem& p, const SolverConfig& cfg,
                                                    std::size_t replicates,
                                                    std::size_t threads = 0);

/// Relative divergence threshold on f(x^k) - f(x^0).
inline constexpr double kDivergenceFactor = 1e6;

}  // namespace hb
