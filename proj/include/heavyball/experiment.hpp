#pragma once

#include "heavyball/decentralized.hpp"
#include "heavyball/lyapunov.hpp"
#include "heavyball/problems.hpp"
#include "heavyball/solvers.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hb {

enum class ProblemKind { linreg, logreg };
enum class SolverKind { hb, cyclic, stochastic, decentralized };
enum class StartPoint { zero, gaussian };

std::string_view to_string(ProblemKind k);
std::string_view to_string(SolverKind k);
std::string_view to_string(StartPoint k);

/// One experiment (or a beta sweep when `betas` has several entries).
struct ExperimentConfig {
  ProblemKind problem = ProblemKind::linreg;
  Distribution data = Distribution::gaussian;
  SolverKind solver = SolverKind::hb;
  Eigen::Index n = 100;  // features
  Eigen::Index m = 150;  // samples (per node for the decentralized solver)
  std::vector<double> betas{0.3};
  /// Power-decay schedule min(beta, k^-theta) when set; constant otherwise.
  std::optional<double> theta;
  /// Empty means the unit-step preset gamma_0 = 1/L (c = 1/(2(1-beta)), or
  /// 1/(2(1-beta/sqrt(blocks))) for the stochastic scheme).
  std::optional<double> c;
  std::size_t iters = 1000;
  std::uint64_t seed = 1;
  double lambda = 1e-3;
  std::size_t replicates = 200;
  /// Coordinate blocks; 0 picks 4 (cyclic), 10 (stochastic), 1 otherwise.
  std::size_t blocks = 0;
  std::optional<std::filesystem::path> network;
  /// Path-graph size when no network file is given.
  std::size_t nodes = 5;
  /// Decentralized step; empty means 0.9 * alpha_max(beta).
  std::optional<double> alpha;
  StartPoint x0 = StartPoint::zero;
  std::filesystem::path out = "hbx-out";
  bool svg = false;
  std::size_t threads = 1;
};

/// `key = value` with the long flag names as keys (`beta = 0,0.1`,
/// `c = unit`). Throws InvalidParameter naming the key on bad input.
void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value);
/// Flat file of `key = value` lines; `#` starts a comment.
void apply_config_file(ExperimentConfig& cfg, std::istream& in);
void apply_config_file(ExperimentConfig& cfg, const std::filesystem::path& path);
/// Resolved configuration in the same format; reloads to an equal config.
void write_config(const ExperimentConfig& cfg, std::ostream& out);
/// Cross-field checks. Throws InvalidParameter with the violated constraint.
void validate(const ExperimentConfig& cfg);

std::size_t effective_blocks(const ExperimentConfig& cfg);
MomentumSchedule schedule_for(const ExperimentConfig& cfg, double beta);
/// Resolves the unit-step preset into c (and gamma = 1/L on every cyclic block).
SolverConfig solver_config(const ExperimentConfig& cfg, double beta, const Problem& p);
std::unique_ptr<Problem> build_problem(const ExperimentConfig& cfg);
LocalProblems build_local_problems(const ExperimentConfig& cfg, std::size_t nodes);
Network build_network(const ExperimentConfig& cfg);
std::optional<Vector> start_point(const ExperimentConfig& cfg, Eigen::Index dimension);

inline constexpr std::size_t kGradientBurnIn = 50;
inline constexpr double kEquivalenceTolerance = 1e-14;

/// Verdict lines for a full or cyclic trace recorded at every iteration.
std::vector<Verdict> evaluate_trace(const IterateTrace& trace);
/// Verdict lines for stochastic replicates (expectation-form checks).
std::vector<Verdict> evaluate_replicates(std::span<const IterateTrace> replicates);
std::vector<Verdict> evaluate_decentralized(const DecentralizedTrace& trace);

struct CellResult {
  double beta = 0.0;
  std::vector<std::size_t> k;
  std::vector<double> residual;  // replicate mean for stochastic runs
  std::vector<Verdict> verdicts;
  std::optional<double> rho;
  std::optional<double> omega;

  double final_residual() const { return residual.empty() ? 0.0 : residual.back(); }
  bool all_pass() const;
};

struct ExperimentResult {
  std::vector<CellResult> cells;
  /// Final residual strictly decreasing in beta (sweeps of >= 2 betas).
  std::optional<bool> ordering;
  /// (max - min) / max of the final residuals across beta.
  std::optional<double> relative_spread;

  bool all_pass() const;
};

/// Runs every beta cell and writes the artifacts under cfg.out:
/// single beta -> files directly in cfg.out; sweep -> one `beta_<b>/`
/// directory per cell plus `sweep.csv` and a combined `summary.txt`.
ExperimentResult run_experiment(const ExperimentConfig& cfg);
ExperimentResult sweep_beta(const ExperimentConfig& cfg, std::span<const double> betas);

/// Ordering flag and spread as reported for sweeps.
std::optional<bool> strictly_decreasing_in_beta(std::span<const CellResult> cells);
std::optional<double> relative_spread(std::span<const CellResult> cells);

struct Curve {
  std::string label;
  std::vector<std::size_t> k;
  std::vector<double> y;
};

/// Self-contained SVG line chart with a log10 y axis. Non-positive values
/// are drawn at the smallest positive value present.
void write_residual_svg(std::span<const Curve> curves, std::ostream& out);

}  // namespace hb
