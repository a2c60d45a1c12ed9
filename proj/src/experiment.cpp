#include "heavyball/experiment.hpp"

#include "heavyball/csv.hpp"
#include "heavyball/errors.hpp"
#include "heavyball/rng.hpp"
#include "heavyball/trace_io.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <istream>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace hb {

namespace {

/// Stream for the gaussian start point, kept apart from the data stream.
constexpr std::uint64_t kStartPointSalt = 0x5851f42d4c957f2dULL;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad(std::string_view key, std::string_view value, std::string_view why) {
  throw InvalidParameter("--" + std::string(key) + " = '" + std::string(value) + "': " +
                         std::string(why));
}

std::uint64_t parse_uint(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty())
    bad(key, v, "expected a non-negative integer");
  return out;
}

double parse_real(std::string_view key, std::string_view v) {
  try {
    const double d = csv::parse_double(v);
    if (!std::isfinite(d)) bad(key, v, "expected a finite number");
    return d;
  } catch (const ParseError&) {
    bad(key, v, "expected a number");
  }
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad(key, v, "expected true or false");
}

std::string beta_dir(double beta) { return "beta_" + csv::format(beta); }

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open " + path.string() + " for writing");
  out << content;
}

Verdict descent_verdict(std::string name, const DescentReport& d) {
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < d.slack.size(); ++j) {
    const double se = d.stderr_.empty() ? 0.0 : kStandardErrors * d.stderr_[j];
    worst = std::max(worst, -(d.slack[j] + se));
  }
  if (d.slack.empty()) worst = 0.0;
  return {std::move(name), d.ok(), worst, d.tolerance, ""};
}

Verdict error_bound_verdict(std::string name, const ErrorBoundReport& e) {
  return {std::move(name), e.ok(), e.max_ratio, 1.0, ""};
}

void rate_verdicts(std::vector<Verdict>& out, const RateReport& r, const char* sublinear,
                   const char* linear) {
  if (r.sublinear_ok)
    out.push_back({sublinear, *r.sublinear_ok, r.sublinear_constant, *r.sublinear_bound, ""});
  if (r.linear_ok) {
    out.push_back({linear, *r.linear_ok, r.max_ratio.value_or(0.0), *r.omega, ""});
    if (r.rho_ok) out.push_back({std::string(linear) + "_RATE", *r.rho_ok, *r.rho, *r.omega, ""});
  }
}

void require_dir(const std::filesystem::path& p) {
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw ParseError("cannot create directory " + p.string() + ": " + ec.message());
}

std::string plot_csv(const std::vector<std::size_t>& k, const std::vector<double>& y) {
  std::ostringstream s;
  s << "k,residual\n";
  for (std::size_t j = 0; j < k.size(); ++j) s << k[j] << ',' << csv::format(y[j]) << '\n';
  return s.str();
}

std::string verdict_block(const std::vector<Verdict>& vs) {
  std::string s;
  for (const Verdict& v : vs) s += format_verdict(v) + '\n';
  return s;
}

CellResult run_cell(const ExperimentConfig& cfg, double beta, const std::filesystem::path& dir,
                    std::size_t replicate_threads) {
  require_dir(dir);
  CellResult cell;
  cell.beta = beta;
  std::ostringstream trace_s, diag_s;

  if (cfg.solver == SolverKind::decentralized) {
    const Network net = build_network(cfg);
    LocalProblems locals = build_local_problems(cfg, net.node_count());
    std::vector<double> li;
    for (const auto& p : locals) li.push_back(p->lipschitz());
    const ParamBounds bounds = param_bounds(net, li);
    const double alpha = cfg.alpha.value_or(0.9 * bounds.alpha_max(beta));
    validate_decentralized_params(bounds, alpha, beta);
    const PenaltyObjective F(net, std::move(locals), alpha);
    DecentralizedConfig dc;
    dc.alpha = alpha;
    dc.beta = beta;
    dc.iters = cfg.iters;
    if (auto x0 = start_point(cfg, F.dimension())) dc.x0 = F.unstack(*x0);
    const DecentralizedTrace t = run_decentralized(F, dc);

    write_decentralized_csv(t, trace_s);
    write_trace_csv(t.global, dir / "global.csv");
    write_distance_csv(t.global, dir / "distance.csv");
    const LyapunovSeries s = series_full(t.global);
    const DescentReport d = check_descent(t.global);
    write_diagnostics_csv(s, &d, diag_s);
    cell.verdicts = evaluate_decentralized(t);
    for (const auto& r : t.records) {
      cell.k.push_back(r.k);
      cell.residual.push_back(r.residual);
    }
  } else if (cfg.solver == SolverKind::stochastic) {
    const auto p = build_problem(cfg);
    const SolverConfig sc = solver_config(cfg, beta, *p);
    const auto reps = run_stochastic_replicates(*p, sc, cfg.replicates, replicate_threads);
    write_trace_csv(reps.front(), trace_s);
    write_distance_csv(reps.front(), dir / "distance.csv");
    const LyapunovSeries s = series_stochastic(reps);
    const DescentReport d = check_descent(std::span<const IterateTrace>(reps));
    write_diagnostics_csv(s, &d, diag_s);
    cell.verdicts = evaluate_replicates(reps);
    const RateReport r = rate_report(reps.front().meta, s);
    cell.rho = r.rho;
    cell.omega = r.omega;
    cell.k = s.k;
    cell.residual = s.residual;

    std::ostringstream rep_s;
    rep_s << "k";
    for (std::size_t q = 0; q < reps.size(); ++q) rep_s << ",r" << q;
    rep_s << '\n';
    for (std::size_t j = 0; j < s.size(); ++j) {
      rep_s << s.k[j];
      for (const auto& t : reps) rep_s << ',' << csv::format(*t.records[j].residual);
      rep_s << '\n';
    }
    write_file(dir / "replicates.csv", rep_s.str());
  } else {
    const auto p = build_problem(cfg);
    const SolverConfig sc = solver_config(cfg, beta, *p);
    const IterateTrace t = run(*p, sc);
    write_trace_csv(t, trace_s);
    write_distance_csv(t, dir / "distance.csv");
    const LyapunovSeries s = series(t);
    const DescentReport d = check_descent(t);
    write_diagnostics_csv(s, &d, diag_s);
    cell.verdicts = evaluate_trace(t);
    const RateReport r = rate_report(t, s);
    cell.rho = r.rho;
    cell.omega = r.omega;
    cell.k = s.k;
    cell.residual = s.residual;
  }

  write_file(dir / "trace.csv", trace_s.str());
  write_file(dir / "diagnostics.csv", diag_s.str());
  write_file(dir / "plot.csv", plot_csv(cell.k, cell.residual));
  write_file(dir / "summary.txt", verdict_block(cell.verdicts));
  if (cfg.svg) {
    std::ostringstream svg;
    const Curve c{"beta=" + csv::format(beta), cell.k, cell.residual};
    write_residual_svg(std::span(&c, 1), svg);
    write_file(dir / "plot.svg", svg.str());
  }
  return cell;
}

}  // namespace

std::string_view to_string(ProblemKind k) { return k == ProblemKind::linreg ? "linreg" : "logreg"; }

std::string_view to_string(SolverKind k) {
  switch (k) {
    case SolverKind::hb: return "hb";
    case SolverKind::cyclic: return "cyclic";
    case SolverKind::stochastic: return "stochastic";
    case SolverKind::decentralized: return "decentralized";
  }
  return "?";
}

std::string_view to_string(StartPoint k) { return k == StartPoint::zero ? "zero" : "gaussian"; }

void apply_setting(ExperimentConfig& cfg, std::string_view key_in, std::string_view value_in) {
  const std::string key = trim(key_in);
  const std::string v = trim(value_in);
  if (key == "problem") {
    if (v == "linreg") cfg.problem = ProblemKind::linreg;
    else if (v == "logreg") cfg.problem = ProblemKind::logreg;
    else bad(key, v, "expected linreg or logreg");
  } else if (key == "data") {
    try {
      cfg.data = parse_distribution(v);
    } catch (const std::exception&) {
      bad(key, v, "expected gaussian or bernoulli");
    }
  } else if (key == "solver") {
    if (v == "hb") cfg.solver = SolverKind::hb;
    else if (v == "cyclic") cfg.solver = SolverKind::cyclic;
    else if (v == "stochastic") cfg.solver = SolverKind::stochastic;
    else if (v == "decentralized") cfg.solver = SolverKind::decentralized;
    else bad(key, v, "expected hb, cyclic, stochastic or decentralized");
  } else if (key == "n" || key == "m") {
    const auto x = parse_uint(key, v);
    if (x == 0) bad(key, v, "must be positive");
    (key == "n" ? cfg.n : cfg.m) = static_cast<Eigen::Index>(x);
  } else if (key == "beta") {
    // Plain values, or schedule specs ("constant:0.3", "power:0.3:2"); a
    // power spec sets theta, which must then agree across the list.
    std::vector<double> betas;
    std::optional<double> theta;
    bool any_constant = false;
    for (const std::string& raw : csv::split(v, ',')) {
      const std::string cell = trim(raw);
      if (cell.find(':') == std::string::npos) {
        betas.push_back(parse_real(key, cell));
        any_constant = true;
        continue;
      }
      MomentumSchedule sch;
      try {
        sch = MomentumSchedule::parse(cell);
      } catch (const std::exception& e) {
        bad(key, cell, e.what());
      }
      betas.push_back(sch.beta0);
      if (sch.kind == MomentumSchedule::Kind::constant) {
        any_constant = true;
      } else {
        if (theta && *theta != sch.theta) bad(key, v, "power schedules must share theta");
        theta = sch.theta;
      }
    }
    if (betas.empty()) bad(key, v, "expected at least one value");
    if (theta && any_constant) bad(key, v, "cannot mix constant and power schedules");
    cfg.betas = std::move(betas);
    if (theta) cfg.theta = theta;
  } else if (key == "theta") {
    if (v.empty() || v == "none") cfg.theta.reset();
    else cfg.theta = parse_real(key, v);
  } else if (key == "c") {
    if (v == "unit") cfg.c.reset();
    else cfg.c = parse_real(key, v);
  } else if (key == "iters") {
    cfg.iters = parse_uint(key, v);
  } else if (key == "seed") {
    cfg.seed = parse_uint(key, v);
  } else if (key == "lambda") {
    cfg.lambda = parse_real(key, v);
  } else if (key == "replicates") {
    cfg.replicates = parse_uint(key, v);
  } else if (key == "blocks") {
    cfg.blocks = parse_uint(key, v);
  } else if (key == "network") {
    if (v.empty() || v == "none") cfg.network.reset();
    else cfg.network = std::filesystem::path(v);
  } else if (key == "nodes") {
    cfg.nodes = parse_uint(key, v);
  } else if (key == "alpha") {
    if (v.empty() || v == "auto") cfg.alpha.reset();
    else cfg.alpha = parse_real(key, v);
  } else if (key == "x0") {
    if (v == "zero") cfg.x0 = StartPoint::zero;
    else if (v == "gaussian") cfg.x0 = StartPoint::gaussian;
    else bad(key, v, "expected zero or gaussian");
  } else if (key == "out") {
    if (v.empty()) bad(key, v, "must not be empty");
    cfg.out = v;
  } else if (key == "svg") {
    cfg.svg = parse_bool(key, v);
  } else if (key == "threads") {
    cfg.threads = parse_uint(key, v);
  } else {
    throw InvalidParameter("unknown setting '" + key + "'");
  }
}

void apply_config_file(ExperimentConfig& cfg, std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    apply_setting(cfg, std::string_view(line).substr(0, eq), std::string_view(line).substr(eq + 1));
  }
}

void apply_config_file(ExperimentConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file " + path.string());
  apply_config_file(cfg, in);
}

void write_config(const ExperimentConfig& cfg, std::ostream& out) {
  std::vector<std::string> betas;
  for (double b : cfg.betas) betas.push_back(csv::format(b));
  std::string beta_list;
  for (std::size_t i = 0; i < betas.size(); ++i) beta_list += (i ? "," : "") + betas[i];
  out << "problem = " << to_string(cfg.problem) << '\n'
      << "data = " << to_string(cfg.data) << '\n'
      << "solver = " << to_string(cfg.solver) << '\n'
      << "n = " << cfg.n << '\n'
      << "m = " << cfg.m << '\n'
      << "beta = " << beta_list << '\n'
      << "theta = " << (cfg.theta ? csv::format(*cfg.theta) : "none") << '\n'
      << "c = " << (cfg.c ? csv::format(*cfg.c) : "unit") << '\n'
      << "iters = " << cfg.iters << '\n'
      << "seed = " << cfg.seed << '\n'
      << "lambda = " << csv::format(cfg.lambda) << '\n'
      << "replicates = " << cfg.replicates << '\n'
      << "blocks = " << cfg.blocks << '\n'
      << "network = " << (cfg.network ? cfg.network->string() : "none") << '\n'
      << "nodes = " << cfg.nodes << '\n'
      << "alpha = " << (cfg.alpha ? csv::format(*cfg.alpha) : "auto") << '\n'
      << "x0 = " << to_string(cfg.x0) << '\n'
      << "out = " << cfg.out.string() << '\n'
      << "svg = " << (cfg.svg ? "true" : "false") << '\n'
      << "threads = " << cfg.threads << '\n';
}

std::size_t effective_blocks(const ExperimentConfig& cfg) {
  if (cfg.blocks != 0) return cfg.blocks;
  switch (cfg.solver) {
    case SolverKind::cyclic: return 4;
    case SolverKind::stochastic: return 10;
    default: return 1;
  }
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.iters < 10) throw InvalidParameter("--iters must be at least 10 for the rate checks");
  if (cfg.lambda <= 0.0 && cfg.problem == ProblemKind::logreg)
    throw InvalidParameter("--lambda must be positive for logreg");
  if (cfg.betas.empty()) throw InvalidParameter("--beta needs at least one value");
  const std::size_t blocks = effective_blocks(cfg);
  if (static_cast<Eigen::Index>(blocks) > cfg.n)
    throw InvalidParameter("--blocks = " + std::to_string(blocks) + " exceeds n = " +
                           std::to_string(cfg.n));
  if (cfg.solver == SolverKind::stochastic && cfg.replicates < 2)
    throw InvalidParameter("--replicates must be at least 2 for the stochastic scheme");
  if (cfg.theta && !(*cfg.theta > 1.0)) throw InvalidParameter("--theta must exceed 1");
  if (cfg.c && !(*cfg.c > 0.0 && *cfg.c < 1.0)) throw InvalidParameter("--c must lie in (0, 1)");
  if (cfg.solver == SolverKind::decentralized) {
    if (cfg.theta) throw InvalidParameter("decentralized runs support a constant beta only");
    if (!cfg.network && cfg.nodes == 0) throw InvalidParameter("--nodes must be positive");
    return;
  }
  const double root_m = std::sqrt(static_cast<double>(blocks));
  for (double b : cfg.betas) {
    if (!(b >= 0.0)) throw InvalidParameter("--beta must be non-negative");
    if (cfg.solver == SolverKind::stochastic) {
      if (!(b < root_m))
        throw InvalidParameter("--beta = " + csv::format(b) + " must be below sqrt(blocks) = " +
                               csv::format(root_m));
      if (!cfg.c && !(b / root_m < 0.5))
        throw InvalidParameter("unit-step preset needs 2(1 - beta/sqrt(blocks)) > 1 (beta = " +
                               csv::format(b) + ")");
    } else {
      if (!(b < 1.0)) throw InvalidParameter("--beta must be below 1");
      if (!cfg.c && !(b < 0.5))
        throw InvalidParameter("unit-step preset needs 2(1 - beta) > 1, i.e. beta < 0.5 (beta = " +
                               csv::format(b) + ")");
    }
  }
}

MomentumSchedule schedule_for(const ExperimentConfig& cfg, double beta) {
  return cfg.theta ? MomentumSchedule::power_decay(beta, *cfg.theta)
                   : MomentumSchedule::constant(beta);
}

SolverConfig solver_config(const ExperimentConfig& cfg, double beta, const Problem& p) {
  SolverConfig sc;
  sc.schedule = schedule_for(cfg, beta);
  sc.max_iters = cfg.iters;
  sc.seed = cfg.seed;
  sc.x0 = start_point(cfg, p.dimension());
  switch (cfg.solver) {
    case SolverKind::hb: sc.update_rule = UpdateRule::full; break;
    case SolverKind::cyclic: sc.update_rule = UpdateRule::cyclic; break;
    case SolverKind::stochastic: sc.update_rule = UpdateRule::stochastic; break;
    case SolverKind::decentralized:
      throw InvalidParameter("solver_config: decentralized runs have no SolverConfig");
  }
  if (cfg.c) {
    sc.c = *cfg.c;
  } else if (sc.update_rule == UpdateRule::stochastic) {
    sc.c = 1.0 / (2.0 * (1.0 - beta / std::sqrt(static_cast<double>(p.blocks().count()))));
  } else {
    sc.c = 1.0 / (2.0 * (1.0 - beta));
    sc.global_block_lipschitz = sc.update_rule == UpdateRule::cyclic;
  }
  return sc;
}

std::unique_ptr<Problem> build_problem(const ExperimentConfig& cfg) {
  const std::size_t blocks = effective_blocks(cfg);
  if (cfg.problem == ProblemKind::linreg) {
    const Dataset d = generate_data(cfg.n, cfg.m, cfg.data, cfg.seed);
    return std::make_unique<LinearRegression>(make_linear_regression(d, blocks));
  }
  const Dataset d = generate_data(cfg.n, cfg.m, cfg.data, cfg.seed, LabelKind::sign);
  return std::make_unique<LogisticRegression>(make_logistic_regression(d, cfg.lambda, blocks));
}

LocalProblems build_local_problems(const ExperimentConfig& cfg, std::size_t nodes) {
  LocalProblems out;
  for (std::size_t i = 0; i < nodes; ++i) {
    if (cfg.problem == ProblemKind::linreg) {
      const Dataset d = generate_data(cfg.n, cfg.m, cfg.data, cfg.seed + i);
      out.push_back(std::make_shared<LinearRegression>(make_linear_regression(d)));
    } else {
      const Dataset d = generate_data(cfg.n, cfg.m, cfg.data, cfg.seed + i, LabelKind::sign);
      out.push_back(
          std::make_shared<LogisticRegression>(make_logistic_regression(d, cfg.lambda)));
    }
  }
  return out;
}

Network build_network(const ExperimentConfig& cfg) {
  return cfg.network ? read_network(*cfg.network) : Network::path(cfg.nodes);
}

std::optional<Vector> start_point(const ExperimentConfig& cfg, Eigen::Index dimension) {
  if (cfg.x0 == StartPoint::zero) return std::nullopt;
  Rng rng(cfg.seed ^ kStartPointSalt);
  Vector x(dimension);
  for (Eigen::Index i = 0; i < dimension; ++i) x[i] = rng.normal();
  return x;
}

// ---------------------------------------------------------------------------

std::vector<Verdict> evaluate_trace(const IterateTrace& t) {
  const bool cyclic = t.meta.scheme == UpdateRule::cyclic;
  std::vector<Verdict> out;
  out.push_back(descent_verdict(cyclic ? "LEMMA_3" : "LEMMA_1", check_descent(t)));
  const LyapunovSeries s = series(t);
  const ErrorBoundReport e = check_error_bound(s);
  if (!e.skipped) out.push_back(error_bound_verdict(cyclic ? "LEMMA_4" : "LEMMA_2", e));
  rate_verdicts(out, rate_report(t, s), cyclic ? "THEOREM_3" : "THEOREM_1",
                cyclic ? "THEOREM_4" : "THEOREM_2");
  return out;
}

std::vector<Verdict> evaluate_replicates(std::span<const IterateTrace> reps) {
  std::vector<Verdict> out;
  out.push_back(descent_verdict("LEMMA_5", check_descent(reps)));
  const LyapunovSeries s = series_stochastic(reps);
  const ErrorBoundReport e = check_error_bound(s);
  if (!e.skipped) out.push_back(error_bound_verdict("LEMMA_6", e));

  const GradientRateReport g = check_gradient_rate(s, kGradientBurnIn);
  double worst = 0.0;
  for (std::size_t j = 1; j < g.k.size(); ++j)
    if (g.k[j - 1] >= kGradientBurnIn && g.scaled_min[j - 1] > 0.0)
      worst = std::max(worst, g.scaled_min[j] / g.scaled_min[j - 1]);
  out.push_back({"THEOREM_5", g.non_increasing, worst, 1.0, ""});

  rate_verdicts(out, rate_report(reps.front().meta, s), "THEOREM_6", "THEOREM_7");
  return out;
}

std::vector<Verdict> evaluate_decentralized(const DecentralizedTrace& t) {
  std::vector<Verdict> out;
  double gap = 0.0;
  for (const auto& r : t.records) gap = std::max(gap, r.equivalence_gap);
  out.push_back({"LOCAL_GLOBAL_EQUIVALENCE", gap <= kEquivalenceTolerance, gap,
                 kEquivalenceTolerance, ""});
  out.push_back(descent_verdict("LEMMA_1", check_descent(t.global)));
  const LyapunovSeries s = series_full(t.global);
  const RateReport r = rate_report(t.global.meta, s);
  if (r.sublinear_ok)
    out.push_back({"COROLLARY_2", *r.sublinear_ok, r.sublinear_constant, *r.sublinear_bound, ""});
  return out;
}

bool CellResult::all_pass() const {
  return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; });
}

bool ExperimentResult::all_pass() const {
  return std::all_of(cells.begin(), cells.end(), [](const CellResult& c) { return c.all_pass(); });
}

std::optional<bool> strictly_decreasing_in_beta(std::span<const CellResult> cells) {
  if (cells.size() < 2) return std::nullopt;
  std::vector<const CellResult*> sorted;
  for (const auto& c : cells) sorted.push_back(&c);
  std::sort(sorted.begin(), sorted.end(),
            [](const CellResult* a, const CellResult* b) { return a->beta < b->beta; });
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (!(sorted[i]->final_residual() < sorted[i - 1]->final_residual())) return false;
  return true;
}

std::optional<double> relative_spread(std::span<const CellResult> cells) {
  if (cells.size() < 2) return std::nullopt;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& c : cells) {
    lo = std::min(lo, c.final_residual());
    hi = std::max(hi, c.final_residual());
  }
  return hi > 0.0 ? (hi - lo) / hi : 0.0;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  require_dir(cfg.out);
  const bool sweep = cfg.betas.size() > 1;

  ExperimentResult result;
  result.cells.resize(cfg.betas.size());
  std::vector<std::exception_ptr> errors(cfg.betas.size());
  std::atomic<std::size_t> next{0};
  // A single cell spends the thread budget on replicates instead.
  const std::size_t replicate_threads = sweep ? 1 : std::max<std::size_t>(cfg.threads, 1);
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < cfg.betas.size();) {
      try {
        const double b = cfg.betas[i];
        result.cells[i] = run_cell(cfg, b, sweep ? cfg.out / beta_dir(b) : cfg.out,
                                  replicate_threads);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(cfg.threads, 1, cfg.betas.size());
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::ostringstream config_s;
  write_config(cfg, config_s);
  write_file(cfg.out / "config.txt", config_s.str());
  if (!sweep) return result;

  result.ordering = strictly_decreasing_in_beta(result.cells);
  result.relative_spread = relative_spread(result.cells);

  std::ostringstream table, summary;
  table << "beta,final_residual,rho,omega,pass\n";
  for (const CellResult& c : result.cells) {
    table << csv::format(c.beta) << ',' << csv::format(c.final_residual()) << ','
          << (c.rho ? csv::format(*c.rho) : "") << ',' << (c.omega ? csv::format(*c.omega) : "")
          << ',' << (c.all_pass() ? "true" : "false") << '\n';
    summary << "[beta=" << csv::format(c.beta) << "]\n" << verdict_block(c.verdicts);
  }
  summary << "ORDERING: " << (*result.ordering ? "true" : "false")
          << " (final residual strictly decreasing in beta)\n";
  summary << "RELATIVE_SPREAD: " << csv::format(*result.relative_spread) << '\n';
  if (cfg.solver == SolverKind::stochastic)
    summary << "NOTE: stochastic sweeps are expected to show little benefit from inertia; "
               "ordering is reported, not required\n";
  write_file(cfg.out / "sweep.csv", table.str());
  write_file(cfg.out / "summary.txt", summary.str());
  if (cfg.svg) {
    std::vector<Curve> curves;
    for (const CellResult& c : result.cells)
      curves.push_back({"beta=" + csv::format(c.beta), c.k, c.residual});
    std::ostringstream svg;
    write_residual_svg(curves, svg);
    write_file(cfg.out / "plot.svg", svg.str());
  }
  return result;
}

ExperimentResult sweep_beta(const ExperimentConfig& cfg, std::span<const double> betas) {
  ExperimentConfig c = cfg;
  c.betas.assign(betas.begin(), betas.end());
  return run_experiment(c);
}

// ---------------------------------------------------------------------------

void write_residual_svg(std::span<const Curve> curves, std::ostream& out) {
  constexpr double W = 640, H = 400, left = 70, right = 150, top = 20, bottom = 40;
  static constexpr const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                            "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  double min_pos = std::numeric_limits<double>::infinity(), max_y = 0.0;
  std::size_t max_k = 1;
  for (const Curve& c : curves) {
    for (double y : c.y) {
      if (y > 0.0) min_pos = std::min(min_pos, y);
      max_y = std::max(max_y, y);
    }
    if (!c.k.empty()) max_k = std::max(max_k, c.k.back());
  }
  if (!std::isfinite(min_pos)) min_pos = max_y = 1.0;
  const double lo = std::floor(std::log10(min_pos));
  const double hi = std::max(lo + 1.0, std::ceil(std::log10(max_y)));
  const double pw = W - left - right, ph = H - top - bottom;
  auto px = [&](double k) { return left + pw * k / static_cast<double>(max_k); };
  auto py = [&](double y) {
    return top + ph * (hi - std::log10(std::max(y, min_pos))) / (hi - lo);
  };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
      << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#000\"/>\n";
  for (double e = lo; e <= hi; e += 1.0) {
    out << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << num(py(std::pow(10, e)))
        << "\" y2=\"" << num(py(std::pow(10, e))) << "\" stroke=\"#ddd\"/>\n"
        << "<text x=\"" << left - 6 << "\" y=\"" << num(py(std::pow(10, e)) + 4)
        << "\" text-anchor=\"end\">1e" << static_cast<int>(e) << "</text>\n";
  }
  out << "<text x=\"" << left << "\" y=\"" << H - 10 << "\">0</text>\n"
      << "<text x=\"" << left + pw << "\" y=\"" << H - 10 << "\" text-anchor=\"end\">" << max_k
      << "</text>\n"
      << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 10
      << "\" text-anchor=\"middle\">k</text>\n";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const Curve& c = curves[i];
    const char* color = palette[i % std::size(palette)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t j = 0; j < c.k.size(); ++j)
      out << (j ? " " : "") << num(px(static_cast<double>(c.k[j]))) << ',' << num(py(c.y[j]));
    out << "\"/>\n";
    const double ly = top + 16.0 * static_cast<double>(i + 1);
    out << "<line x1=\"" << left + pw + 10 << "\" x2=\"" << left + pw + 30 << "\" y1=\"" << ly
        << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << left + pw + 35 << "\" y=\"" << ly + 4 << "\">" << c.label
        << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace hb
