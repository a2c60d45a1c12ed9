#include "heavyball/csv.hpp"
#include "heavyball/errors.hpp"
#include "heavyball/experiment.hpp"
#include "heavyball/lyapunov.hpp"
#include "heavyball/trace_io.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

using namespace hb;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const char* env = std::getenv("HBX_TEST_TMP");
  const fs::path root = env ? fs::path(env) : fs::temp_directory_path() / "hbx_test";
  const fs::path p = root / name;
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ExperimentConfig small_linreg() {
  ExperimentConfig c;
  c.n = 20;
  c.m = 30;
  c.iters = 200;
  return c;
}

std::string error_of(const ExperimentConfig& c) {
  try {
    validate(c);
  } catch (const InvalidParameter& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("apply_setting: every key parses and bad values name the key") {
  ExperimentConfig c;
  apply_setting(c, "problem", "logreg");
  apply_setting(c, " solver ", " cyclic ");
  apply_setting(c, "beta", "0,0.1,0.2");
  apply_setting(c, "c", "0.4");
  apply_setting(c, "x0", "gaussian");
  apply_setting(c, "alpha", "auto");
  CHECK(c.problem == ProblemKind::logreg);
  CHECK(c.solver == SolverKind::cyclic);
  CHECK(c.betas == std::vector<double>{0.0, 0.1, 0.2});
  CHECK(c.c == 0.4);
  CHECK(c.x0 == StartPoint::gaussian);
  CHECK_FALSE(c.alpha);
  apply_setting(c, "c", "unit");
  CHECK_FALSE(c.c);

  apply_setting(c, "beta", "power:0.3:2,power:0.1:2");
  CHECK(c.betas == std::vector<double>{0.3, 0.1});
  CHECK(c.theta == 2.0);

  CHECK_THROWS_AS(apply_setting(c, "beta", "power:0.3:2,0.1"), InvalidParameter);
  CHECK_THROWS_AS(apply_setting(c, "beta", "power:0.3:2,power:0.1:3"), InvalidParameter);
  CHECK_THROWS_AS(apply_setting(c, "iters", "-3"), InvalidParameter);
  CHECK_THROWS_AS(apply_setting(c, "n", "0"), InvalidParameter);
  CHECK_THROWS_AS(apply_setting(c, "svg", "maybe"), InvalidParameter);
  try {
    apply_setting(c, "lambda", "abc");
    FAIL("expected InvalidParameter");
  } catch (const InvalidParameter& e) {
    CHECK(std::string(e.what()).find("lambda") != std::string::npos);
  }
  CHECK_THROWS_AS(apply_setting(c, "nonsense", "1"), InvalidParameter);
}

TEST_CASE("config file: comments, later lines override, malformed lines are parse errors") {
  ExperimentConfig c;
  std::istringstream in("# preset\nproblem = logreg\nbeta = 0.1  # trailing\n\nbeta = 0.2\n");
  apply_config_file(c, in);
  CHECK(c.problem == ProblemKind::logreg);
  CHECK(c.betas == std::vector<double>{0.2});
  // Flags applied after the file win.
  apply_setting(c, "beta", "0.3");
  CHECK(c.betas == std::vector<double>{0.3});

  std::istringstream broken("problem logreg\n");
  CHECK_THROWS_AS(apply_config_file(c, broken), ParseError);
  CHECK_THROWS_AS(apply_config_file(c, fs::path("/nonexistent/hbx.conf")), ParseError);
}

TEST_CASE("write_config reloads to the same configuration") {
  ExperimentConfig c;
  c.problem = ProblemKind::logreg;
  c.data = Distribution::bernoulli;
  c.solver = SolverKind::stochastic;
  c.betas = {0.0, 0.15, 0.4};
  c.theta = 3.0;
  c.c = 0.25;
  c.iters = 77;
  c.seed = 9;
  c.lambda = 0.5;
  c.replicates = 12;
  c.blocks = 5;
  c.network = "graph.txt";
  c.alpha = 0.125;
  c.x0 = StartPoint::gaussian;
  c.out = "somewhere";
  c.svg = true;
  c.threads = 3;
  std::ostringstream out;
  write_config(c, out);
  ExperimentConfig r;
  std::istringstream in(out.str());
  apply_config_file(r, in);
  std::ostringstream again;
  write_config(r, again);
  CHECK(again.str() == out.str());
  CHECK(r.betas == c.betas);
  CHECK(r.theta == c.theta);
  CHECK(r.alpha == c.alpha);
  CHECK(r.network == c.network);
}

TEST_CASE("validate: violated constraints are named") {
  ExperimentConfig c;
  c.betas = {0.6};
  CHECK(error_of(c).find("beta < 0.5") != std::string::npos);
  c.c = 0.2;
  CHECK(error_of(c).empty());
  c.betas = {1.0};
  CHECK(error_of(c).find("below 1") != std::string::npos);

  ExperimentConfig s;
  s.solver = SolverKind::stochastic;
  s.betas = {1.2};  // beta/sqrt(10) < 0.5
  CHECK(error_of(s).empty());
  s.betas = {1.6};
  CHECK(error_of(s).find("sqrt(blocks)") != std::string::npos);
  s.betas = {0.1};
  s.replicates = 1;
  CHECK(error_of(s).find("replicates") != std::string::npos);

  ExperimentConfig o;
  o.iters = 5;
  CHECK(error_of(o).find("iters") != std::string::npos);
  o = {};
  o.blocks = 200;
  CHECK(error_of(o).find("exceeds n") != std::string::npos);
  o = {};
  o.theta = 1.0;
  CHECK(error_of(o).find("theta") != std::string::npos);
  o = {};
  o.problem = ProblemKind::logreg;
  o.lambda = 0.0;
  CHECK(error_of(o).find("lambda") != std::string::npos);
  o = {};
  o.solver = SolverKind::decentralized;
  o.theta = 2.0;
  CHECK(error_of(o).find("constant beta") != std::string::npos);
}

TEST_CASE("effective_blocks defaults per solver") {
  ExperimentConfig c;
  CHECK(effective_blocks(c) == 1);
  c.solver = SolverKind::cyclic;
  CHECK(effective_blocks(c) == 4);
  c.solver = SolverKind::stochastic;
  CHECK(effective_blocks(c) == 10);
  c.blocks = 3;
  CHECK(effective_blocks(c) == 3);
}

TEST_CASE("solver_config: unit-step preset gives gamma = 1/L") {
  ExperimentConfig c = small_linreg();
  const auto p = build_problem(c);
  for (double b : {0.0, 0.2, 0.4}) {
    const SolverConfig sc = solver_config(c, b, *p);
    CHECK(step_size_full(b, sc.c, p->lipschitz()) == doctest::Approx(1.0 / p->lipschitz()));
  }
  c.solver = SolverKind::stochastic;
  c.blocks = 4;
  const auto q = build_problem(c);
  const SolverConfig sc = solver_config(c, 0.6, *q);
  CHECK(step_size_stochastic(0.6, sc.c, q->lipschitz(), 4) == doctest::Approx(1.0 / q->lipschitz()));
}

TEST_CASE("single run: artifacts, passing verdicts, positive decreasing residuals") {
  ExperimentConfig c = small_linreg();
  c.out = scratch("single");
  c.svg = true;
  const ExperimentResult r = run_experiment(c);
  REQUIRE(r.cells.size() == 1);
  CHECK_FALSE(r.ordering);
  for (const char* f : {"trace.csv", "diagnostics.csv", "plot.csv", "summary.txt", "distance.csv",
                        "plot.svg", "config.txt"})
    CHECK(fs::exists(c.out / f));

  const CellResult& cell = r.cells.front();
  CHECK(cell.all_pass());
  REQUIRE(cell.residual.size() == c.iters + 1);
  CHECK(cell.residual.back() < cell.residual.front());
  for (double v : cell.residual) CHECK(v >= 0.0);

  const std::string summary = slurp(c.out / "summary.txt");
  CHECK(summary.find("LEMMA_1: PASS") != std::string::npos);
  CHECK(summary.find("THEOREM_1: PASS") != std::string::npos);

  // The trace on disk re-derives the same verdicts.
  IterateTrace t = read_trace_csv(c.out / "trace.csv");
  attach_distance_csv(t, c.out / "distance.csv");
  const auto again = evaluate_trace(t);
  REQUIRE(again.size() == cell.verdicts.size());
  for (std::size_t i = 0; i < again.size(); ++i) {
    CHECK(again[i].name == cell.verdicts[i].name);
    CHECK(again[i].pass == cell.verdicts[i].pass);
  }

  // xi never increases.
  const LyapunovSeries s = series(t);
  for (std::size_t j = 1; j < s.size(); ++j) CHECK(s.xi[j] <= s.xi[j - 1] + 1e-10 * s.scale);

  const std::string plot = slurp(c.out / "plot.csv");
  CHECK(plot.rfind("k,residual\n", 0) == 0);
  CHECK(slurp(c.out / "plot.svg").find("<svg") != std::string::npos);
}

TEST_CASE("beta = 0 residual curve equals plain gradient descent") {
  ExperimentConfig c = small_linreg();
  c.betas = {0.0};
  c.out = scratch("gd");
  const ExperimentResult r = run_experiment(c);
  const auto p = build_problem(c);
  const double gamma = 1.0 / p->lipschitz();
  Vector x = Vector::Zero(p->dimension());
  REQUIRE(r.cells.front().residual.size() == c.iters + 1);
  for (std::size_t k = 0; k <= c.iters; ++k) {
    CHECK(r.cells.front().residual[k] == p->suboptimality(x));
    x = x - gamma * p->gradient(x);
  }
}

TEST_CASE("sweep: per-beta directories, sweep table and ordering") {
  ExperimentConfig c = small_linreg();
  c.betas = {0.0, 0.1, 0.2, 0.3, 0.4};
  c.out = scratch("sweep");
  c.threads = 2;
  const ExperimentResult r = run_experiment(c);
  REQUIRE(r.cells.size() == 5);
  for (const CellResult& cell : r.cells) {
    CHECK(cell.all_pass());
    CHECK(fs::exists(c.out / ("beta_" + csv::format(cell.beta)) / "trace.csv"));
  }
  REQUIRE(r.ordering);
  CHECK(*r.ordering);
  REQUIRE(r.relative_spread);
  CHECK(*r.relative_spread > 0.0);
  CHECK(*r.relative_spread < 1.0);

  std::istringstream table(slurp(c.out / "sweep.csv"));
  std::string line;
  std::getline(table, line);
  CHECK(line == "beta,final_residual,rho,omega,pass");
  std::size_t rows = 0;
  while (std::getline(table, line)) {
    ++rows;
    CHECK(csv::split(line, ',').size() == 5);
  }
  CHECK(rows == 5);
  const std::string summary = slurp(c.out / "summary.txt");
  CHECK(summary.find("ORDERING: true") != std::string::npos);
  CHECK(summary.find("RELATIVE_SPREAD: ") != std::string::npos);
}

TEST_CASE("identical configurations produce byte-identical artifacts for any thread count") {
  ExperimentConfig c = small_linreg();
  c.solver = SolverKind::stochastic;
  c.blocks = 5;
  c.replicates = 8;
  c.iters = 60;
  c.betas = {0.1, 0.3};
  c.out = scratch("det_a");
  c.threads = 1;
  run_experiment(c);
  const fs::path a = c.out;
  c.out = scratch("det_b");
  c.threads = 3;
  run_experiment(c);
  const fs::path b = c.out;

  std::size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a);
    if (rel == "config.txt") continue;  // records out and threads
    CHECK_MESSAGE(slurp(e.path()) == slurp(b / rel), rel.string());
    ++compared;
  }
  CHECK(compared >= 10);
}

TEST_CASE("stochastic sweep: ordering may fail and the summary says it is not required") {
  ExperimentConfig c = small_linreg();
  c.solver = SolverKind::stochastic;
  c.blocks = 5;
  c.replicates = 4;
  c.iters = 40;
  c.betas = {0.0, 0.2};
  c.out = scratch("stoch_sweep");
  const ExperimentResult r = run_experiment(c);
  REQUIRE(r.ordering);
  const std::string summary = slurp(c.out / "summary.txt");
  CHECK(summary.find("NOTE: ") != std::string::npos);
  CHECK(fs::exists(c.out / "beta_0" / "replicates.csv"));
  std::istringstream reps(slurp(c.out / "beta_0" / "replicates.csv"));
  std::string header;
  std::getline(reps, header);
  CHECK(header == "k,r0,r1,r2,r3");
}

TEST_CASE("cyclic and decentralized single runs pass on small presets") {
  ExperimentConfig c = small_linreg();
  c.solver = SolverKind::cyclic;
  c.out = scratch("cyclic");
  CHECK(run_experiment(c).all_pass());

  ExperimentConfig d = small_linreg();
  d.solver = SolverKind::decentralized;
  d.n = 5;
  d.m = 8;
  d.nodes = 3;
  d.betas = {0.2};
  d.out = scratch("decentralized");
  const ExperimentResult r = run_experiment(d);
  CHECK(r.all_pass());
  CHECK(fs::exists(d.out / "global.csv"));
  bool saw_corollary = false;
  for (const Verdict& v : r.cells.front().verdicts) saw_corollary |= v.name == "COROLLARY_2";
  CHECK(saw_corollary);
  std::istringstream trace(slurp(d.out / "trace.csv"));
  std::string header;
  std::getline(trace, header);
  CHECK(header == "k,F,residual,consensus_error");
}

TEST_CASE("gaussian start point is seeded and distinct from the zero start") {
  ExperimentConfig c = small_linreg();
  CHECK_FALSE(start_point(c, 20));
  c.x0 = StartPoint::gaussian;
  const auto a = start_point(c, 20);
  const auto b = start_point(c, 20);
  REQUIRE(a);
  CHECK(*a == *b);
  CHECK(a->norm() > 0.0);
  c.seed = 2;
  CHECK(*start_point(c, 20) != *a);
}

TEST_CASE("relative spread and ordering helpers") {
  std::vector<CellResult> cells(3);
  cells[0].beta = 0.2;
  cells[0].residual = {4.0, 1.0};
  cells[1].beta = 0.0;
  cells[1].residual = {4.0, 2.0};
  cells[2].beta = 0.1;
  cells[2].residual = {4.0, 1.5};
  CHECK(strictly_decreasing_in_beta(cells) == true);
  CHECK(*relative_spread(cells) == doctest::Approx(0.5));
  cells[2].residual.back() = 1.0;
  CHECK(strictly_decreasing_in_beta(cells) == false);
  CHECK_FALSE(strictly_decreasing_in_beta(std::span(cells).first(1)));
  CHECK_FALSE(relative_spread(std::span(cells).first(1)));
}
