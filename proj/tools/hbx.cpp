// hbx: Heavy-ball experiment runner and trace diagnostics.
//
//   hbx [--config FILE] [--problem linreg|logreg] [--solver hb|cyclic|...] ...
//   hbx diagnose --trace trace.csv [--distance distance.csv] [--nu NU]
//
// Exit status: 0 when every verdict passes, 1 when any fails, 2 on usage or
// input errors.

#include "heavyball/errors.hpp"
#include "heavyball/experiment.hpp"
#include "heavyball/lyapunov.hpp"
#include "heavyball/trace_io.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace {

constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;

// Flags that map one to one onto config keys.
const std::vector<std::pair<std::string, std::string>> kSettingFlags = {
    {"problem", "linreg | logreg"},
    {"data", "gaussian | bernoulli"},
    {"solver", "hb | cyclic | stochastic | decentralized"},
    {"n", "number of features (default 100)"},
    {"m", "number of samples, per node when decentralized (default 150)"},
    {"beta", "inertial parameter, comma list for a sweep, or power:B:THETA"},
    {"theta", "power-decay exponent: beta_k = min(beta, k^-theta)"},
    {"c", "step constant in (0,1), or 'unit' for gamma = 1/L (default)"},
    {"iters", "iterations, epochs for the cyclic scheme (default 1000)"},
    {"seed", "data and sampling seed (default 1)"},
    {"lambda", "logistic l2 weight (default 1e-3)"},
    {"replicates", "stochastic replicates (default 200)"},
    {"blocks", "coordinate blocks; 0 = 4 cyclic, 10 stochastic"},
    {"network", "edge-list file for the decentralized solver"},
    {"nodes", "path-graph size when no network file is given (default 5)"},
    {"alpha", "decentralized step; default 0.9 * alpha_max(beta)"},
    {"x0", "zero | gaussian start point"},
    {"out", "output directory (default hbx-out)"},
    {"svg", "also write a log-scale SVG chart (true | false)"},
    {"threads", "worker threads for sweep cells or replicates"},
};

int run_main(const std::optional<std::string>& config_path,
             const std::map<std::string, std::string>& flags) {
  hb::ExperimentConfig cfg;
  if (config_path) hb::apply_config_file(cfg, std::filesystem::path(*config_path));
  for (const auto& [key, value] : flags) hb::apply_setting(cfg, key, value);

  const hb::ExperimentResult r = hb::run_experiment(cfg);
  for (const hb::CellResult& c : r.cells) {
    if (r.cells.size() > 1) std::cout << "[beta=" << c.beta << "]\n";
    for (const hb::Verdict& v : c.verdicts) std::cout << hb::format_verdict(v) << '\n';
  }
  if (r.ordering) std::cout << "ORDERING: " << (*r.ordering ? "true" : "false") << '\n';
  if (r.relative_spread) std::cout << "RELATIVE_SPREAD: " << *r.relative_spread << '\n';
  std::cout << "artifacts: " << cfg.out.string() << '\n';
  return r.all_pass() ? 0 : kExitFail;
}

int run_diagnose(const std::string& trace_path, const std::optional<std::string>& distance_path,
                 std::optional<double> nu) {
  hb::IterateTrace t = hb::read_trace_csv(std::filesystem::path(trace_path));
  if (distance_path) hb::attach_distance_csv(t, std::filesystem::path(*distance_path));
  if (nu) t.meta.rsc_constant = *nu;
  if (t.meta.scheme == hb::UpdateRule::stochastic)
    throw hb::UnsupportedCapability(
        "diagnose: stochastic checks hold in expectation and need the replicate set; "
        "rerun hbx with --solver stochastic");
  const std::vector<hb::Verdict> vs = hb::evaluate_trace(t);
  bool ok = true;
  for (const hb::Verdict& v : vs) {
    std::cout << hb::format_verdict(v) << '\n';
    ok = ok && v.pass;
  }
  if (!distance_path)
    std::cout << "note: no distance file; error-bound and sublinear checks skipped\n";
  return ok ? 0 : kExitFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heavy-ball experiments with Lyapunov diagnostics"};
  app.set_help_all_flag("--help-all");

  std::optional<std::string> config_path;
  app.add_option("--config", config_path, "key = value file; flags override it")
      ->check(CLI::ExistingFile);
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, CLI::Option*>> options;
  for (const auto& [name, help] : kSettingFlags)
    options.emplace_back(name, app.add_option("--" + name, values[name], help));

  auto* diagnose = app.add_subcommand("diagnose", "re-check a trace CSV written by hbx");
  std::string trace_path;
  std::optional<std::string> distance_path;
  std::optional<double> nu;
  diagnose->add_option("--trace", trace_path, "trace.csv")->required()->check(CLI::ExistingFile);
  diagnose->add_option("--distance", distance_path, "distance.csv sidecar")
      ->check(CLI::ExistingFile);
  diagnose->add_option("--nu", nu, "restricted strong convexity constant override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (*diagnose) return run_diagnose(trace_path, distance_path, nu);
    std::map<std::string, std::string> given;
    for (const auto& [name, opt] : options)
      if (opt->count() > 0) given[name] = values[name];
    return run_main(config_path, given);
  } catch (const hb::InvalidParameter& e) {
    std::cerr << "hbx: invalid parameter: " << e.what() << '\n';
    return kExitUsage;
  } catch (const hb::ParseError& e) {
    std::cerr << "hbx: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "hbx: " << e.what() << '\n';
    return kExitFail;
  }
}
