#include "mm/harness.hpp"
#include "mm/merton.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <iostream>

using namespace mm;
using json = nlohmann::json;

namespace {

constexpr int kVerificationFailure = 2;
constexpr int kConfigError = 3;

json num(double v) { return std::isfinite(v) ? json(round12(v)) : json(nullptr); }

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

int sweep(const std::string& config, const std::string& out) {
  const AccuracyReport r = run_sweep(load_config(config));
  emit_report(r, out);
  std::cout << report_json(r);
  for (const AccuracyRow& row : r.rows)
    if (row.status != "ok" || (row.has_verify && !row.verified)) return kVerificationFailure;
  return 0;
}

int verify(const std::string& config) {
  const SweepConfig cfg = load_config(config);
  const ModelSpec spec = instantiate_model(cfg.model);
  const Expansion e(spec, make_utility(cfg.utility));
  const VerificationGrid grid = default_grid(spec, cfg.grid_nx, cfg.grid_ny, cfg.grid_nz);
  json j{{"eps", num(spec.eps())}, {"delta", num(spec.delta())}, {"grid_points", grid.size()}};
  try {
    const VerificationReport r = calibrate_constants(e, spec.eps(), spec.delta(), grid);
    j["C_A"] = num(r.constants.A);
    j["C_B"] = num(r.constants.B);
    j["C_C"] = num(r.constants.C);
    j["min_q_sub"] = num(r.min_q_sub);
    j["max_q_hat_super"] = num(r.max_q_super);
    j["terminal_margin_sub"] = num(r.terminal_sub);
    j["terminal_margin_super"] = num(r.terminal_super);
    j["concavity_margin"] = num(-r.max_vxx_super);
    j["min_gap"] = num(r.min_gap);
    j["max_gap_ratio"] = num(r.max_gap_ratio);
    j["doublings"] = r.doublings;
    j["binding"] = r.binding;
    j["calibrated"] = r.calibrated;
    print(j);
    return r.calibrated ? 0 : kVerificationFailure;
  } catch (const std::runtime_error& err) {
    j["calibrated"] = false;
    j["error"] = err.what();
    print(j);
    return kVerificationFailure;
  }
}

int simulate(const std::string& config, long long paths, long long seed) {
  SweepConfig cfg = load_config(config);
  if (paths > 0) cfg.sim.paths = static_cast<std::size_t>(paths);
  if (seed >= 0) cfg.sim.seed = static_cast<std::uint64_t>(seed);
  const Point& p = cfg.points.front();
  if (p.t != 0.0) throw ConfigError("simulation starts at t = 0");
  const ModelSpec spec = instantiate_model(cfg.model);
  const Expansion e(spec, make_utility(cfg.utility));
  SimConfig sim = cfg.sim;
  sim.x0 = p.x;
  sim.y0 = p.y;
  sim.z0 = p.z;
  const PathStats stats = simulate_paths(spec, pi0_strategy(e), sim);
  const ValueEstimate v = estimate_value(stats, e.utility());
  print({{"mean", num(v.mean)},
         {"ci", num(v.half_width)},
         {"std_error", num(v.std_error)},
         {"n_paths", stats.paths},
         {"n_steps", stats.steps},
         {"seed", stats.seed},
         {"antithetic", stats.antithetic},
         {"implicit_fast", stats.implicit_fast},
         {"positivity_violations", stats.positivity_violations},
         {"approx", num(e.approx(p, spec.eps(), spec.delta()))},
         {"quantiles", {num(v.q05), num(v.q50), num(v.q95)}}});
  return 0;
}

int merton(double gamma, double lambda, double T, double t, double x) {
  if (!(T > 0.0) || !(t >= 0.0 && t <= T) || !(x > 0.0)) throw ConfigError("need T > 0, 0 <= t <= T and x > 0");
  UtilitySpec u = [&] {
    try {
      return gamma == 1.0 ? make_utility({"log", 1.0, {}, {}}) : make_utility({"power", gamma, {}, {}});
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }();
  const HeatKernel kernel(u);
  const MertonField f = solve_merton(kernel, lambda, T);
  print({{"gamma", num(gamma)},
         {"lambda", num(lambda)},
         {"T", num(T)},
         {"t", num(t)},
         {"x", num(x)},
         {"value", num(f.value(t, x))},
         {"M_x", num(f.M_x(t, x))},
         {"M_xx", num(f.M_xx(t, x))},
         {"M_t", num(f.M_t(t, x))},
         {"risk_tolerance", num(f.R(t, x))},
         {"residual", num(merton_residual(f, t, x))}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiscale Merton asymptotics: sweeps, verification and simulation"};
  app.require_subcommand(1);

  std::string config, out = "report";
  long long paths = 0, seed = -1;
  double gamma = 2.0, lambda = 0.5, T = 1.0, t = 0.0, x = 1.0;

  CLI::App* sw = app.add_subcommand("sweep", "Accuracy sweep over the eps ladder");
  sw->add_option("--config", config, "TOML config")->required()->check(CLI::ExistingFile);
  sw->add_option("--out", out, "Output directory");

  CLI::App* vs = app.add_subcommand("verify-subsuper", "Calibrate and check the sub/super-solutions");
  vs->add_option("--config", config, "TOML config")->required()->check(CLI::ExistingFile);

  CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo value of the zeroth-order strategy");
  sim->add_option("--config", config, "TOML config")->required()->check(CLI::ExistingFile);
  sim->add_option("--paths", paths, "Number of paths")->check(CLI::PositiveNumber);
  sim->add_option("--seed", seed, "Seed")->check(CLI::NonNegativeNumber);

  CLI::App* mt = app.add_subcommand("merton", "Constant-Sharpe Merton value for power utility");
  mt->add_option("--gamma", gamma, "Relative risk aversion");
  mt->add_option("--lambda", lambda, "Sharpe ratio");
  mt->add_option("--T", T, "Horizon");
  mt->add_option("--t", t, "Time");
  mt->add_option("--x", x, "Wealth");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kConfigError;
  }

  try {
    if (*sw) return sweep(config, out);
    if (*vs) return verify(config);
    if (*sim) return simulate(config, paths, seed);
    return merton(gamma, lambda, T, t, x);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
