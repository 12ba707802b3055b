#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pflow/cycler.hpp"
#include "pflow/mode_model.hpp"
#include "pflow/report.hpp"
#include "pflow/scenario.hpp"
#include "pflow/spectrum.hpp"
#include "pflow/sweep.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNotConverged = 2;
constexpr int kExitConfig = 3;
constexpr int kExitSolver = 4;

pflow::ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw pflow::ConfigError("cannot read config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return pflow::parse_config(buf.str());
}

void write_output(const std::string& out_path, const std::string& content) {
  if (out_path.empty()) {
    std::cout << content;
    return;
  }
  pflow::detail::write_text_file(out_path, content);
}

int cmd_rho(const std::vector<int>& n_list, const std::string& theta_choice,
            bool table, const std::string& out_path) {
  using namespace pflow;
  constexpr double s_lo = 1e-6, s_hi = 1e6;
  constexpr double continuous_bound = 0.299, discrete_bound = 0.42;

  const ReductionReport cont = sup_abs_reduction(s_lo, s_hi);
  struct Row {
    int n;
    double theta, sup, argmax, bound;
  };
  std::vector<Row> rows;
  bool ok = cont.sup_abs_rho < continuous_bound;
  for (int n : n_list) {
    const double theta =
        theta_choice == "shifted" ? theta_shifted(n) : 0.5;
    const ReductionReport r =
        sup_abs_reduction(s_lo, s_hi, DiscreteSchemeParams{n, theta});
    rows.push_back({n, theta, r.sup_abs_rho, r.argmax_s, discrete_bound});
    // The uniform bound is proven for the shifted scheme only.
    if (theta_choice == "shifted" && !(r.sup_abs_rho <= discrete_bound))
      ok = false;
  }

  std::string text;
  char buf[160];
  if (table) {
    text = "kind,n,theta,sup_abs_rho,argmax_s\n";
    std::snprintf(buf, sizeof buf, "continuous,,,%.17g,%.17g\n",
                  cont.sup_abs_rho, cont.argmax_s);
    text += buf;
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "discrete,%d,%.17g,%.17g,%.17g\n", r.n,
                    r.theta, r.sup, r.argmax);
      text += buf;
    }
  } else {
    std::snprintf(buf, sizeof buf,
                  "continuous: sup |rho| = %.6f at s = %.4f (bound %.3f)\n",
                  cont.sup_abs_rho, cont.argmax_s, continuous_bound);
    text = buf;
    for (const auto& r : rows) {
      std::snprintf(
          buf, sizeof buf,
          "N = %4d, theta = %.6f: sup |rho^N| = %.6f at s = %.4f%s\n", r.n,
          r.theta, r.sup, r.argmax,
          theta_choice == "shifted"
              ? (r.sup <= r.bound ? "  (within 0.42)" : "  (EXCEEDS 0.42)")
              : "");
      text += buf;
    }
  }
  write_output(out_path, text);
  return ok ? kExitOk : kExitSolver;
}

int cmd_spectrum(const std::string& config_path, int modes,
                 const std::string& out_path) {
  using namespace pflow;
  const ScenarioConfig cfg = load_config(config_path);
  const ResolvedScenario r = resolve(cfg);
  const StaggeredGrid grid(r.grid);
  const auto spectrum = compute_stokes_spectrum(grid, cfg.nu, modes);
  std::ostringstream out;
  write_spectrum_csv(out, spectrum);
  write_output(out_path, "# config " + config_hash(cfg) + "\n" + out.str());
  return kExitOk;
}

int cmd_solve(const std::string& config_path, const std::string& method,
              const std::string& out_dir) {
  using namespace pflow;
  ScenarioConfig cfg = load_config(config_path);
  if (method == "forward")
    cfg.method = RunMethod::forward;
  else if (method == "averaging")
    cfg.method = RunMethod::averaging;
  else if (method == "both")
    cfg.method = RunMethod::both;
  else if (!method.empty())
    throw ConfigError("solve: --method must be forward, averaging or both");

  const ResolvedScenario r = resolve(cfg);
  const StaggeredGrid grid(r.grid);
  std::vector<RunResult> runs;
  if (cfg.method != RunMethod::averaging)
    runs.push_back(forward_iterate(grid, r.stepping, r.problem,
                                   grid.make_state(), r.tolerance,
                                   r.max_cycles));
  if (cfg.method != RunMethod::forward)
    runs.push_back(averaging_iterate(grid, r.stepping, r.problem,
                                     grid.make_state(), r.tolerance,
                                     r.max_cycles));

  for (const auto& path : emit_solve_report(out_dir, cfg, runs))
    std::cout << "wrote " << path << "\n";

  bool all_converged = true;
  for (const auto& run : runs) {
    std::string sigma = "n/a";
    try {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4f",
                    convergence_rate(run.reports).sigma_tail);
      sigma = buf;
    } catch (const std::domain_error&) {
    }
    std::printf("%s: cycles = %d, converged = %s, sigma_tail = %s",
                method_name(run.method), run.cycles_used,
                run.converged ? "yes" : "no", sigma.c_str());
    if (run.method == CycleMethod::averaging && run.fallback_cycles > 0)
      std::printf(", fallback_cycles = %d", run.fallback_cycles);
    std::printf("\n");
    all_converged = all_converged && run.converged;
  }
  return all_converged ? kExitOk : kExitNotConverged;
}

int cmd_sweep(const std::string& config_path, const std::string& axis,
              const std::vector<double>& values, const std::string& out_dir) {
  using namespace pflow;
  const SweepSpec spec{load_config(config_path), axis, values};
  const auto rows = run_sweep(spec);
  for (const auto& path : emit_sweep_report(out_dir, spec, rows))
    std::cout << "wrote " << path << "\n";

  bool failed = false, all_converged = true;
  for (const auto& row : rows) {
    if (!row.error.empty()) {
      std::fprintf(stderr, "%s = %g (%s): %s\n", axis.c_str(), row.axis_value,
                   method_name(row.method), row.error.c_str());
      failed = true;
    }
    all_converged = all_converged && row.converged;
  }
  if (failed) return kExitSolver;
  return all_converged ? kExitOk : kExitNotConverged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-periodic flow benchmarks"};
  app.require_subcommand(1);

  auto* rho = app.add_subcommand(
      "rho", "Reduction-factor suprema and bound certification");
  std::vector<int> n_list{4, 8, 16, 64, 128};
  std::string theta_choice = "shifted";
  bool table = false;
  std::string rho_out;
  rho->add_option("--n-list", n_list, "Step counts N")->delimiter(',');
  rho->add_option("--theta", theta_choice, "Scheme variant")
      ->check(CLI::IsMember({"shifted", "cn"}));
  rho->add_flag("--table", table, "Emit a CSV table instead of prose");
  rho->add_option("--out", rho_out, "Write to a file instead of stdout");

  auto* spectrum =
      app.add_subcommand("spectrum", "Stokes operator eigenvalue table");
  std::string spectrum_config, spectrum_out;
  int modes = 20;
  spectrum->add_option("--config", spectrum_config, "Scenario JSON")
      ->required();
  spectrum->add_option("--modes", modes, "Number of lowest modes");
  spectrum->add_option("--out", spectrum_out,
                       "Write to a file instead of stdout");

  auto* solve =
      app.add_subcommand("solve", "Run one scenario to its cyclic state");
  std::string solve_config, solve_method, solve_out;
  solve->add_option("--config", solve_config, "Scenario JSON")->required();
  solve->add_option("--method", solve_method,
                    "Override the configured method");
  solve->add_option("--out", solve_out, "Report directory")->required();

  auto* sweep = app.add_subcommand("sweep", "Parameter sweep with summary");
  std::string sweep_config, sweep_axis, sweep_out;
  std::vector<double> sweep_values;
  sweep->add_option("--config", sweep_config, "Base scenario JSON")
      ->required();
  sweep->add_option("--axis", sweep_axis, "One of L, nu, period, Re")
      ->required();
  sweep->add_option("--values", sweep_values, "Axis values")
      ->required()
      ->delimiter(',');
  sweep->add_option("--out", sweep_out, "Report directory")->required();

  try {
    app.parse(argc, argv);
    if (rho->parsed()) return cmd_rho(n_list, theta_choice, table, rho_out);
    if (spectrum->parsed())
      return cmd_spectrum(spectrum_config, modes, spectrum_out);
    if (solve->parsed()) return cmd_solve(solve_config, solve_method, solve_out);
    return cmd_sweep(sweep_config, sweep_axis, sweep_values, sweep_out);
  } catch (const CLI::ParseError& err) {
    return app.exit(err);
  } catch (const pflow::ConfigError& err) {
    std::fprintf(stderr, "config error: %s\n", err.what());
    return kExitConfig;
  } catch (const std::domain_error& err) {
    std::fprintf(stderr, "config error: %s\n", err.what());
    return kExitConfig;
  } catch (const pflow::StepError& err) {
    std::fprintf(stderr, "solver failure: %s\n", err.what());
    return kExitSolver;
  } catch (const pflow::SolverError& err) {
    std::fprintf(stderr, "solver failure: %s\n", err.what());
    return kExitSolver;
  } catch (const pflow::ReportError& err) {
    std::fprintf(stderr, "report error: %s\n", err.what());
    return kExitSolver;
  }
}
