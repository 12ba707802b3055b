#pragma once

#include <atomic>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "pflow/cycler.hpp"
#include "pflow/scenario.hpp"

namespace pflow {

/// One swept parameter over an otherwise fixed scenario. Axis values must
/// be strictly monotone; rows are emitted in their order.
struct SweepSpec {
  ScenarioConfig base;
  std::string axis;
  std::vector<double> values;
};

inline ScenarioConfig apply_axis(const ScenarioConfig& base,
                                 const std::string& axis, double value) {
  ScenarioConfig c = base;
  const bool ring = c.scenario == ScenarioKind::annulus;
  if (axis == "L") {
    if (ring)
      throw ConfigError("sweep: axis 'L' does not apply to the annulus");
    if (!(value > 0.0)) throw ConfigError("sweep: L values must be positive");
    c.L = value;
  } else if (axis == "nu") {
    if (!(value > 0.0)) throw ConfigError("sweep: nu values must be positive");
    c.nu = value;
  } else if (axis == "period") {
    if (!(value > 0.0))
      throw ConfigError("sweep: period values must be positive");
    c.period = value;
  } else if (axis == "Re") {
    if (!ring)
      throw ConfigError("sweep: axis 'Re' applies to the annulus only");
    if (!(value > 0.0)) throw ConfigError("sweep: Re values must be positive");
    c.nu = 5.0 / value;
  } else {
    throw ConfigError("sweep: unknown axis '" + axis + "'");
  }
  return c;
}

inline void validate_sweep(const SweepSpec& spec) {
  if (spec.values.empty()) throw ConfigError("sweep: values must be nonempty");
  for (size_t i = 1; i < spec.values.size(); ++i) {
    const bool up = spec.values[1] > spec.values[0];
    if (up ? !(spec.values[i] > spec.values[i - 1])
           : !(spec.values[i] < spec.values[i - 1]))
      throw ConfigError("sweep: values must be strictly monotone");
  }
  // Surface config problems before any run starts; they would hit every
  // row identically.
  for (double v : spec.values) resolve(apply_axis(spec.base, spec.axis, v));
}

/// One (axis value, method) cell of a sweep. A solver failure is recorded
/// in `error` and leaves the result empty; the sweep itself continues.
struct SweepRow {
  double axis_value = 0.0;
  CycleMethod method = CycleMethod::forward;
  int cycles = 0;
  std::optional<double> sigma_tail;
  bool converged = false;
  int fallback_cycles = 0;
  std::string error;
  RunResult result;
  ScenarioConfig config;
};

/// Worker count for sweeps, from the BENCH_WORKERS environment variable.
inline int bench_workers() {
  const char* env = std::getenv("BENCH_WORKERS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || n < 1 || n > 256)
    throw ConfigError("BENCH_WORKERS must be a positive integer");
  return static_cast<int>(n);
}

namespace detail {

inline SweepRow run_sweep_point(double value, CycleMethod method,
                                const ScenarioConfig& cfg) {
  SweepRow row;
  row.axis_value = value;
  row.method = method;
  row.config = cfg;
  const ResolvedScenario r = resolve(cfg);
  const StaggeredGrid grid(r.grid);
  try {
    RunResult res =
        (method == CycleMethod::forward ? forward_iterate
                                        : averaging_iterate)(
            grid, r.stepping, r.problem, grid.make_state(), r.tolerance,
            r.max_cycles);
    row.cycles = res.cycles_used;
    row.converged = res.converged;
    row.fallback_cycles = res.fallback_cycles;
    try {
      row.sigma_tail = convergence_rate(res.reports).sigma_tail;
    } catch (const std::domain_error&) {
      // Runs shorter than three cycles have no measurable rate.
    }
    row.result = std::move(res);
  } catch (const StepError& err) {
    row.error = err.what();
  } catch (const SolverError& err) {
    row.error = err.what();
  }
  return row;
}

}  // namespace detail

/// Runs every (value, method) cell, up to `workers` concurrently. Output
/// order and content are independent of the worker count: each cell owns
/// its slot and nothing else is shared.
inline std::vector<SweepRow> run_sweep(const SweepSpec& spec,
                                       int workers = bench_workers()) {
  validate_sweep(spec);

  struct Task {
    double value;
    CycleMethod method;
    ScenarioConfig cfg;
  };
  std::vector<Task> tasks;
  for (double v : spec.values) {
    const ScenarioConfig point = apply_axis(spec.base, spec.axis, v);
    if (point.method != RunMethod::averaging)
      tasks.push_back({v, CycleMethod::forward, point});
    if (point.method != RunMethod::forward)
      tasks.push_back({v, CycleMethod::averaging, point});
  }

  std::vector<SweepRow> rows(tasks.size());
  std::atomic<size_t> next{0};
  auto drain = [&] {
    for (size_t i; (i = next.fetch_add(1)) < tasks.size();)
      rows[i] =
          detail::run_sweep_point(tasks[i].value, tasks[i].method, tasks[i].cfg);
  };
  if (workers <= 1 || tasks.size() <= 1) {
    drain();
  } else {
    std::vector<std::thread> pool;
    const int n = std::min<int>(workers, static_cast<int>(tasks.size()));
    pool.reserve(static_cast<size_t>(n));
    for (int t = 0; t < n; ++t) pool.emplace_back(drain);
    for (auto& th : pool) th.join();
  }
  return rows;
}

}  // namespace pflow
