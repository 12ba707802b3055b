#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pflow/grid.hpp"
#include "pflow/mode_model.hpp"
#include "pflow/operators.hpp"
#include "pflow/saddle.hpp"
#include "pflow/spectrum.hpp"
#include "pflow/stepper.hpp"

namespace pflow {

/// One outer cycle of either iteration. initial_delta compares this
/// cycle's starting value with the previous one, so it exists from the
/// second cycle on, and sigma (the ratio of consecutive deltas) from the
/// third. update_norm is the correction magnitude of an averaging cycle.
struct CycleReport {
  int cycle = 0;
  double periodicity_error = 0.0;
  std::optional<double> initial_delta;
  std::optional<double> sigma;
  std::optional<double> update_norm;
  double wall_ms = 0.0;
};

struct RunResult {
  std::vector<CycleReport> reports;
  bool converged = false;
  int cycles_used = 0;
  FlowState final_state;
  CycleMethod method = CycleMethod::forward;
  int fallback_cycles = 0;
};

inline const char* method_name(CycleMethod m) {
  return m == CycleMethod::forward ? "forward" : "averaging";
}

namespace detail {

/// Shared outer loop. Both iterations integrate one period, measure
/// ||vN - v0|| on the raw cycle, and stop on it; they differ only in how
/// the next starting value is produced. When converged, the proven
/// starting value is returned untouched; otherwise the final state is the
/// next starting value the iteration would have used.
inline RunResult run_cycles(const StaggeredGrid& grid, const ThetaConfig& cfg,
                            const ProblemSpec& prob, const FlowState& v0_init,
                            double tolerance, int max_cycles,
                            CycleMethod method) {
  if (!(tolerance > 0.0))
    throw std::domain_error("run_cycles: tolerance must be positive");
  if (max_cycles < 1)
    throw std::domain_error("run_cycles: max_cycles must be >= 1");
  grid.require_match(v0_init);

  ThetaStepper stepper(grid, cfg, prob);
  const bool averaging = method == CycleMethod::averaging;
  // The Stokes update matrix never changes; factor it once up front.
  std::optional<StationarySolver> stokes_update;
  if (averaging && prob.kind == Problem::stokes)
    stokes_update.emplace(grid, prob.nu);

  RunResult out;
  out.method = method;
  const double t0 = v0_init.time;
  FlowState v0 = v0_init;
  FlowState v0_prev;
  std::optional<double> prev_delta;

  for (int l = 1; l <= max_cycles; ++l) {
    const auto tic = std::chrono::steady_clock::now();
    const CycleTrace trace = stepper.run_cycle(v0);

    CycleReport rep;
    rep.cycle = l;
    rep.periodicity_error = diff_norm_velocity(grid, trace.vN, trace.v0);
    if (l >= 2) {
      rep.initial_delta = diff_norm_velocity(grid, trace.v0, v0_prev);
      if (l >= 3 && prev_delta && *prev_delta > 0.0)
        rep.sigma = *rep.initial_delta / *prev_delta;
      prev_delta = rep.initial_delta;
    }
    out.cycles_used = l;
    out.converged = rep.periodicity_error < tolerance;

    if (out.converged) {
      out.final_state = trace.v0;
    } else {
      if (averaging) {
        FlowState rhs = grid.make_state();
        axpy_velocity(rhs, 1.0 / cfg.period, trace.vN);
        axpy_velocity(rhs, -1.0 / cfg.period, trace.v0);
        try {
          const FlowState w = stokes_update ? stokes_update->solve(rhs)
                                            : solve_oseen_update(
                                                  grid, prob.nu, trace.avg, rhs);
          rep.update_norm = norm_velocity(grid, w);
          v0 = trace.vN;
          axpy_velocity(v0, 1.0, w);
        } catch (const SolverError&) {
          ++out.fallback_cycles;
          v0 = trace.vN;
        }
      } else {
        v0 = trace.vN;
      }
      v0.time = t0;
      out.final_state = v0;
    }

    rep.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - tic)
                      .count();
    out.reports.push_back(rep);
    if (out.converged) break;
    v0_prev = trace.v0;
  }
  return out;
}

}  // namespace detail

/// Plain forward cycling: v0 := vN until the cycle closes.
inline RunResult forward_iterate(const StaggeredGrid& grid,
                                 const ThetaConfig& cfg,
                                 const ProblemSpec& prob,
                                 const FlowState& v0_init, double tolerance,
                                 int max_cycles) {
  return detail::run_cycles(grid, cfg, prob, v0_init, tolerance, max_cycles,
                            CycleMethod::forward);
}

/// Accelerated cycling: after each period solve the stationary problem
/// with right-hand side (vN - v0)/P (Stokes as-is, otherwise linearized
/// transport at the cycle average) and restart from vN + w. A failed
/// update solve degrades that cycle to a plain forward one and is counted.
inline RunResult averaging_iterate(const StaggeredGrid& grid,
                                   const ThetaConfig& cfg,
                                   const ProblemSpec& prob,
                                   const FlowState& v0_init, double tolerance,
                                   int max_cycles) {
  return detail::run_cycles(grid, cfg, prob, v0_init, tolerance, max_cycles,
                            CycleMethod::averaging);
}

/// Experimental reduction rate: the sigma series (ratios of consecutive
/// initial-value increments, defined from the third cycle on) and the
/// geometric mean over its last min(5, available) entries.
struct RateSummary {
  std::vector<double> sigma_series;
  double sigma_tail = 0.0;
};

inline RateSummary convergence_rate(const std::vector<CycleReport>& reports) {
  int with_delta = 0;
  for (const auto& r : reports)
    if (r.initial_delta) ++with_delta;
  if (with_delta < 3)
    throw std::domain_error(
        "convergence_rate: need at least 3 cycles with initial_delta");

  RateSummary out;
  for (size_t i = 1; i < reports.size(); ++i) {
    const auto& prev = reports[i - 1];
    const auto& cur = reports[i];
    if (cur.cycle != prev.cycle + 1 || cur.cycle < 3) continue;
    if (!prev.initial_delta || !cur.initial_delta || !(*prev.initial_delta > 0.0))
      continue;
    out.sigma_series.push_back(*cur.initial_delta / *prev.initial_delta);
  }
  if (out.sigma_series.empty())
    throw std::domain_error("convergence_rate: no sigma ratios available");

  const size_t tail = std::min<size_t>(5, out.sigma_series.size());
  double log_sum = 0.0;
  bool zero = false;
  for (size_t i = out.sigma_series.size() - tail; i < out.sigma_series.size();
       ++i) {
    if (out.sigma_series[i] <= 0.0)
      zero = true;
    else
      log_sum += std::log(out.sigma_series[i]);
  }
  out.sigma_tail = zero ? 0.0 : std::exp(log_sum / static_cast<double>(tail));
  return out;
}

/// Per-mode comparison of one PDE averaging cycle against the exact scalar
/// recursion. Coefficients are measured against a reference periodic
/// starting value computed on the fly, so deviations below the reference
/// accuracy are not resolvable; such coefficients count as zero instead of
/// polluting the relative measure.
struct OracleCheck {
  std::vector<double> coeff_before;
  std::vector<double> coeff_predicted;
  std::vector<double> coeff_after;
  std::vector<double> per_mode_deviation;
  double max_relative_deviation = 0.0;
  int reference_cycles = 0;
};

inline OracleCheck spectral_oracle_check(const StaggeredGrid& grid,
                                         const ThetaConfig& cfg,
                                         const ProblemSpec& prob,
                                         const FlowState& v0_init, int modes) {
  if (prob.kind != Problem::stokes)
    throw std::domain_error(
        "spectral_oracle_check: only Stokes cycles decouple by mode");
  const auto spectrum = compute_stokes_spectrum(grid, prob.nu, modes);

  const double ref_tol = 1e-12;
  const RunResult ref = averaging_iterate(grid, cfg, prob, grid.make_state(),
                                          ref_tol, 200);
  if (!ref.converged)
    throw SolverError("spectral_oracle_check: reference state did not settle");

  FlowState start = v0_init;
  apply_boundary(start, grid, prob.data, v0_init.time);
  FlowState e0 = start;
  state_axpy(e0, -1.0, ref.final_state);

  const RunResult one =
      averaging_iterate(grid, cfg, prob, start, 1e-299, 1);
  FlowState e1 = one.final_state;
  state_axpy(e1, -1.0, ref.final_state);

  OracleCheck out;
  out.reference_cycles = ref.cycles_used;
  const double noise = 10.0 * ref_tol *
                       std::max(1.0, norm_velocity(grid, ref.final_state));
  for (const auto& mode : spectrum) {
    const double c0 = dot_velocity(grid, e0, mode.omega);
    const double c1 = dot_velocity(grid, e1, mode.omega);
    const double predicted =
        simulate_mode_scheme(ModeParams{mode.lambda, prob.nu, cfg.period},
                             DiscreteSchemeParams{cfg.steps, cfg.theta}, c0, 1,
                             CycleMethod::averaging)
            .back();
    const double num = std::abs(c1 - predicted);
    const double dev =
        (num <= noise && std::abs(c0) <= noise) ? 0.0
                                                : num / std::max(std::abs(c0),
                                                                 noise);
    out.coeff_before.push_back(c0);
    out.coeff_predicted.push_back(predicted);
    out.coeff_after.push_back(c1);
    out.per_mode_deviation.push_back(dev);
    out.max_relative_deviation = std::max(out.max_relative_deviation, dev);
  }
  return out;
}

/// Per-cycle CSV rows in the column contract shared with the bench
/// drivers. Optional fields are left empty; the caller owns any header
/// comment lines.
inline void write_cycle_csv(std::ostream& out, const RunResult& result) {
  out << "method,cycle,periodicity_error,initial_delta,sigma,update_norm,"
         "wall_ms\n";
  char buf[512];
  for (const auto& r : result.reports) {
    auto opt = [](const std::optional<double>& x) {
      if (!x) return std::string();
      char b[64];
      std::snprintf(b, sizeof(b), "%.17g", *x);
      return std::string(b);
    };
    std::snprintf(buf, sizeof(buf), "%s,%d,%.17g,%s,%s,%s,%.3f\n",
                  method_name(result.method), r.cycle, r.periodicity_error,
                  opt(r.initial_delta).c_str(), opt(r.sigma).c_str(),
                  opt(r.update_norm).c_str(), r.wall_ms);
    out << buf;
  }
}

}  // namespace pflow
