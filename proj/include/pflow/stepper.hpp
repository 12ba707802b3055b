#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pflow/grid.hpp"
#include "pflow/operators.hpp"
#include "pflow/saddle.hpp"

namespace pflow {

enum class Problem { stokes, navier_stokes };

/// Implicit one-step integrator parameters. theta = 1/2 is the trapezoidal
/// rule; theta = 1/2 + 1/(2 steps) recovers the shifted variant whose
/// per-cycle decay factor stays bounded away from -1 for stiff modes.
struct ThetaConfig {
  int steps = 20;
  double theta = 0.5;
  double period = 1.0;
  double newton_tol = 1e-12;
  int newton_max_iter = 20;

  double dt() const { return period / steps; }
  void validate() const {
    if (steps < 1) throw std::domain_error("ThetaConfig: steps must be >= 1");
    if (!(theta >= 0.5 && theta <= 1.0))
      throw std::domain_error("ThetaConfig: theta must lie in [1/2, 1]");
    if (!(period > 0.0))
      throw std::domain_error("ThetaConfig: period must be positive");
    if (!(newton_tol > 0.0))
      throw std::domain_error("ThetaConfig: newton_tol must be positive");
    if (newton_max_iter < 1)
      throw std::domain_error("ThetaConfig: newton_max_iter must be >= 1");
  }
};

/// What is being integrated: which momentum nonlinearity, the viscosity,
/// and the scenario's boundary velocity and body forcing.
struct ProblemSpec {
  Problem kind = Problem::stokes;
  double nu = 0.1;
  BoundarySpec data;
};

/// Newton failed to reach the tolerance; carries the relative residual of
/// every attempted iterate. step_index is filled in by run_cycle.
struct StepError : std::runtime_error {
  StepError(const std::string& what, std::vector<double> history)
      : std::runtime_error(what), residual_history(std::move(history)) {}
  std::vector<double> residual_history;
  int step_index = -1;
};

/// Result of integrating one period: endpoint states, the running
/// discrete time averages, and solver diagnostics.
struct CycleTrace {
  FlowState v0, vN, avg;
  double per_step_divergence_max = 0.0;
  long newton_iterations_total = 0;
};

/// Adds alpha times the velocity planes of x (ghosts included) into y,
/// leaving pressures alone. Accumulating ghosts keeps the running average
/// encoded like any other state: its ghosts mirror the averaged boundary
/// data, which is exactly what the linearized update solver expects.
inline void axpy_velocity(FlowState& y, double alpha, const FlowState& x) {
  if (!y.u.same_shape(x.u) || !y.v.same_shape(x.v))
    throw std::domain_error("axpy_velocity: shape mismatch");
  for (size_t k = 0; k < y.u.raw().size(); ++k)
    y.u.raw()[k] += alpha * x.u.raw()[k];
  for (size_t k = 0; k < y.v.raw().size(); ++k)
    y.v.raw()[k] += alpha * x.v.raw()[k];
}

/// Samples the scenario forcing at interior face centers, projecting the
/// Cartesian vector onto face normals on the annulus.
inline FlowState sample_forcing(const StaggeredGrid& grid,
                                const BoundarySpec& data, double t) {
  FlowState f = grid.make_state();
  f.time = t;
  const auto ub = grid.u_interior();
  for (int i = ub.i0; i <= ub.i1; ++i)
    for (int j = ub.j0; j <= ub.j1; ++j) {
      const auto [x, y] = grid.u_face_xy(i, j);
      const auto g = data.forcing(x, y, t);
      if (grid.is_rectangle()) {
        f.u(i, j) = g[0];
      } else {
        const double th = grid.theta_c(j);
        f.u(i, j) = g[0] * std::cos(th) + g[1] * std::sin(th);
      }
    }
  const auto vb = grid.v_interior();
  for (int i = vb.i0; i <= vb.i1; ++i)
    for (int j = vb.j0; j <= vb.j1; ++j) {
      const auto [x, y] = grid.v_face_xy(i, j);
      const auto g = data.forcing(x, y, t);
      if (grid.is_rectangle()) {
        f.v(i, j) = g[1];
      } else {
        const double th = grid.theta_f(j);
        f.v(i, j) = -g[0] * std::sin(th) + g[1] * std::cos(th);
      }
    }
  return f;
}

/// theta-scheme integrator for one scenario on one grid. Owns a saddle
/// factorization that is built once for Stokes and refreshed on demand for
/// Navier-Stokes (the Jacobian is chorded across iterations and steps until
/// Newton contraction degrades, since refactorization dwarfs a solve).
class ThetaStepper {
 public:
  ThetaStepper(const StaggeredGrid& grid, const ThetaConfig& config,
               ProblemSpec problem)
      : grid_(&grid),
        cfg_(config),
        prob_(std::move(problem)),
        wv_(velocity_weights(grid)),
        wp_(pressure_weights(grid)),
        K_(assemble_diffusion(grid, problemNu(prob_))),
        B_(assemble_divergence(grid)) {
    cfg_.validate();
    std::vector<detail::Trip> trips;
    trips.reserve(wv_.size());
    for (int k = 0; k < wv_.size(); ++k) trips.emplace_back(k, k, wv_[k]);
    Wdiag_.resize(wv_.size(), wv_.size());
    Wdiag_.setFromTriplets(trips.begin(), trips.end());
    if (prob_.kind == Problem::stokes) refactor(nullptr);
  }

  const ThetaConfig& config() const { return cfg_; }
  const ProblemSpec& problem() const { return prob_; }

  /// Advances `prev` (a consistent state at t_next - dt) to t_next.
  FlowState step(const FlowState& prev, double t_next) {
    int iters = 0;
    double divmax = 0.0;
    return step_impl(prev, t_next, iters, divmax);
  }

  /// N steps across one period starting at `start.time`, accumulating the
  /// weighted velocity average (k/P) sum of (1-theta) v_{n-1} + theta v_n
  /// and the plain pressure average. Optional per-step diagnostics CSV.
  CycleTrace run_cycle(const FlowState& start,
                       std::ostream* diagnostics = nullptr) {
    const StaggeredGrid& grid = *grid_;
    grid.require_match(start);
    CycleTrace trace;
    trace.v0 = start;
    apply_boundary(trace.v0, grid, prob_.data, start.time);

    FlowState cur = trace.v0;
    FlowState avg = grid.make_state();
    const double k = cfg_.dt(), period = cfg_.period, th = cfg_.theta;
    if (diagnostics)
      *diagnostics << "step,time,newton_iterations,divergence_max\n";

    for (int n = 1; n <= cfg_.steps; ++n) {
      const double t_next =
          start.time + (n == cfg_.steps ? period : n * k);
      int iters = 0;
      double divmax = 0.0;
      FlowState next;
      try {
        next = step_impl(cur, t_next, iters, divmax);
      } catch (StepError& err) {
        std::ostringstream msg;
        msg << err.what() << " at step " << n << " of " << cfg_.steps;
        StepError annotated(msg.str(), err.residual_history);
        annotated.step_index = n;
        throw annotated;
      }
      axpy_velocity(avg, (k / period) * (1.0 - th), cur);
      axpy_velocity(avg, (k / period) * th, next);
      for (size_t m = 0; m < avg.p.raw().size(); ++m)
        avg.p.raw()[m] += (k / period) * next.p.raw()[m];

      trace.per_step_divergence_max =
          std::max(trace.per_step_divergence_max, divmax);
      trace.newton_iterations_total += iters;
      if (diagnostics) {
        char row[96];
        std::snprintf(row, sizeof row, "%d,%.17g,%d,%.17g\n", n, t_next,
                      iters, divmax);
        *diagnostics << row;
      }
      cur = std::move(next);
    }
    avg.time = trace.v0.time;
    trace.avg = std::move(avg);
    trace.vN = std::move(cur);
    return trace;
  }

 private:
  static double problemNu(const ProblemSpec& p) {
    if (!(p.nu > 0.0))
      throw std::domain_error("ProblemSpec: nu must be positive");
    return p.nu;
  }

  /// (Re)builds and factors the step Jacobian W/k + theta (K + C(lin));
  /// lin == nullptr omits the transport block.
  void refactor(const FlowState* lin) {
    SpMat A = SpMat((1.0 / cfg_.dt()) * Wdiag_ + cfg_.theta * K_);
    if (lin)
      A = SpMat(A + cfg_.theta * assemble_advection_jacobian(*grid_, *lin));
    fact_.factorize(*grid_, A, B_);
  }

  /// Weighted residual of the implicit step equations at iterate (v, p):
  /// momentum rows, continuity rows, and the pressure-gauge row.
  Eigen::VectorXd residual(const FlowState& v, const Eigen::VectorXd& p,
                           const Eigen::VectorXd& prev_over_k,
                           const Eigen::VectorXd& explicit_part) const {
    const StaggeredGrid& grid = *grid_;
    const int nv = grid.n_velocity(), np = grid.n_p();
    Eigen::VectorXd R(nv + np + 1);

    Eigen::VectorXd mom =
        pack_velocity(grid, v) / cfg_.dt() - prev_over_k + explicit_part +
        cfg_.theta * pack_velocity(grid, laplacian(v, grid, prob_.nu));
    if (prob_.kind == Problem::navier_stokes)
      mom += cfg_.theta * pack_velocity(grid, advect(v, v, grid));
    R.head(nv) = wv_.cwiseProduct(mom);

    Field2 pf(0, grid.n1() - 1, 0, grid.n2() - 1);
    const auto cb = grid.cells();
    for (int i = cb.i0; i <= cb.i1; ++i)
      for (int j = cb.j0; j <= cb.j1; ++j) pf(i, j) = p[grid.pi(i, j)];
    R.head(nv) += wv_.cwiseProduct(pack_velocity(grid, gradient(pf, grid)));

    const Field2 div = divergence(v, grid);
    for (int i = cb.i0; i <= cb.i1; ++i)
      for (int j = cb.j0; j <= cb.j1; ++j)
        R[nv + grid.pi(i, j)] = grid.wp(i, j) * div(i, j);
    R[nv + np] = wp_.dot(p);
    return R;
  }

  FlowState step_impl(const FlowState& prev, double t_next, int& iters,
                      double& divmax) {
    const StaggeredGrid& grid = *grid_;
    grid.require_match(prev);
    const int nv = grid.n_velocity(), np = grid.n_p();
    const double k = cfg_.dt(), th = cfg_.theta;
    const double t_prev = t_next - k;
    const bool nse = prob_.kind == Problem::navier_stokes;

    // Data frozen for the whole step: the previous state's contribution
    // and the blended forcing.
    const Eigen::VectorXd prev_vec = pack_velocity(grid, prev);
    const Eigen::VectorXd prev_over_k = prev_vec / k;
    Eigen::VectorXd explicit_part =
        (1.0 - th) * pack_velocity(grid, laplacian(prev, grid, prob_.nu));
    if (nse)
      explicit_part +=
          (1.0 - th) * pack_velocity(grid, advect(prev, prev, grid));
    const Eigen::VectorXd fb =
        (1.0 - th) *
            pack_velocity(grid, sample_forcing(grid, prob_.data, t_prev)) +
        th * pack_velocity(grid, sample_forcing(grid, prob_.data, t_next));
    explicit_part -= fb;

    FlowState v = prev;
    v.time = t_next;
    apply_boundary(v, grid, prob_.data, t_next);
    Eigen::VectorXd p(np);
    const auto cb = grid.cells();
    for (int i = cb.i0; i <= cb.i1; ++i)
      for (int j = cb.j0; j <= cb.j1; ++j)
        p[grid.pi(i, j)] = prev.p.empty() ? 0.0 : prev.p(i, j);

    std::vector<double> history;
    Eigen::VectorXd R = residual(v, p, prev_over_k, explicit_part);
    double rnorm = R.norm();
    // Reference scale for the relative test. The data terms keep warm
    // starts near a cyclic state cheap; the initial residual covers runs
    // driven purely through the boundary, where the packed interior data
    // vanish.
    const double ref = std::max(
        {(wv_.cwiseProduct(prev_vec) / k).norm() +
             wv_.cwiseProduct(fb).norm(),
         rnorm, 1e-300});
    history.push_back(rnorm / ref);
    int refreshes = 0;

    for (int it = 0; history.back() > cfg_.newton_tol; ++it) {
      if (it >= cfg_.newton_max_iter)
        throw StepError("Newton did not reach tolerance", history);
      if (!fact_.ready()) {
        refactor(nse ? &v : nullptr);
      } else if (nse && history.size() >= 2 &&
                 history.back() > 0.5 * history[history.size() - 2] &&
                 refreshes < 3) {
        refactor(&v);
        ++refreshes;
      }

      const Eigen::VectorXd delta = fact_.solve(-R);
      FlowState dstate = grid.make_state();
      unpack_velocity(grid, delta.head(nv), dstate);
      apply_boundary(dstate, grid, BoundarySpec{}, t_next);

      bool accepted = false;
      for (int halve = 0; halve <= 6 && !accepted; ++halve) {
        const double alpha = std::ldexp(1.0, -halve);
        FlowState vt = v;
        state_axpy(vt, alpha, dstate);
        const Eigen::VectorXd pt = p + alpha * delta.segment(nv, np);
        Eigen::VectorXd Rt = residual(vt, pt, prev_over_k, explicit_part);
        const double rt = Rt.norm();
        if (rt < rnorm || rt / ref <= cfg_.newton_tol) {
          v = std::move(vt);
          p = pt;
          R = std::move(Rt);
          rnorm = rt;
          accepted = true;
        }
      }
      if (!accepted) {
        if (nse && refreshes < 3) {
          refactor(&v);
          ++refreshes;
          continue;
        }
        throw StepError("Newton line search stalled", history);
      }
      ++iters;
      history.push_back(rnorm / ref);
    }

    const Field2 div = divergence(v, grid);
    divmax = 0.0;
    for (double d : div.raw()) divmax = std::max(divmax, std::abs(d));
    if (divmax > 1e-8)
      throw StepError("incompressibility lost after the step", history);

    for (int i = cb.i0; i <= cb.i1; ++i)
      for (int j = cb.j0; j <= cb.j1; ++j) v.p(i, j) = p[grid.pi(i, j)];
    return v;
  }

  const StaggeredGrid* grid_;
  ThetaConfig cfg_;
  ProblemSpec prob_;
  Eigen::VectorXd wv_, wp_;
  SpMat K_, B_, Wdiag_;
  SaddleFactorization fact_;
};

}  // namespace pflow
