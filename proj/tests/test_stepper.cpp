#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "pflow/grid.hpp"
#include "pflow/mode_model.hpp"
#include "pflow/operators.hpp"
#include "pflow/saddle.hpp"
#include "pflow/spectrum.hpp"
#include "pflow/stepper.hpp"

using Catch::Approx;
using namespace pflow;

namespace {

FlowState random_interior(const StaggeredGrid& g, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  FlowState s = g.make_state();
  const auto ub = g.u_interior();
  for (int i = ub.i0; i <= ub.i1; ++i)
    for (int j = ub.j0; j <= ub.j1; ++j) s.u(i, j) = dist(gen);
  const auto vb = g.v_interior();
  for (int i = vb.i0; i <= vb.i1; ++i)
    for (int j = vb.j0; j <= vb.j1; ++j) s.v(i, j) = dist(gen);
  apply_boundary(s, g, BoundarySpec{}, 0.0);
  return s;
}

// The square scenario forcing: a fixed tangential shear profile times a
// periodic amplitude.
BoundarySpec tanh_forcing(double L, double period) {
  BoundarySpec data;
  data.forcing = [L, period](double, double y, double t) {
    return std::array<double, 2>{
        std::tanh(y) / (L * period) *
            std::sin(2.0 * std::numbers::pi * t / period),
        0.0};
  };
  return data;
}

// Discrete stationary Navier-Stokes solution for time-independent data,
// via full Newton on the assembled saddle system.
FlowState stationary_state(const StaggeredGrid& g, double nu,
                           const BoundarySpec& data) {
  const SpMat B = assemble_divergence(g);
  const SpMat K = assemble_diffusion(g, nu);
  const Eigen::VectorXd wv = velocity_weights(g);
  const Eigen::VectorXd wp = pressure_weights(g);
  const Eigen::VectorXd bf =
      wv.cwiseProduct(pack_velocity(g, sample_forcing(g, data, 0.0)));
  const int nv = g.n_velocity(), np = g.n_p();

  FlowState x = g.make_state();
  Eigen::VectorXd p = Eigen::VectorXd::Zero(np);
  SaddleFactorization fact;
  for (int it = 0; it < 30; ++it) {
    Eigen::VectorXd R(nv + np + 1);
    R.head(nv) =
        wv.cwiseProduct(pack_velocity(g, laplacian(x, g, nu)) +
                        pack_velocity(g, advect(x, x, g))) -
        bf;
    Field2 pf(0, g.n1() - 1, 0, g.n2() - 1);
    const auto cb = g.cells();
    for (int i = cb.i0; i <= cb.i1; ++i)
      for (int j = cb.j0; j <= cb.j1; ++j) pf(i, j) = p[g.pi(i, j)];
    R.head(nv) += wv.cwiseProduct(pack_velocity(g, gradient(pf, g)));
    const Field2 div = divergence(x, g);
    for (int i = cb.i0; i <= cb.i1; ++i)
      for (int j = cb.j0; j <= cb.j1; ++j)
        R[nv + g.pi(i, j)] = g.wp(i, j) * div(i, j);
    R[nv + np] = wp.dot(p);
    if (R.norm() <= 1e-13 * std::max(bf.norm(), 1.0)) break;

    fact.factorize(g, SpMat(K + assemble_advection_jacobian(g, x)), B);
    const Eigen::VectorXd delta = fact.solve(-R);
    FlowState dstate = g.make_state();
    unpack_velocity(g, delta.head(nv), dstate);
    apply_boundary(dstate, g, BoundarySpec{}, 0.0);
    state_axpy(x, 1.0, dstate);
    p += delta.segment(nv, np);
  }
  const auto cb = g.cells();
  for (int i = cb.i0; i <= cb.i1; ++i)
    for (int j = cb.j0; j <= cb.j1; ++j) x.p(i, j) = p[g.pi(i, j)];
  return x;
}

}  // namespace

TEST_CASE("rest stays at rest without data") {
  for (auto kind : {Problem::stokes, Problem::navier_stokes}) {
    StaggeredGrid g(GridSpec::rectangle(2.0, 8, 8));
    ThetaStepper stepper(g, ThetaConfig{}, ProblemSpec{kind, 0.1, {}});
    const CycleTrace trace = stepper.run_cycle(g.make_state());
    CHECK(norm_velocity(g, trace.vN) == 0.0);
    CHECK(norm_velocity(g, trace.avg) == 0.0);
    CHECK(trace.newton_iterations_total == 0);
    CHECK(trace.per_step_divergence_max == 0.0);
  }
}

TEST_CASE("per-step decay of eigenmodes matches the scalar factor") {
  StaggeredGrid g(GridSpec::rectangle(2.0, 16, 16));
  const double nu = 0.1, period = 1.0;
  const int steps = 20;
  const auto modes = compute_stokes_spectrum(g, nu, 5);

  for (double theta : {0.5, theta_shifted(steps)}) {
    ThetaConfig cfg;
    cfg.steps = steps;
    cfg.theta = theta;
    cfg.period = period;
    ThetaStepper stepper(g, cfg, ProblemSpec{Problem::stokes, nu, {}});

    for (int m : {0, 4}) {
      const FlowState& omega = modes[m].omega;
      const double lambda = modes[m].lambda;

      const FlowState v1 = stepper.step(omega, period / steps);
      const double q_step = mode_forward_factor(
          ModeParams{lambda, nu, period / steps}, DiscreteSchemeParams{1, theta});
      CHECK(dot_velocity(g, v1, omega) == Approx(q_step).epsilon(1e-9));

      const CycleTrace trace = stepper.run_cycle(omega);
      const double q_cycle = mode_forward_factor(
          ModeParams{lambda, nu, period}, DiscreteSchemeParams{steps, theta});
      CHECK(dot_velocity(g, trace.vN, omega) ==
            Approx(q_cycle).epsilon(1e-9));
      // Eigen-directions are invariant: nothing leaks into other modes.
      const double other = dot_velocity(g, trace.vN, modes[m == 0 ? 2 : 1].omega);
      CHECK(std::abs(other) < 1e-10);
    }
  }
}

TEST_CASE("forced single mode follows the blended scalar recursion") {
  StaggeredGrid g(GridSpec::rectangle(2.0, 16, 16));
  const double nu = 0.1, period = 1.0, L = 2.0;
  const int steps = 20;
  const double theta = 0.5;
  const auto modes = compute_stokes_spectrum(g, nu, 1);
  const FlowState omega = modes[0].omega;
  const double lambda = modes[0].lambda;
  const double c0 = 0.7 * nu * lambda;
  const double h1 = g.h1(), h2 = g.h2();

  // The forcing is c(t) times the discrete eigenmode itself, recovered at
  // the stepper's sampling points by snapping coordinates back to faces.
  ProblemSpec prob{Problem::stokes, nu, {}};
  prob.data.forcing = [&, c0](double x, double y,
                              double t) -> std::array<double, 2> {
    const double c = c0 * std::sin(2.0 * std::numbers::pi * t / period);
    const double ix = (x + L) / h1, jy = (y + L) / h2;
    if (std::abs(ix - std::round(ix)) < 0.25) {
      const int i = static_cast<int>(std::lround(ix));
      const int j = static_cast<int>(std::lround(jy - 0.5));
      return {c * omega.u(i, j), 0.0};
    }
    const int i = static_cast<int>(std::lround(ix - 0.5));
    const int j = static_cast<int>(std::lround(jy));
    return {0.0, c * omega.v(i, j)};
  };

  ThetaConfig cfg;
  cfg.steps = steps;
  cfg.theta = theta;
  cfg.period = period;
  ThetaStepper stepper(g, cfg, prob);

  auto amp = [&](double t) {
    return c0 * std::sin(2.0 * std::numbers::pi * t / period);
  };
  const double k = period / steps;
  double e = 0.0;
  FlowState v = g.make_state();
  for (int n = 1; n <= steps; ++n) {
    const double t_prev = (n - 1) * k, t_next = n * k;
    v = stepper.step(v, t_next);
    e = (e * (1.0 / k - nu * lambda * (1.0 - theta)) +
         (1.0 - theta) * amp(t_prev) + theta * amp(t_next)) /
        (1.0 / k + nu * lambda * theta);
    CHECK(dot_velocity(g, v, omega) == Approx(e).margin(1e-9));
  }
}

TEST_CASE("difference of two runs contracts step by step") {
  StaggeredGrid g(GridSpec::rectangle(2.0, 12, 12));
  ThetaConfig cfg;
  cfg.steps = 15;
  ThetaStepper s1(g, cfg, ProblemSpec{Problem::stokes, 0.1, tanh_forcing(2.0, 1.0)});
  ThetaStepper s2(g, cfg, ProblemSpec{Problem::stokes, 0.1, tanh_forcing(2.0, 1.0)});
  FlowState a = random_interior(g, 4);
  FlowState b = random_interior(g, 9);
  double gap = diff_norm_velocity(g, a, b);
  const double k = cfg.dt();
  for (int n = 1; n <= cfg.steps; ++n) {
    a = s1.step(a, n * k);
    b = s2.step(b, n * k);
    const double next_gap = diff_norm_velocity(g, a, b);
    CHECK(next_gap <= gap * (1.0 + 1e-12));
    gap = next_gap;
  }
}

TEST_CASE("homogeneous runs dissipate monotonically") {
  StaggeredGrid g(GridSpec::rectangle(1.5, 10, 10));
  for (double theta : {0.5, 0.8, 1.0}) {
    ThetaConfig cfg;
    cfg.steps = 12;
    cfg.theta = theta;
    ThetaStepper stepper(g, cfg, ProblemSpec{Problem::stokes, 0.2, {}});
    FlowState v = random_interior(g, 31);
    double norm = norm_velocity(g, v);
    for (int n = 1; n <= cfg.steps; ++n) {
      v = stepper.step(v, n * cfg.dt());
      const double next = norm_velocity(g, v);
      CHECK(next <= norm * (1.0 + 1e-12));
      norm = next;
    }
  }
}

TEST_CASE("cycle map is affine in the initial state") {
  StaggeredGrid g(GridSpec::rectangle(2.0, 12, 12));
  ThetaConfig cfg;
  cfg.steps = 10;
  ThetaStepper stepper(g, cfg,
                       ProblemSpec{Problem::stokes, 0.1, tanh_forcing(2.0, 1.0)});
  const FlowState a = random_interior(g, 41);
  const FlowState b = random_interior(g, 42);
  FlowState mid = g.make_state();
  state_axpy(mid, 0.5, a);
  state_axpy(mid, 0.5, b);

  const CycleTrace ta = stepper.run_cycle(a);
  const CycleTrace tb = stepper.run_cycle(b);
  const CycleTrace tm = stepper.run_cycle(mid);

  FlowState expect = g.make_state();
  state_axpy(expect, 0.5, ta.vN);
  state_axpy(expect, 0.5, tb.vN);
  CHECK(diff_norm_velocity(g, tm.vN, expect) <
        1e-10 * std::max(1.0, norm_velocity(g, expect)));

  FlowState expect_avg = g.make_state();
  state_axpy(expect_avg, 0.5, ta.avg);
  state_axpy(expect_avg, 0.5, tb.avg);
  CHECK(diff_norm_velocity(g, tm.avg, expect_avg) <
        1e-10 * std::max(1.0, norm_velocity(g, expect_avg)));
}

TEST_CASE("stationary data makes the cycle a fixed point") {
  StaggeredGrid g(GridSpec::rectangle(1.5, 12, 12));
  BoundarySpec data;
  data.forcing = [](double, double y, double) {
    return std::array<double, 2>{std::tanh(y), 0.0};
  };
  const FlowState star = stationary_state(g, 0.2, data);
  REQUIRE(norm_velocity(g, star) > 0.01);

  struct Variant {
    int steps;
    double theta;
  };
  for (const auto& var : {Variant{6, 0.77}, Variant{11, 0.5}}) {
    ThetaConfig cfg;
    cfg.steps = var.steps;
    cfg.theta = var.theta;
    cfg.period = 0.9;
    ThetaStepper stepper(g, cfg,
                         ProblemSpec{Problem::navier_stokes, 0.2, data});
    const CycleTrace trace = stepper.run_cycle(star);
    const double scale = norm_velocity(g, star);
    CHECK(diff_norm_velocity(g, trace.vN, star) < 1e-9 * scale);
    CHECK(diff_norm_velocity(g, trace.avg, star) < 1e-9 * scale);
    CHECK(trace.per_step_divergence_max < 1e-9);
  }
}

TEST_CASE("nonlinear cycle keeps states divergence-free") {
  StaggeredGrid g(GridSpec::rectangle(2.0, 16, 16));
  ThetaConfig cfg;
  cfg.steps = 20;
  ThetaStepper stepper(
      g, cfg, ProblemSpec{Problem::navier_stokes, 0.1, tanh_forcing(2.0, 1.0)});
  const CycleTrace trace = stepper.run_cycle(g.make_state());
  CHECK(trace.per_step_divergence_max < 1e-9);
  CHECK(norm_velocity(g, trace.vN) > 0.0);
  CHECK(trace.newton_iterations_total >= cfg.steps);
}

TEST_CASE("rotating ring boundary drives a clean nonlinear cycle") {
  StaggeredGrid g(GridSpec::annulus(0.5, 5.0, 16, 24));
  const double R = 5.0, period = 1.0;
  BoundarySpec data;
  data.velocity = [R, period](double x, double y,
                              double t) -> std::array<double, 2> {
    const double w = 2.0 * std::numbers::pi * t / period;
    if (std::hypot(x, y) < 0.5 * (0.5 + R))
      return {0.5 * std::cos(w), 0.5 * std::sin(w)};
    return {std::sin(w) / (2.0 * R) * -y, std::sin(w) / (2.0 * R) * x};
  };
  ThetaConfig cfg;
  cfg.steps = 20;
  ThetaStepper stepper(g, cfg, ProblemSpec{Problem::navier_stokes, 0.5, data});

  FlowState v = g.make_state();
  apply_boundary(v, g, data, 0.0);
  double divmax = 0.0;
  for (int n = 1; n <= 3; ++n) {
    v = stepper.step(v, n * cfg.dt());
    const Field2 div = divergence(v, g);
    for (double d : div.raw()) divmax = std::max(divmax, std::abs(d));
    // Boundary faces carry the prescribed radial data exactly.
    const double w = 2.0 * std::numbers::pi * (n * cfg.dt()) / period;
    for (int j : {0, 5, 11}) {
      const double tc = g.theta_c(j);
      const double want =
          0.5 * std::cos(w) * std::cos(tc) + 0.5 * std::sin(w) * std::sin(tc);
      CHECK(v.u(0, j) == Approx(want).margin(1e-14));
    }
  }
  CHECK(divmax < 1e-9);
  CHECK(norm_velocity(g, v) > 0.1);
}

TEST_CASE("newton failure reports its residual trail") {
  StaggeredGrid g(GridSpec::rectangle(2.0, 10, 10));
  BoundarySpec data;
  data.forcing = [](double, double y, double) {
    return std::array<double, 2>{50.0 * std::tanh(y), 0.0};
  };
  ThetaConfig cfg;
  cfg.steps = 1;
  cfg.period = 5.0;
  cfg.newton_max_iter = 2;
  ThetaStepper stepper(g, cfg, ProblemSpec{Problem::navier_stokes, 0.005, data});
  try {
    stepper.run_cycle(g.make_state());
    FAIL("expected a step error");
  } catch (const StepError& err) {
    CHECK(err.step_index == 1);
    CHECK(err.residual_history.size() >= 2);
    CHECK(std::string(err.what()).find("step 1") != std::string::npos);
  }
}

TEST_CASE("per-step diagnostics stream is well formed") {
  StaggeredGrid g(GridSpec::rectangle(2.0, 8, 8));
  ThetaConfig cfg;
  cfg.steps = 7;
  ThetaStepper stepper(g, cfg,
                       ProblemSpec{Problem::stokes, 0.1, tanh_forcing(2.0, 1.0)});
  std::ostringstream diag;
  stepper.run_cycle(random_interior(g, 2), &diag);
  const std::string text = diag.str();
  CHECK(text.substr(0, 42) == "step,time,newton_iterations,divergence_max");
  CHECK(std::count(text.begin(), text.end(), '\n') == cfg.steps + 1);
}

TEST_CASE("integrator configuration is validated") {
  StaggeredGrid g(GridSpec::rectangle(2.0, 8, 8));
  auto must_throw = [&](ThetaConfig cfg) {
    CHECK_THROWS_AS(ThetaStepper(g, cfg, ProblemSpec{}), std::domain_error);
  };
  ThetaConfig bad;
  bad.steps = 0;
  must_throw(bad);
  bad = {};
  bad.theta = 0.49;
  must_throw(bad);
  bad = {};
  bad.theta = 1.01;
  must_throw(bad);
  bad = {};
  bad.period = 0.0;
  must_throw(bad);
  bad = {};
  bad.newton_tol = 0.0;
  must_throw(bad);
  bad = {};
  bad.newton_max_iter = 0;
  must_throw(bad);
  CHECK_THROWS_AS(ThetaStepper(g, ThetaConfig{}, ProblemSpec{Problem::stokes, -0.1, {}}),
                  std::domain_error);
}
