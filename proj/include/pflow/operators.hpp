#pragma once

// Matrix-free discrete operators on the staggered layout: divergence,
// convection, diffusion, pressure gradient, and the weighted inner
// products. These are the reference implementations; the sparse assemblies
// in saddle.hpp must agree with them entry for entry, which the tests
// check by applying both to random fields.

#include <cmath>
#include <stdexcept>

#include "pflow/grid.hpp"

namespace pflow {

/// Centered discrete divergence at cell centers; polar form
/// (1/rho) d(rho u)/drho + (1/rho) dv/dtheta on the annulus.
inline Field2 divergence(const FlowState& state, const StaggeredGrid& grid) {
  grid.require_match(state);
  Field2 d(0, grid.n1() - 1, 0, grid.n2() - 1);
  const auto box = grid.cells();
  const double h1 = grid.h1(), h2 = grid.h2();
  for (int i = box.i0; i <= box.i1; ++i)
    for (int j = box.j0; j <= box.j1; ++j) {
      if (grid.is_rectangle()) {
        d(i, j) = (state.u(i + 1, j) - state.u(i, j)) / h1 +
                  (state.v(i, j + 1) - state.v(i, j)) / h2;
      } else {
        const double rho = grid.rc(i);
        d(i, j) = (grid.rf(i + 1) * state.u(i + 1, j) -
                   grid.rf(i) * state.u(i, j)) /
                      (rho * h1) +
                  (state.v(i, grid.jw(j + 1)) - state.v(i, j)) / (rho * h2);
      }
    }
  return d;
}

namespace detail {

// 4-point averages moving one velocity component to the other component's
// face position.
inline double v_at_u(const FlowState& s, const StaggeredGrid& g, int i, int j) {
  return 0.25 * (s.v(i - 1, j) + s.v(i, j) + s.v(i - 1, g.jw(j + 1)) +
                 s.v(i, g.jw(j + 1)));
}
inline double u_at_v(const FlowState& s, const StaggeredGrid& g, int i, int j) {
  return 0.25 * (s.u(i, g.jw(j - 1)) + s.u(i + 1, g.jw(j - 1)) + s.u(i, j) +
                 s.u(i + 1, j));
}

}  // namespace detail

/// Discrete convection (a . grad) b at interior velocity faces, centered
/// differences, with the u_rho u_theta / rho coupling terms on the annulus.
/// Boundary faces and ghosts of the result are zero.
inline FlowState advect(const FlowState& a, const FlowState& b,
                        const StaggeredGrid& grid) {
  grid.require_match(a);
  grid.require_match(b);
  FlowState r = grid.make_state();
  r.time = b.time;
  const double h1 = grid.h1(), h2 = grid.h2();

  const auto ub = grid.u_interior();
  for (int i = ub.i0; i <= ub.i1; ++i)
    for (int j = ub.j0; j <= ub.j1; ++j) {
      const double av = detail::v_at_u(a, grid, i, j);
      const double d1 = (b.u(i + 1, j) - b.u(i - 1, j)) / (2.0 * h1);
      const double d2 =
          (b.u(i, grid.jw(j + 1)) - b.u(i, grid.jw(j - 1))) / (2.0 * h2);
      if (grid.is_rectangle()) {
        r.u(i, j) = a.u(i, j) * d1 + av * d2;
      } else {
        const double rho = grid.rf(i);
        const double bv = detail::v_at_u(b, grid, i, j);
        r.u(i, j) = a.u(i, j) * d1 + av * d2 / rho - av * bv / rho;
      }
    }

  const auto vb = grid.v_interior();
  for (int i = vb.i0; i <= vb.i1; ++i)
    for (int j = vb.j0; j <= vb.j1; ++j) {
      const double au = detail::u_at_v(a, grid, i, j);
      const double d1 = (b.v(i + 1, j) - b.v(i - 1, j)) / (2.0 * h1);
      const double d2 =
          (b.v(i, grid.jw(j + 1)) - b.v(i, grid.jw(j - 1))) / (2.0 * h2);
      if (grid.is_rectangle()) {
        r.v(i, j) = au * d1 + a.v(i, j) * d2;
      } else {
        const double rho = grid.rc(i);
        const double bu = detail::u_at_v(b, grid, i, j);
        r.v(i, j) = au * d1 + a.v(i, j) * d2 / rho + a.v(i, j) * bu / rho;
      }
    }
  return r;
}

/// Discrete -nu * (vector Laplacian of b) at interior velocity faces;
/// 5-point stencil on the rectangle, conservative radial form plus the
/// curvature/coupling terms on the annulus.
inline FlowState laplacian(const FlowState& b, const StaggeredGrid& grid,
                           double nu) {
  if (!(nu >= 0.0)) throw std::domain_error("laplacian: nu must be >= 0");
  grid.require_match(b);
  FlowState r = grid.make_state();
  r.time = b.time;
  const double h1 = grid.h1(), h2 = grid.h2();

  const auto ub = grid.u_interior();
  for (int i = ub.i0; i <= ub.i1; ++i)
    for (int j = ub.j0; j <= ub.j1; ++j) {
      if (grid.is_rectangle()) {
        const double dxx =
            (b.u(i + 1, j) - 2.0 * b.u(i, j) + b.u(i - 1, j)) / (h1 * h1);
        const double dyy =
            (b.u(i, j + 1) - 2.0 * b.u(i, j) + b.u(i, j - 1)) / (h2 * h2);
        r.u(i, j) = -nu * (dxx + dyy);
      } else {
        const double rho = grid.rf(i);
        const double rad = (grid.rc(i) * (b.u(i + 1, j) - b.u(i, j)) -
                            grid.rc(i - 1) * (b.u(i, j) - b.u(i - 1, j))) /
                           (rho * h1 * h1);
        const double ang = (b.u(i, grid.jw(j + 1)) - 2.0 * b.u(i, j) +
                            b.u(i, grid.jw(j - 1))) /
                           (rho * rho * h2 * h2);
        // d(v)/dtheta interpolated to the u face.
        const double dv_dth =
            (0.5 * (b.v(i - 1, grid.jw(j + 1)) + b.v(i, grid.jw(j + 1))) -
             0.5 * (b.v(i - 1, j) + b.v(i, j))) /
            h2;
        r.u(i, j) = -nu * (rad + ang - b.u(i, j) / (rho * rho) -
                           2.0 * dv_dth / (rho * rho));
      }
    }

  const auto vb = grid.v_interior();
  for (int i = vb.i0; i <= vb.i1; ++i)
    for (int j = vb.j0; j <= vb.j1; ++j) {
      if (grid.is_rectangle()) {
        const double dxx =
            (b.v(i + 1, j) - 2.0 * b.v(i, j) + b.v(i - 1, j)) / (h1 * h1);
        const double dyy =
            (b.v(i, j + 1) - 2.0 * b.v(i, j) + b.v(i, j - 1)) / (h2 * h2);
        r.v(i, j) = -nu * (dxx + dyy);
      } else {
        const double rho = grid.rc(i);
        const double rad = (grid.rf(i + 1) * (b.v(i + 1, j) - b.v(i, j)) -
                            grid.rf(i) * (b.v(i, j) - b.v(i - 1, j))) /
                           (rho * h1 * h1);
        const double ang = (b.v(i, grid.jw(j + 1)) - 2.0 * b.v(i, j) +
                            b.v(i, grid.jw(j - 1))) /
                           (rho * rho * h2 * h2);
        // d(u)/dtheta interpolated to the v face.
        const double du_dth =
            (0.5 * (b.u(i, j) + b.u(i + 1, j)) -
             0.5 * (b.u(i, grid.jw(j - 1)) + b.u(i + 1, grid.jw(j - 1)))) /
            h2;
        r.v(i, j) = -nu * (rad + ang - b.v(i, j) / (rho * rho) +
                           2.0 * du_dth / (rho * rho));
      }
    }
  return r;
}

/// Discrete pressure gradient at interior velocity faces (the exact
/// negative transpose of `divergence` under the quadrature weights).
inline FlowState gradient(const Field2& p, const StaggeredGrid& grid) {
  FlowState r = grid.make_state();
  if (!p.same_shape(r.p))
    throw std::domain_error("gradient: pressure array does not match grid");
  const auto ub = grid.u_interior();
  for (int i = ub.i0; i <= ub.i1; ++i)
    for (int j = ub.j0; j <= ub.j1; ++j)
      r.u(i, j) = (p(i, j) - p(i - 1, j)) / grid.h1();
  const auto vb = grid.v_interior();
  for (int i = vb.i0; i <= vb.i1; ++i)
    for (int j = vb.j0; j <= vb.j1; ++j) {
      const double h = grid.is_rectangle() ? grid.h2() : grid.rc(i) * grid.h2();
      r.v(i, j) = (p(i, j) - p(i, grid.jw(j - 1))) / h;
    }
  return r;
}

/// Weighted L2 inner product of two velocity fields over physical faces.
inline double dot_velocity(const StaggeredGrid& grid, const FlowState& a,
                           const FlowState& b) {
  grid.require_match(a);
  grid.require_match(b);
  double acc = 0.0;
  const auto ub = grid.u_physical();
  for (int i = ub.i0; i <= ub.i1; ++i)
    for (int j = ub.j0; j <= ub.j1; ++j)
      acc += grid.wu(i, j) * a.u(i, j) * b.u(i, j);
  const auto vb = grid.v_physical();
  for (int i = vb.i0; i <= vb.i1; ++i)
    for (int j = vb.j0; j <= vb.j1; ++j)
      acc += grid.wv(i, j) * a.v(i, j) * b.v(i, j);
  return acc;
}

/// Weighted L2 norm of a single grid array; the array kind (u faces,
/// v faces, pressure cells) is inferred from its shape.
inline double norm_l2(const Field2& field, const StaggeredGrid& grid) {
  const FlowState ref = grid.make_state();
  double acc = 0.0;
  if (field.same_shape(ref.u)) {
    const auto box = grid.u_physical();
    for (int i = box.i0; i <= box.i1; ++i)
      for (int j = box.j0; j <= box.j1; ++j)
        acc += grid.wu(i, j) * field(i, j) * field(i, j);
  } else if (field.same_shape(ref.v)) {
    const auto box = grid.v_physical();
    for (int i = box.i0; i <= box.i1; ++i)
      for (int j = box.j0; j <= box.j1; ++j)
        acc += grid.wv(i, j) * field(i, j) * field(i, j);
  } else if (field.same_shape(ref.p)) {
    const auto box = grid.cells();
    for (int i = box.i0; i <= box.i1; ++i)
      for (int j = box.j0; j <= box.j1; ++j)
        acc += grid.wp(i, j) * field(i, j) * field(i, j);
  } else {
    throw std::domain_error("norm_l2: field shape matches no grid array");
  }
  return std::sqrt(acc);
}

/// Weighted L2 norm of the velocity pair.
inline double norm_velocity(const StaggeredGrid& grid, const FlowState& s) {
  return std::sqrt(dot_velocity(grid, s, s));
}

/// || a - b ||_W over the velocity components.
inline double diff_norm_velocity(const StaggeredGrid& grid, const FlowState& a,
                                 const FlowState& b) {
  grid.require_match(a);
  grid.require_match(b);
  double acc = 0.0;
  const auto ub = grid.u_physical();
  for (int i = ub.i0; i <= ub.i1; ++i)
    for (int j = ub.j0; j <= ub.j1; ++j) {
      const double d = a.u(i, j) - b.u(i, j);
      acc += grid.wu(i, j) * d * d;
    }
  const auto vb = grid.v_physical();
  for (int i = vb.i0; i <= vb.i1; ++i)
    for (int j = vb.j0; j <= vb.j1; ++j) {
      const double d = a.v(i, j) - b.v(i, j);
      acc += grid.wv(i, j) * d * d;
    }
  return std::sqrt(acc);
}

/// y += alpha * x on every stored entry (ghosts included, so boundary
/// encodings combine consistently).
inline void state_axpy(FlowState& y, double alpha, const FlowState& x) {
  if (!y.u.same_shape(x.u) || !y.v.same_shape(x.v))
    throw std::domain_error("state_axpy: shape mismatch");
  auto& yu = y.u.raw();
  const auto& xu = x.u.raw();
  for (size_t k = 0; k < yu.size(); ++k) yu[k] += alpha * xu[k];
  auto& yv = y.v.raw();
  const auto& xv = x.v.raw();
  for (size_t k = 0; k < yv.size(); ++k) yv[k] += alpha * xv[k];
  if (!y.p.empty() && !x.p.empty() && y.p.same_shape(x.p)) {
    auto& yp = y.p.raw();
    const auto& xp = x.p.raw();
    for (size_t k = 0; k < yp.size(); ++k) yp[k] += alpha * xp[k];
  }
}

inline void state_scale(FlowState& s, double alpha) {
  for (auto* f : {&s.u, &s.v, &s.p})
    for (auto& x : f->raw()) x *= alpha;
}

}  // namespace pflow
