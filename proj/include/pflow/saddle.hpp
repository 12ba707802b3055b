#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pflow/grid.hpp"
#include "pflow/operators.hpp"

namespace pflow {

using SpMat = Eigen::SparseMatrix<double>;

/// A linear solve gave up: singular factorization or a residual above the
/// contract. Callers that can re-route (the averaging cycler) catch this.
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

/// Where an (i, j) face lands in the interior-unknown vector. Ghost
/// positions fold onto minus their mirror face (the homogeneous-data ghost
/// rule differentiated), boundary-normal faces drop: they carry data.
struct Slot {
  int index;
  double sign;
};

inline Slot resolve_u(const StaggeredGrid& g, int i, int j) {
  if (i <= 0 || i >= g.n1()) return {-1, 0.0};
  if (g.is_rectangle()) {
    if (j == -1) return {g.ui(i, 0), -1.0};
    if (j == g.n2()) return {g.ui(i, g.n2() - 1), -1.0};
  }
  return {g.ui(i, j), 1.0};
}

inline Slot resolve_v(const StaggeredGrid& g, int i, int j) {
  if (g.is_rectangle() && (j <= 0 || j >= g.n2())) return {-1, 0.0};
  if (i == -1) return {g.vi(0, j), -1.0};
  if (i == g.n1()) return {g.vi(g.n1() - 1, j), -1.0};
  return {g.vi(i, j), 1.0};
}

using Trip = Eigen::Triplet<double>;

/// Emits `coef` into column `slot` of `row`; keeps structural zeros so the
/// sparsity pattern is a function of the grid alone (factorizations can
/// then reuse their symbolic analysis across coefficient refreshes).
inline void emit(std::vector<Trip>& trips, int row, Slot slot, double coef) {
  if (slot.index >= 0) trips.emplace_back(row, slot.index, slot.sign * coef);
}

}  // namespace detail

/// Quadrature weights of the interior velocity unknowns, in packing order.
inline Eigen::VectorXd velocity_weights(const StaggeredGrid& grid) {
  Eigen::VectorXd w(grid.n_velocity());
  const auto ub = grid.u_interior();
  for (int i = ub.i0; i <= ub.i1; ++i)
    for (int j = ub.j0; j <= ub.j1; ++j) w[grid.ui(i, j)] = grid.wu(i, j);
  const auto vb = grid.v_interior();
  for (int i = vb.i0; i <= vb.i1; ++i)
    for (int j = vb.j0; j <= vb.j1; ++j) w[grid.vi(i, j)] = grid.wv(i, j);
  return w;
}

inline Eigen::VectorXd pressure_weights(const StaggeredGrid& grid) {
  Eigen::VectorXd w(grid.n_p());
  const auto cb = grid.cells();
  for (int i = cb.i0; i <= cb.i1; ++i)
    for (int j = cb.j0; j <= cb.j1; ++j) w[grid.pi(i, j)] = grid.wp(i, j);
  return w;
}

inline Eigen::VectorXd pack_velocity(const StaggeredGrid& grid,
                                     const FlowState& s) {
  grid.require_match(s);
  Eigen::VectorXd x(grid.n_velocity());
  const auto ub = grid.u_interior();
  for (int i = ub.i0; i <= ub.i1; ++i)
    for (int j = ub.j0; j <= ub.j1; ++j) x[grid.ui(i, j)] = s.u(i, j);
  const auto vb = grid.v_interior();
  for (int i = vb.i0; i <= vb.i1; ++i)
    for (int j = vb.j0; j <= vb.j1; ++j) x[grid.vi(i, j)] = s.v(i, j);
  return x;
}

/// Writes interior faces only; boundary faces and ghosts of `s` are left
/// for `apply_boundary` to refresh.
inline void unpack_velocity(const StaggeredGrid& grid, const Eigen::VectorXd& x,
                            FlowState& s) {
  grid.require_match(s);
  const auto ub = grid.u_interior();
  for (int i = ub.i0; i <= ub.i1; ++i)
    for (int j = ub.j0; j <= ub.j1; ++j) s.u(i, j) = x[grid.ui(i, j)];
  const auto vb = grid.v_interior();
  for (int i = vb.i0; i <= vb.i1; ++i)
    for (int j = vb.j0; j <= vb.j1; ++j) s.v(i, j) = x[grid.vi(i, j)];
}

/// Weighted divergence rows: B = W_p D, so that the pressure-gradient block
/// of the momentum equations is exactly -B^T.
inline SpMat assemble_divergence(const StaggeredGrid& grid) {
  std::vector<detail::Trip> trips;
  const double h1 = grid.h1(), h2 = grid.h2();
  const auto cb = grid.cells();
  for (int i = cb.i0; i <= cb.i1; ++i)
    for (int j = cb.j0; j <= cb.j1; ++j) {
      const int row = grid.pi(i, j);
      const double w = grid.wp(i, j);
      double cu_hi, cu_lo, cv;
      if (grid.is_rectangle()) {
        cu_hi = 1.0 / h1;
        cu_lo = -1.0 / h1;
        cv = 1.0 / h2;
      } else {
        cu_hi = grid.rf(i + 1) / (grid.rc(i) * h1);
        cu_lo = -grid.rf(i) / (grid.rc(i) * h1);
        cv = 1.0 / (grid.rc(i) * h2);
      }
      detail::emit(trips, row, detail::resolve_u(grid, i + 1, j), w * cu_hi);
      detail::emit(trips, row, detail::resolve_u(grid, i, j), w * cu_lo);
      detail::emit(trips, row, detail::resolve_v(grid, i, j + 1), w * cv);
      detail::emit(trips, row, detail::resolve_v(grid, i, j), w * -cv);
    }
  SpMat B(grid.n_p(), grid.n_velocity());
  B.setFromTriplets(trips.begin(), trips.end());
  B.makeCompressed();
  return B;
}

/// Weighted diffusion block W * (-nu * vector Laplacian) restricted to the
/// interior unknowns under homogeneous boundary data. Symmetric by the
/// mirror folding; positive definite for nu > 0.
inline SpMat assemble_diffusion(const StaggeredGrid& grid, double nu) {
  if (!(nu > 0.0)) throw std::domain_error("assemble_diffusion: nu must be > 0");
  std::vector<detail::Trip> trips;
  const double h1 = grid.h1(), h2 = grid.h2();

  const auto ub = grid.u_interior();
  for (int i = ub.i0; i <= ub.i1; ++i)
    for (int j = ub.j0; j <= ub.j1; ++j) {
      const int row = grid.ui(i, j);
      const double w = grid.wu(i, j);
      auto add_u = [&](int ii, int jj, double c) {
        detail::emit(trips, row, detail::resolve_u(grid, ii, jj), -nu * w * c);
      };
      auto add_v = [&](int ii, int jj, double c) {
        detail::emit(trips, row, detail::resolve_v(grid, ii, jj), -nu * w * c);
      };
      if (grid.is_rectangle()) {
        add_u(i + 1, j, 1.0 / (h1 * h1));
        add_u(i - 1, j, 1.0 / (h1 * h1));
        add_u(i, j + 1, 1.0 / (h2 * h2));
        add_u(i, j - 1, 1.0 / (h2 * h2));
        add_u(i, j, -2.0 / (h1 * h1) - 2.0 / (h2 * h2));
      } else {
        const double rho = grid.rf(i);
        const double cr_hi = grid.rc(i) / (rho * h1 * h1);
        const double cr_lo = grid.rc(i - 1) / (rho * h1 * h1);
        const double ca = 1.0 / (rho * rho * h2 * h2);
        add_u(i + 1, j, cr_hi);
        add_u(i - 1, j, cr_lo);
        add_u(i, j + 1, ca);
        add_u(i, j - 1, ca);
        add_u(i, j, -cr_hi - cr_lo - 2.0 * ca - 1.0 / (rho * rho));
        const double cc = 2.0 / (rho * rho) * 0.5 / h2;
        add_v(i - 1, j + 1, -cc);
        add_v(i, j + 1, -cc);
        add_v(i - 1, j, cc);
        add_v(i, j, cc);
      }
    }

  const auto vb = grid.v_interior();
  for (int i = vb.i0; i <= vb.i1; ++i)
    for (int j = vb.j0; j <= vb.j1; ++j) {
      const int row = grid.vi(i, j);
      const double w = grid.wv(i, j);
      auto add_u = [&](int ii, int jj, double c) {
        detail::emit(trips, row, detail::resolve_u(grid, ii, jj), -nu * w * c);
      };
      auto add_v = [&](int ii, int jj, double c) {
        detail::emit(trips, row, detail::resolve_v(grid, ii, jj), -nu * w * c);
      };
      if (grid.is_rectangle()) {
        add_v(i + 1, j, 1.0 / (h1 * h1));
        add_v(i - 1, j, 1.0 / (h1 * h1));
        add_v(i, j + 1, 1.0 / (h2 * h2));
        add_v(i, j - 1, 1.0 / (h2 * h2));
        add_v(i, j, -2.0 / (h1 * h1) - 2.0 / (h2 * h2));
      } else {
        const double rho = grid.rc(i);
        const double cr_hi = grid.rf(i + 1) / (rho * h1 * h1);
        const double cr_lo = grid.rf(i) / (rho * h1 * h1);
        const double ca = 1.0 / (rho * rho * h2 * h2);
        add_v(i + 1, j, cr_hi);
        add_v(i - 1, j, cr_lo);
        add_v(i, j + 1, ca);
        add_v(i, j - 1, ca);
        add_v(i, j, -cr_hi - cr_lo - 2.0 * ca - 1.0 / (rho * rho));
        const double cc = 2.0 / (rho * rho) * 0.5 / h2;
        add_u(i, j, cc);
        add_u(i + 1, j, cc);
        add_u(i, j - 1, -cc);
        add_u(i + 1, j - 1, -cc);
      }
    }

  SpMat K(grid.n_velocity(), grid.n_velocity());
  K.setFromTriplets(trips.begin(), trips.end());
  K.makeCompressed();
  return K;
}

/// Weighted Jacobian of w -> advect(avg, w) + advect(w, avg) at the frozen
/// field `avg` (whose ghosts must already encode its boundary data). The
/// structural pattern is independent of `avg`.
inline SpMat assemble_advection_jacobian(const StaggeredGrid& grid,
                                         const FlowState& avg) {
  grid.require_match(avg);
  std::vector<detail::Trip> trips;
  const double h1 = grid.h1(), h2 = grid.h2();

  const auto ub = grid.u_interior();
  for (int i = ub.i0; i <= ub.i1; ++i)
    for (int j = ub.j0; j <= ub.j1; ++j) {
      const int row = grid.ui(i, j);
      const double w = grid.wu(i, j);
      const int jp = grid.jw(j + 1), jm = grid.jw(j - 1);
      const double av = detail::v_at_u(avg, grid, i, j);
      const double d1a = (avg.u(i + 1, j) - avg.u(i - 1, j)) / (2.0 * h1);
      const double d2a = (avg.u(i, jp) - avg.u(i, jm)) / (2.0 * h2);
      auto add_u = [&](int ii, int jj, double c) {
        detail::emit(trips, row, detail::resolve_u(grid, ii, jj), w * c);
      };
      auto add_v = [&](int ii, int jj, double c) {
        detail::emit(trips, row, detail::resolve_v(grid, ii, jj), w * c);
      };
      if (grid.is_rectangle()) {
        add_u(i + 1, j, avg.u(i, j) / (2.0 * h1));
        add_u(i - 1, j, -avg.u(i, j) / (2.0 * h1));
        add_u(i, j + 1, av / (2.0 * h2));
        add_u(i, j - 1, -av / (2.0 * h2));
        add_u(i, j, d1a);
        const double corner = 0.25 * d2a;
        add_v(i - 1, j, corner);
        add_v(i, j, corner);
        add_v(i - 1, j + 1, corner);
        add_v(i, j + 1, corner);
      } else {
        const double rho = grid.rf(i);
        add_u(i + 1, j, avg.u(i, j) / (2.0 * h1));
        add_u(i - 1, j, -avg.u(i, j) / (2.0 * h1));
        add_u(i, j + 1, av / (2.0 * h2 * rho));
        add_u(i, j - 1, -av / (2.0 * h2 * rho));
        add_u(i, j, d1a);
        const double corner = 0.25 * (d2a / rho - 2.0 * av / rho);
        add_v(i - 1, j, corner);
        add_v(i, j, corner);
        add_v(i - 1, j + 1, corner);
        add_v(i, j + 1, corner);
      }
    }

  const auto vb = grid.v_interior();
  for (int i = vb.i0; i <= vb.i1; ++i)
    for (int j = vb.j0; j <= vb.j1; ++j) {
      const int row = grid.vi(i, j);
      const double w = grid.wv(i, j);
      const int jp = grid.jw(j + 1), jm = grid.jw(j - 1);
      const double au = detail::u_at_v(avg, grid, i, j);
      const double d1a = (avg.v(i + 1, j) - avg.v(i - 1, j)) / (2.0 * h1);
      const double d2a = (avg.v(i, jp) - avg.v(i, jm)) / (2.0 * h2);
      auto add_u = [&](int ii, int jj, double c) {
        detail::emit(trips, row, detail::resolve_u(grid, ii, jj), w * c);
      };
      auto add_v = [&](int ii, int jj, double c) {
        detail::emit(trips, row, detail::resolve_v(grid, ii, jj), w * c);
      };
      if (grid.is_rectangle()) {
        add_v(i + 1, j, au / (2.0 * h1));
        add_v(i - 1, j, -au / (2.0 * h1));
        add_v(i, j + 1, avg.v(i, j) / (2.0 * h2));
        add_v(i, j - 1, -avg.v(i, j) / (2.0 * h2));
        add_v(i, j, d2a);
        const double corner = 0.25 * d1a;
        add_u(i, j - 1, corner);
        add_u(i + 1, j - 1, corner);
        add_u(i, j, corner);
        add_u(i + 1, j, corner);
      } else {
        const double rho = grid.rc(i);
        add_v(i + 1, j, au / (2.0 * h1));
        add_v(i - 1, j, -au / (2.0 * h1));
        add_v(i, j + 1, avg.v(i, j) / (2.0 * h2 * rho));
        add_v(i, j - 1, -avg.v(i, j) / (2.0 * h2 * rho));
        add_v(i, j, d2a / rho + au / rho);
        const double corner = 0.25 * (d1a + avg.v(i, j) / rho);
        add_u(i, j - 1, corner);
        add_u(i + 1, j - 1, corner);
        add_u(i, j, corner);
        add_u(i + 1, j, corner);
      }
    }

  SpMat C(grid.n_velocity(), grid.n_velocity());
  C.setFromTriplets(trips.begin(), trips.end());
  C.makeCompressed();
  return C;
}

/// Bordered saddle matrix
///   [ A   -B^T  0   ]
///   [ B    0    w_p ]
///   [ 0   w_p^T 0   ]
/// The scalar border pins the pressure constant (and its multiplier absorbs
/// the compatibility defect of the continuity rows), keeping the system
/// square and nonsingular without dropping a cell.
inline SpMat build_saddle_matrix(const StaggeredGrid& grid, const SpMat& A,
                                 const SpMat& B) {
  const int nv = grid.n_velocity(), np = grid.n_p();
  const int n = nv + np + 1;
  std::vector<detail::Trip> trips;
  trips.reserve(static_cast<size_t>(A.nonZeros()) + 2 * B.nonZeros() + 2 * np);
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it)
      trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                         it.value());
  for (int k = 0; k < B.outerSize(); ++k)
    for (SpMat::InnerIterator it(B, k); it; ++it) {
      const int r = static_cast<int>(it.row()), c = static_cast<int>(it.col());
      trips.emplace_back(nv + r, c, it.value());
      trips.emplace_back(c, nv + r, -it.value());
    }
  const Eigen::VectorXd wp = pressure_weights(grid);
  for (int r = 0; r < np; ++r) {
    trips.emplace_back(nv + r, n - 1, wp[r]);
    trips.emplace_back(n - 1, nv + r, wp[r]);
  }
  SpMat full(n, n);
  full.setFromTriplets(trips.begin(), trips.end());
  full.makeCompressed();
  return full;
}

/// Sparse LU of the bordered system. `factorize` may be called repeatedly
/// with new coefficients on the same pattern; the symbolic analysis is done
/// once.
class SaddleFactorization {
 public:
  void factorize(const StaggeredGrid& grid, const SpMat& A, const SpMat& B) {
    full_ = build_saddle_matrix(grid, A, B);
    if (!lu_) {
      lu_ = std::make_unique<Eigen::SparseLU<SpMat>>();
      lu_->analyzePattern(full_);
    }
    lu_->factorize(full_);
    if (lu_->info() != Eigen::Success)
      throw SolverError("saddle factorization failed (" +
                        lu_->lastErrorMessage() +
                        "); the system is singular or near-singular");
  }

  bool ready() const { return static_cast<bool>(lu_); }
  const SpMat& matrix() const { return full_; }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    if (!lu_) throw SolverError("saddle solve before factorization");
    Eigen::VectorXd x = lu_->solve(rhs);
    if (lu_->info() != Eigen::Success)
      throw SolverError("saddle triangular solve failed");
    return x;
  }

  /// Relative residual of a computed solution, over all bordered rows.
  double residual(const Eigen::VectorXd& x, const Eigen::VectorXd& rhs) const {
    const double scale = std::max(rhs.norm(), 1e-300);
    return (full_ * x - rhs).norm() / scale;
  }

 private:
  SpMat full_;
  std::unique_ptr<Eigen::SparseLU<SpMat>> lu_;
};

/// Stationary solve for a velocity/pressure correction with homogeneous
/// boundary data: A w + grad q = f, div w = 0, mean q = 0, where A is the
/// diffusion block alone (Stokes) or diffusion plus the transport terms
/// linearized at a frozen field. Construction factors once; `solve` is then
/// cheap and reusable across right-hand sides.
class StationarySolver {
 public:
  StationarySolver(const StaggeredGrid& grid, double nu)
      : grid_(&grid), weights_(velocity_weights(grid)) {
    fact_.factorize(grid, assemble_diffusion(grid, nu),
                    assemble_divergence(grid));
  }

  StationarySolver(const StaggeredGrid& grid, double nu, const FlowState& avg)
      : grid_(&grid), weights_(velocity_weights(grid)) {
    const SpMat A =
        SpMat(assemble_diffusion(grid, nu) +
              assemble_advection_jacobian(grid, avg));
    fact_.factorize(grid, A, assemble_divergence(grid));
  }

  /// `rhs` carries the forcing on interior velocity faces; its pressure
  /// plane is ignored. The result has homogeneous boundary data encoded in
  /// its ghosts and an exactly mean-zero pressure.
  FlowState solve(const FlowState& rhs) const {
    const StaggeredGrid& grid = *grid_;
    grid.require_match(rhs);
    const int nv = grid.n_velocity(), np = grid.n_p();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(nv + np + 1);
    b.head(nv) = weights_.cwiseProduct(pack_velocity(grid, rhs));

    const Eigen::VectorXd x = fact_.solve(b);
    const double rel = fact_.residual(x, b);
    if (!(rel <= 1e-10)) {
      std::ostringstream msg;
      msg << "stationary solve residual " << rel
          << " exceeds 1e-10; the linearized system is too ill-conditioned";
      throw SolverError(msg.str());
    }

    FlowState out = grid.make_state();
    out.time = rhs.time;
    unpack_velocity(grid, x.head(nv), out);
    apply_boundary(out, grid, BoundarySpec{}, rhs.time);

    const Eigen::VectorXd wp = pressure_weights(grid);
    Eigen::VectorXd q = x.segment(nv, np);
    q.array() -= wp.dot(q) / wp.sum();
    const auto cb = grid.cells();
    for (int i = cb.i0; i <= cb.i1; ++i)
      for (int j = cb.j0; j <= cb.j1; ++j) out.p(i, j) = q[grid.pi(i, j)];

    const Field2 div = divergence(out, grid);
    double dmax = 0.0;
    for (double d : div.raw()) dmax = std::max(dmax, std::abs(d));
    const double vscale =
        std::max(1.0, x.head(nv).lpNorm<Eigen::Infinity>());
    if (!(dmax <= 1e-10 * vscale)) {
      std::ostringstream msg;
      msg << "stationary solve divergence " << dmax << " exceeds tolerance";
      throw SolverError(msg.str());
    }
    return out;
  }

 private:
  const StaggeredGrid* grid_;
  Eigen::VectorXd weights_;
  SaddleFactorization fact_;
};

/// One-shot Stokes correction solve: -nu Lap w + grad q = rhs, div w = 0,
/// homogeneous boundary data, mean-zero pressure.
inline FlowState solve_stokes_stationary(const StaggeredGrid& grid, double nu,
                                         const FlowState& rhs) {
  return StationarySolver(grid, nu).solve(rhs);
}

/// One-shot linearized-transport correction solve at the frozen field
/// `avg_velocity`: adds (avg . grad) w + (w . grad) avg to the momentum
/// operator. With avg_velocity identically zero this reduces to the Stokes
/// solve, matching it to machine precision.
inline FlowState solve_oseen_update(const StaggeredGrid& grid, double nu,
                                    const FlowState& avg_velocity,
                                    const FlowState& rhs) {
  return StationarySolver(grid, nu, avg_velocity).solve(rhs);
}

}  // namespace pflow
