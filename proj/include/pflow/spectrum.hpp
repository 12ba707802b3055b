#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "pflow/grid.hpp"
#include "pflow/operators.hpp"
#include "pflow/saddle.hpp"

namespace pflow {

struct EigenPair {
  double lambda;
  FlowState omega;
};

/// Sparse basis of the discretely divergence-free subspace with zero normal
/// boundary data on the rectangle: the discrete curl of interior vertex
/// streamfunctions. B * Z = 0 holds by telescoping, and the column count
/// (nx-1)(ny-1) exhausts the subspace, so restricting to range(Z) is the
/// exact constraint projection.
inline SpMat streamfunction_curl_basis(const StaggeredGrid& grid) {
  if (!grid.is_rectangle())
    throw std::domain_error(
        "streamfunction_curl_basis: rectangle grids only (the annulus is not "
        "simply connected)");
  const int nx = grid.n1(), ny = grid.n2();
  const double cx = 1.0 / grid.h1(), cy = 1.0 / grid.h2();
  std::vector<detail::Trip> trips;
  trips.reserve(static_cast<size_t>(4) * (nx - 1) * (ny - 1));
  auto col = [&](int i, int j) { return (i - 1) * (ny - 1) + (j - 1); };
  for (int i = 1; i <= nx - 1; ++i)
    for (int j = 1; j <= ny - 1; ++j) {
      const int c = col(i, j);
      trips.emplace_back(grid.ui(i, j - 1), c, cy);
      trips.emplace_back(grid.ui(i, j), c, -cy);
      trips.emplace_back(grid.vi(i - 1, j), c, -cx);
      trips.emplace_back(grid.vi(i, j), c, cx);
    }
  SpMat Z(grid.n_velocity(), (nx - 1) * (ny - 1));
  Z.setFromTriplets(trips.begin(), trips.end());
  Z.makeCompressed();
  return Z;
}

/// Smallest `count` eigenpairs of the divergence-free-projected Stokes
/// operator: K omega = lambda W omega on range(Z), solved as the reduced
/// symmetric-definite pencil (Z^T K Z, Z^T W Z). Reported lambda are the
/// pure (viscosity-free) operator eigenvalues; the period decay rate of
/// mode i is exp(-nu * lambda_i * P). Modes come back W-orthonormal with
/// homogeneous boundary data in their ghosts.
inline std::vector<EigenPair> compute_stokes_spectrum(
    const StaggeredGrid& grid, double nu, int count) {
  if (!(nu > 0.0))
    throw std::domain_error("compute_stokes_spectrum: nu must be > 0");
  if (!grid.is_rectangle())
    throw std::domain_error(
        "compute_stokes_spectrum: rectangle grids only");
  if (grid.n_velocity() > 6000)
    throw std::domain_error(
        "compute_stokes_spectrum: grid too large for the dense eigensolve");
  const SpMat Z = streamfunction_curl_basis(grid);
  const int nmodes = static_cast<int>(Z.cols());
  if (count < 1 || count > nmodes)
    throw std::domain_error(
        "compute_stokes_spectrum: count out of range for this grid");

  const SpMat K = assemble_diffusion(grid, 1.0);
  const Eigen::VectorXd w = velocity_weights(grid);
  const Eigen::MatrixXd S = Eigen::MatrixXd(Z.transpose() * (K * Z));
  const Eigen::MatrixXd M =
      Eigen::MatrixXd(Z.transpose() * (w.asDiagonal() * Z));

  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> eig(
      0.5 * (S + S.transpose()), 0.5 * (M + M.transpose()));
  if (eig.info() != Eigen::Success)
    throw SolverError("compute_stokes_spectrum: eigensolver did not converge");

  const Eigen::LDLT<Eigen::MatrixXd> mass(M);
  std::vector<EigenPair> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) {
    const double lambda = eig.eigenvalues()[k];
    Eigen::VectorXd x = eig.eigenvectors().col(k);

    // Verify in the reduced space, where the constraint is exact:
    // ||P(K w - lambda W w)||_W relative to lambda * ||w||_W.
    const Eigen::VectorXd r = S * x - lambda * (M * x);
    const Eigen::VectorXd z = mass.solve(r);
    const double res = std::sqrt(std::max(0.0, z.dot(r)));
    if (!(res <= 1e-8 * std::max(1.0, lambda))) {
      std::ostringstream msg;
      msg << "compute_stokes_spectrum: mode " << k << " residual " << res
          << " exceeds 1e-8 (lambda " << lambda << ")";
      throw SolverError(msg.str());
    }

    // Deterministic sign: largest-magnitude coefficient positive.
    int imax = 0;
    x.cwiseAbs().maxCoeff(&imax);
    if (x[imax] < 0.0) x = -x;

    EigenPair pair;
    pair.lambda = lambda;
    pair.omega = grid.make_state();
    unpack_velocity(grid, Z * x, pair.omega);
    apply_boundary(pair.omega, grid, BoundarySpec{}, 0.0);
    out.push_back(std::move(pair));
  }
  return out;
}

inline void write_spectrum_csv(std::ostream& out,
                               const std::vector<EigenPair>& modes) {
  out << "index,lambda\n";
  char buf[64];
  for (size_t i = 0; i < modes.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, modes[i].lambda);
    out << buf;
  }
}

}  // namespace pflow
