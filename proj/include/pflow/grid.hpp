#pragma once

// Staggered (MAC) spatial layout on two domain families: the square
// (-L, L)^2 and the annulus r < |x| < R in polar coordinates, periodic in
// the angle. Normal velocities live on cell faces, pressure at cell
// centers. Velocity arrays carry one layer of ghost values in the
// wall-tangential direction, filled by linear extrapolation through the
// Dirichlet data, so that centered stencils reach the walls.

#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <utility>
#include <vector>

namespace pflow {

/// Dense 2d array with inclusive, possibly negative index bounds; used for
/// every grid-attached field so ghost layers keep natural indices.
class Field2 {
 public:
  Field2() = default;
  Field2(int i_lo, int i_hi, int j_lo, int j_hi)
      : i0_(i_lo),
        j0_(j_lo),
        ni_(i_hi - i_lo + 1),
        nj_(j_hi - j_lo + 1),
        a_(static_cast<size_t>(ni_) * nj_, 0.0) {
    if (ni_ <= 0 || nj_ <= 0) throw std::domain_error("Field2: empty bounds");
  }

  double& operator()(int i, int j) {
    return a_[static_cast<size_t>(i - i0_) * nj_ + (j - j0_)];
  }
  double operator()(int i, int j) const {
    return a_[static_cast<size_t>(i - i0_) * nj_ + (j - j0_)];
  }

  int i_lo() const { return i0_; }
  int i_hi() const { return i0_ + ni_ - 1; }
  int j_lo() const { return j0_; }
  int j_hi() const { return j0_ + nj_ - 1; }
  bool empty() const { return a_.empty(); }
  bool same_shape(const Field2& other) const {
    return i0_ == other.i0_ && j0_ == other.j0_ && ni_ == other.ni_ &&
           nj_ == other.nj_;
  }

  void fill(double value) { a_.assign(a_.size(), value); }

  std::vector<double>& raw() { return a_; }
  const std::vector<double>& raw() const { return a_; }

 private:
  int i0_ = 0, j0_ = 0, ni_ = 0, nj_ = 0;
  std::vector<double> a_;
};

enum class Domain { rectangle, annulus };

/// Geometry request: either family plus resolution.
struct GridSpec {
  Domain domain = Domain::rectangle;
  double L = 0.0;
  int nx = 0, ny = 0;
  double r_inner = 0.0, r_outer = 0.0;
  int n_r = 0, n_th = 0;

  static GridSpec rectangle(double L, int nx, int ny) {
    GridSpec s;
    s.domain = Domain::rectangle;
    s.L = L;
    s.nx = nx;
    s.ny = ny;
    return s;
  }
  static GridSpec annulus(double r, double R, int n_r, int n_th) {
    GridSpec s;
    s.domain = Domain::annulus;
    s.r_inner = r;
    s.r_outer = R;
    s.n_r = n_r;
    s.n_th = n_th;
    return s;
  }

  void validate() const {
    if (domain == Domain::rectangle) {
      if (!(L > 0.0) || nx < 4 || ny < 4)
        throw std::domain_error("GridSpec: rectangle needs L > 0, nx, ny >= 4");
    } else {
      if (!(r_inner > 0.0) || !(r_outer > r_inner) || n_r < 4 || n_th < 8 ||
          n_th % 2 != 0)
        throw std::domain_error(
            "GridSpec: annulus needs 0 < r < R, n_r >= 4, n_th >= 8 even");
    }
  }
};

/// Inclusive index rectangle for interior/physical loops.
struct IndexBox {
  int i0, i1, j0, j1;
};

/// One time level: face-normal velocities and cell pressure. On the
/// annulus u is the radial and v the angular component.
struct FlowState {
  Field2 u, v, p;
  double time = 0.0;
};

/// Immutable geometry: coordinates, metric factors, quadrature weights and
/// the interior-unknown numbering shared by all assemblies.
class StaggeredGrid {
 public:
  explicit StaggeredGrid(const GridSpec& spec) : spec_(spec) {
    spec.validate();
    if (spec.domain == Domain::rectangle) {
      n1_ = spec.nx;
      n2_ = spec.ny;
      h1_ = 2.0 * spec.L / spec.nx;
      h2_ = 2.0 * spec.L / spec.ny;
      nu_ = (n1_ - 1) * n2_;
      nv_ = n1_ * (n2_ - 1);
    } else {
      n1_ = spec.n_r;
      n2_ = spec.n_th;
      h1_ = (spec.r_outer - spec.r_inner) / spec.n_r;
      h2_ = 2.0 * std::numbers::pi / spec.n_th;
      nu_ = (n1_ - 1) * n2_;
      nv_ = n1_ * n2_;
    }
    np_ = n1_ * n2_;
  }

  const GridSpec& spec() const { return spec_; }
  Domain domain() const { return spec_.domain; }
  bool is_rectangle() const { return spec_.domain == Domain::rectangle; }

  // Cell counts along the two directions and mesh widths (hx/hy on the
  // rectangle, dr/dtheta on the annulus).
  int n1() const { return n1_; }
  int n2() const { return n2_; }
  double h1() const { return h1_; }
  double h2() const { return h2_; }

  int n_u() const { return nu_; }
  int n_v() const { return nv_; }
  int n_velocity() const { return nu_ + nv_; }
  int n_p() const { return np_; }

  /// Wraps an angular index on the annulus; identity on the rectangle,
  /// where callers never step outside the array.
  int jw(int j) const {
    if (is_rectangle()) return j;
    const int m = j % n2_;
    return m < 0 ? m + n2_ : m;
  }

  // Interior-unknown numbering: u block first, then v. Returns -1 for
  // boundary faces (which are data, not unknowns).
  int ui(int i, int j) const {
    if (i < 1 || i > n1_ - 1) return -1;
    if (is_rectangle() && (j < 0 || j > n2_ - 1)) return -1;
    return (i - 1) * n2_ + jw(j);
  }
  int vi(int i, int j) const {
    if (is_rectangle()) {
      if (i < 0 || i > n1_ - 1 || j < 1 || j > n2_ - 1) return -1;
      return nu_ + i * (n2_ - 1) + (j - 1);
    }
    if (i < 0 || i > n1_ - 1) return -1;
    return nu_ + i * n2_ + jw(j);
  }
  int pi(int i, int j) const { return i * n2_ + jw(j); }

  IndexBox u_interior() const { return {1, n1_ - 1, 0, n2_ - 1}; }
  IndexBox v_interior() const {
    return is_rectangle() ? IndexBox{0, n1_ - 1, 1, n2_ - 1}
                          : IndexBox{0, n1_ - 1, 0, n2_ - 1};
  }
  IndexBox u_physical() const { return {0, n1_, 0, n2_ - 1}; }
  IndexBox v_physical() const {
    return is_rectangle() ? IndexBox{0, n1_ - 1, 0, n2_}
                          : IndexBox{0, n1_ - 1, 0, n2_ - 1};
  }
  IndexBox cells() const { return {0, n1_ - 1, 0, n2_ - 1}; }

  // Radii at radial faces / cell centers (annulus only; callers on the
  // rectangle never ask).
  double rf(int i) const { return spec_.r_inner + i * h1_; }
  double rc(int i) const { return spec_.r_inner + (i + 0.5) * h1_; }
  double theta_f(int j) const { return j * h2_; }
  double theta_c(int j) const { return (j + 0.5) * h2_; }

  // Quadrature weights (face/cell areas; the annulus ones carry the radius
  // factor). Boundary-normal faces own half a cell.
  double wu(int i, int j) const {
    (void)j;
    const double half = (i == 0 || i == n1_) ? 0.5 : 1.0;
    if (is_rectangle()) return half * h1_ * h2_;
    return half * rf(i) * h1_ * h2_;
  }
  double wv(int i, int j) const {
    if (is_rectangle()) {
      const double half = (j == 0 || j == n2_) ? 0.5 : 1.0;
      return half * h1_ * h2_;
    }
    (void)j;
    return rc(i) * h1_ * h2_;
  }
  double wp(int i, int j) const {
    (void)j;
    if (is_rectangle()) return h1_ * h2_;
    return rc(i) * h1_ * h2_;
  }

  // Cartesian coordinates of face and cell centers (used for boundary and
  // forcing evaluation and for CSV export).
  std::array<double, 2> u_face_xy(int i, int j) const {
    if (is_rectangle())
      return {-spec_.L + i * h1_, -spec_.L + (j + 0.5) * h2_};
    const double t = theta_c(j);
    return {rf(i) * std::cos(t), rf(i) * std::sin(t)};
  }
  std::array<double, 2> v_face_xy(int i, int j) const {
    if (is_rectangle())
      return {-spec_.L + (i + 0.5) * h1_, -spec_.L + j * h2_};
    const double t = theta_f(j);
    return {rc(i) * std::cos(t), rc(i) * std::sin(t)};
  }
  std::array<double, 2> cell_xy(int i, int j) const {
    if (is_rectangle())
      return {-spec_.L + (i + 0.5) * h1_, -spec_.L + (j + 0.5) * h2_};
    const double t = theta_c(j);
    return {rc(i) * std::cos(t), rc(i) * std::sin(t)};
  }

  /// Allocates a zero state with the ghost layout this grid expects.
  FlowState make_state() const {
    FlowState s;
    if (is_rectangle()) {
      s.u = Field2(0, n1_, -1, n2_);
      s.v = Field2(-1, n1_, 0, n2_);
    } else {
      s.u = Field2(0, n1_, 0, n2_ - 1);
      s.v = Field2(-1, n1_, 0, n2_ - 1);
    }
    s.p = Field2(0, n1_ - 1, 0, n2_ - 1);
    return s;
  }

  bool matches(const FlowState& s) const {
    const FlowState ref = make_state();
    return s.u.same_shape(ref.u) && s.v.same_shape(ref.v) &&
           (s.p.empty() || s.p.same_shape(ref.p));
  }
  void require_match(const FlowState& s) const {
    if (!matches(s))
      throw std::domain_error("FlowState does not match this grid's layout");
  }

 private:
  GridSpec spec_;
  int n1_, n2_;
  double h1_, h2_;
  int nu_, nv_, np_;
};

inline StaggeredGrid build_grid(const GridSpec& spec) {
  return StaggeredGrid(spec);
}

/// Dirichlet velocity data g(x, y, t) on the whole boundary plus the body
/// force f(x, y, t), both given in Cartesian components; the grid projects
/// onto face normals/tangents as needed.
struct BoundarySpec {
  std::function<std::array<double, 2>(double, double, double)> velocity =
      [](double, double, double) { return std::array<double, 2>{0.0, 0.0}; };
  std::function<std::array<double, 2>(double, double, double)> forcing =
      [](double, double, double) { return std::array<double, 2>{0.0, 0.0}; };
};

/// Writes the Dirichlet data at time t onto the boundary faces and fills
/// the tangential ghost layers by linear extrapolation (ghost = 2g - interior
/// at the wall), then stamps the state time.
inline void apply_boundary(FlowState& state, const StaggeredGrid& grid,
                           const BoundarySpec& bc, double t) {
  grid.require_match(state);
  const int n1 = grid.n1(), n2 = grid.n2();
  if (grid.is_rectangle()) {
    const double L = grid.spec().L;
    for (int j = 0; j < n2; ++j) {
      auto [xl, yl] = grid.u_face_xy(0, j);
      state.u(0, j) = bc.velocity(xl, yl, t)[0];
      auto [xr, yr] = grid.u_face_xy(n1, j);
      state.u(n1, j) = bc.velocity(xr, yr, t)[0];
    }
    for (int i = 0; i <= n1; ++i) {
      const double x = grid.u_face_xy(i, 0)[0];
      state.u(i, -1) = 2.0 * bc.velocity(x, -L, t)[0] - state.u(i, 0);
      state.u(i, n2) = 2.0 * bc.velocity(x, L, t)[0] - state.u(i, n2 - 1);
    }
    for (int i = 0; i < n1; ++i) {
      auto [xb, yb] = grid.v_face_xy(i, 0);
      state.v(i, 0) = bc.velocity(xb, yb, t)[1];
      auto [xt, yt] = grid.v_face_xy(i, n2);
      state.v(i, n2) = bc.velocity(xt, yt, t)[1];
    }
    for (int j = 0; j <= n2; ++j) {
      const double y = grid.v_face_xy(0, j)[1];
      state.v(-1, j) = 2.0 * bc.velocity(-L, y, t)[1] - state.v(0, j);
      state.v(n1, j) = 2.0 * bc.velocity(L, y, t)[1] - state.v(n1 - 1, j);
    }
  } else {
    const double ri = grid.spec().r_inner, ro = grid.spec().r_outer;
    for (int j = 0; j < n2; ++j) {
      // Radial faces carry g . e_r directly.
      const double tc = grid.theta_c(j);
      const auto gi = bc.velocity(ri * std::cos(tc), ri * std::sin(tc), t);
      state.u(0, j) = gi[0] * std::cos(tc) + gi[1] * std::sin(tc);
      const auto go = bc.velocity(ro * std::cos(tc), ro * std::sin(tc), t);
      state.u(n1, j) = go[0] * std::cos(tc) + go[1] * std::sin(tc);
      // Angular ghosts extrapolate g . e_theta through the rings.
      const double tf = grid.theta_f(j);
      const auto hi = bc.velocity(ri * std::cos(tf), ri * std::sin(tf), t);
      const double gti = -hi[0] * std::sin(tf) + hi[1] * std::cos(tf);
      state.v(-1, j) = 2.0 * gti - state.v(0, j);
      const auto ho = bc.velocity(ro * std::cos(tf), ro * std::sin(tf), t);
      const double gto = -ho[0] * std::sin(tf) + ho[1] * std::cos(tf);
      state.v(n1, j) = 2.0 * gto - state.v(n1 - 1, j);
    }
  }
  state.time = t;
}

/// Net discrete boundary flux of the Dirichlet data at time t (outward
/// normal); div v = 0 demands this vanish. Returns the flux and the
/// boundary measure used for the relative tolerance.
inline std::pair<double, double> boundary_flux(const StaggeredGrid& grid,
                                               const BoundarySpec& bc,
                                               double t) {
  double flux = 0.0, measure = 0.0;
  const int n1 = grid.n1(), n2 = grid.n2();
  if (grid.is_rectangle()) {
    const double L = grid.spec().L;
    for (int j = 0; j < n2; ++j) {
      const double y = grid.u_face_xy(0, j)[1];
      flux += grid.h2() * (bc.velocity(L, y, t)[0] - bc.velocity(-L, y, t)[0]);
    }
    for (int i = 0; i < n1; ++i) {
      const double x = grid.v_face_xy(i, 0)[0];
      flux += grid.h1() * (bc.velocity(x, L, t)[1] - bc.velocity(x, -L, t)[1]);
    }
    measure = 4.0 * (2.0 * L);
  } else {
    const double ri = grid.spec().r_inner, ro = grid.spec().r_outer;
    for (int j = 0; j < n2; ++j) {
      const double tc = grid.theta_c(j);
      const double c = std::cos(tc), s = std::sin(tc);
      const auto go = bc.velocity(ro * c, ro * s, t);
      const auto gi = bc.velocity(ri * c, ri * s, t);
      flux += grid.h2() * (ro * (go[0] * c + go[1] * s) -
                           ri * (gi[0] * c + gi[1] * s));
    }
    measure = 2.0 * std::numbers::pi * (ri + ro);
  }
  return {flux, measure};
}

/// Cell-centered snapshot rows "x,y,u,v,p"; velocity components are
/// Cartesian on both domains so plots need no polar handling.
inline void write_snapshot_csv(std::ostream& out, const StaggeredGrid& grid,
                               const FlowState& state) {
  grid.require_match(state);
  out << "x,y,u,v,p\n";
  char line[160];
  const auto box = grid.cells();
  for (int i = box.i0; i <= box.i1; ++i)
    for (int j = box.j0; j <= box.j1; ++j) {
      const auto [x, y] = grid.cell_xy(i, j);
      const double un = 0.5 * (state.u(i, j) + state.u(i + 1, j));
      const double vn = 0.5 * (state.v(i, j) + state.v(i, grid.jw(j + 1)));
      double ux = un, uy = vn;
      if (!grid.is_rectangle()) {
        const double tc = grid.theta_c(j);
        ux = un * std::cos(tc) - vn * std::sin(tc);
        uy = un * std::sin(tc) + vn * std::cos(tc);
      }
      const double pv = state.p.empty() ? 0.0 : state.p(i, j);
      std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g,%.17g\n", x, y,
                    ux, uy, pv);
      out << line;
    }
}

}  // namespace pflow
