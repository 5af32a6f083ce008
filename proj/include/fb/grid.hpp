#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "fb/linalg.hpp"
#include "fb/problem.hpp"

namespace fb {

using Index3 = std::array<std::int64_t, 3>;

/// Uniform grid with `cells[a]` cells (and cells[a] + 1 nodes) along axis a.
/// Nodes are stored row-major with the last axis fastest. Unused axes have 0 cells.
struct Grid {
  int dim = 2;
  double h = 1.0 / 64.0;
  Vec origin = Vec::Zero(2);
  Index3 cells{0, 0, 0};

  /// Box [-radius, radius]^n; radius is rounded up to a multiple of h.
  static Grid centered(int dim, double radius, double h);

  std::int64_t nodes_along(int a) const { return a < dim ? cells[a] + 1 : 1; }
  std::size_t num_nodes() const;
  std::size_t num_cells() const;
  Index3 node_strides() const;

  std::size_t node_index(const Index3& ijk) const;
  Index3 node_coords(std::size_t index) const;
  Vec node_position(std::size_t index) const;
  Vec position(const Index3& ijk) const;
  bool on_boundary(const Index3& ijk) const;
  std::size_t cell_index(const Index3& c) const;
  Index3 cell_coords(std::size_t index) const;
  Vec cell_center(const Index3& c) const;
  double lower(int a) const { return origin[a]; }
  double upper(int a) const { return origin[a] + static_cast<double>(cells[a]) * h; }
  double cell_volume() const;
  /// True if x lies in the closed box.
  bool contains(const Vec& x, double margin = 0.0) const;
  /// Distance from x to the box boundary (negative outside).
  double distance_to_boundary(const Vec& x) const;
  bool same_as(const Grid& other) const;
};

/// Nodal scalar field with the zero-outside-the-box convention.
struct ScalarField {
  Grid grid;
  std::vector<double> values;

  ScalarField() = default;
  explicit ScalarField(const Grid& g) : grid(g), values(g.num_nodes(), 0.0) {}

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  double max() const;
  /// Multilinear interpolation; 0 outside the box.
  double sample(const Vec& x) const;
  /// Gradient of the multilinear interpolant in the cell containing x.
  Vec sample_gradient(const Vec& x) const;
};

/// Cell-centred vector field, n components per cell.
struct VectorField {
  Grid grid;
  std::vector<double> values;

  VectorField() = default;
  explicit VectorField(const Grid& g)
      : grid(g), values(g.num_cells() * static_cast<std::size_t>(g.dim), 0.0) {}

  Vec at(std::size_t cell) const;
  void set(std::size_t cell, const Vec& v);
  double sup_norm() const;
};

/// Forward differences (u[c + e_i] - u[c]) / h at every cell c.
VectorField gradient_field(const ScalarField& u);

/// Builds a field by evaluating `fn` at every node.
template <typename Fn>
ScalarField sample_function(const Grid& grid, Fn&& fn) {
  ScalarField u(grid);
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = fn(grid.node_position(i));
  return u;
}

/// Volume indicator used by energy(): sharp {u > 0}, or min(u / delta, 1).
struct EnergyMode {
  bool smoothed = false;
  double delta = 0.0;
  static EnergyMode sharp() { return {}; }
  static EnergyMode smooth(double delta) { return {true, delta}; }
};

struct EnergyBreakdown {
  double dirichlet = 0.0;
  double potential = 0.0;
  double volume_term = 0.0;
  double total = 0.0;
  double vol_q_raw = 0.0;
  bool smoothed = false;
  double delta = 0.0;
};

/// CSV header and row for an EnergyBreakdown.
std::string energy_csv_header();
std::string energy_csv_row(const EnergyBreakdown& e);

/// Values below this are clamped to exactly zero by projections.
inline constexpr double kClip = 1e-12;

/// Discrete energy on a fixed grid.
///
/// Each cell contributes h^n times the average, over its 2^n corners, of
/// g A(cell centre) g^T, where g is the one-sided gradient built from the cell
/// edges meeting at that corner. For A = I this is the standard (2n+1)-point
/// Laplacian. The stiffness matrix K is the Hessian of that quadratic form, so
/// the operator and the energy are exactly adjoint. F and f use node-owned
/// dual cells of volume h^n; the volume counts cells whose centre value (the
/// mean of the corners) is positive, weighted by q at the cell centre.
class Discretization {
 public:
  Discretization(const ProblemSpec& spec, const Grid& grid);

  const ProblemSpec& spec() const { return spec_; }
  const Grid& grid() const { return grid_; }
  const Eigen::SparseMatrix<double, Eigen::RowMajor>& stiffness() const { return K_; }
  const std::vector<double>& node_q() const { return q_; }
  const std::vector<double>& cell_q() const { return qc_; }
  /// Node index of corner 0 of each cell, and the offsets of all 2^n corners.
  const std::vector<std::size_t>& cell_base() const { return cell_base_; }
  const std::vector<std::int64_t>& corner_offsets() const { return corner_offset_; }
  double cell_mean(const std::vector<double>& u, std::size_t cell) const;
  double cell_volume() const { return hn_; }

  /// -div(A grad u) at nodes: K u / (2 h^n).
  ScalarField apply_L(const ScalarField& u) const;
  /// K u.
  Eigen::VectorXd stiffness_times(const std::vector<double>& u) const;
  double dirichlet(const std::vector<double>& u) const;
  double potential(const std::vector<double>& u) const;
  double vol_q(const std::vector<double>& u) const;
  double smoothed_vol_q(const std::vector<double>& u, double delta) const;
  /// d smoothed_vol_q / du (right derivative at cell means equal to 0).
  std::vector<double> smoothed_vol_gradient(const std::vector<double>& u, double delta) const;
  EnergyBreakdown energy(const std::vector<double>& u, double Lambda, EnergyMode mode) const;
  /// Exact gradient of the smoothed discrete energy.
  std::vector<double> energy_gradient(const std::vector<double>& u, double Lambda,
                                      double delta) const;
  /// f(x_i, u_i) at every node.
  std::vector<double> node_f(const std::vector<double>& u) const;
  std::vector<double> node_fprime(const std::vector<double>& u) const;

 private:
  ProblemSpec spec_;
  Grid grid_;
  double hn_ = 1.0;
  Eigen::SparseMatrix<double, Eigen::RowMajor> K_;
  std::vector<double> q_;
  std::vector<double> qc_;
  std::vector<std::size_t> cell_base_;
  std::vector<std::int64_t> corner_offset_;
  std::vector<Vec> x_;
};

// Convenience wrappers building a Discretization on u's grid.
ScalarField apply_L(const ScalarField& u, const ProblemSpec& spec);
double vol_q(const ScalarField& u, const ProblemSpec& spec);
double smoothed_vol_q(const ScalarField& u, const ProblemSpec& spec, double delta);
EnergyBreakdown energy(const ScalarField& u, const ProblemSpec& spec, double Lambda,
                       EnergyMode mode);
ScalarField energy_gradient(const ScalarField& u, const ProblemSpec& spec, double Lambda,
                            double delta);

/// Domain variation of the sharp energy F_Lambda along the cell-centred field xi.
/// Errors: MarginViolation if xi is nonzero within two cells of the box boundary.
double first_variation(const ScalarField& u, const VectorField& xi, const ProblemSpec& spec,
                       double Lambda);

/// Node gradient: central differences where both neighbours are positive,
/// second-order one-sided differences into the positive side otherwise.
Vec node_gradient(const ScalarField& u, const Index3& ijk);

// FBGRID1 binary format.
void write_field(const ScalarField& u, std::ostream& out);
void write_field(const ScalarField& u, const std::string& path);
ScalarField read_field(std::istream& in);
ScalarField read_field(const std::string& path);

}  // namespace fb
