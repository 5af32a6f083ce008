#pragma once

#include <string>
#include <vector>

#include "fb/grid.hpp"
#include "fb/problem.hpp"

namespace fb {

struct BoundaryPoint {
  Vec x;
  Vec normal;  ///< outward unit normal, -grad u / |grad u|
  std::size_t inside = 0;   ///< positive node of the crossing edge
  std::size_t outside = 0;  ///< zero node of the crossing edge
};

struct BoundaryPointSet {
  Grid grid;
  std::vector<BoundaryPoint> points;
  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// One point per grid edge joining a positive node to a zero node. The crossing
/// is placed where the line through the positive node and its inward neighbour
/// on the same edge line reaches zero (clamped to the edge). Normals come from
/// the averaged gradient of fully positive cells within 2h.
/// Errors: EmptySupport.
BoundaryPointSet extract_free_boundary(const ScalarField& u);

/// Outward normal estimate at a point near the support.
Vec normal_at(const ScalarField& u, const Vec& x);

struct PdeResidual {
  double sup = 0.0;
  double l2 = 0.0;
  double M1 = 0.0;
  double sup_relative = 0.0;  ///< sup / max(M1, 1e-300)
  std::size_t nodes = 0;
};

/// L u - f(x, u) at positive nodes with no zero node within margin * h.
PdeResidual pde_residual(const ScalarField& u, const ProblemSpec& spec, int margin = 3);

struct NeumannReport {
  std::vector<double> g;         ///< extrapolated grad u A grad u^T
  std::vector<double> target;    ///< Lambda q(x_i)
  std::vector<double> residual;  ///< |g - target| / target
  double q10 = 0.0, median = 0.0, q90 = 0.0, max = 0.0;
  double fraction_within = 0.0;  ///< residual <= tolerance
  double tolerance = 0.15;
};

/// Samples grad u A grad u^T at inward offsets 2h, 4h, 6h along the normal and
/// extrapolates linearly to the boundary. Errors: LambdaNonPositive, EmptySupport.
NeumannReport neumann_check(const ScalarField& u, const ProblemSpec& spec, double Lambda,
                            const BoundaryPointSet& bset, double tolerance = 0.15);

struct LipschitzReport {
  double L = 0.0;    ///< max cell-centre |grad u|
  double sup = 0.0;  ///< max u
  double M1 = 0.0;   ///< max |f(x, u(x))| over nodes
};

LipschitzReport lipschitz_and_sup(const ScalarField& u, const ProblemSpec& spec);

/// Mean of u over the sphere of radius r around c: 64 equal-angle samples in
/// 2D, 16 x 16 in 3D (sin-weighted), 2 points in 1D.
double sphere_average(const ScalarField& u, const Vec& c, double r);
/// The sample points used by sphere_average together with their weights.
std::vector<std::pair<Vec, double>> sphere_samples(const Vec& c, double r);

struct NondegeneracyReport {
  std::vector<double> radii;
  std::vector<std::vector<double>> s;  ///< s[point][radius] = sphere average / r
  double kappa0 = 0.0;                 ///< min
  double C_upper = 0.0;                ///< max
  double kappa_floor = 0.0;
  bool pass = false;  ///< kappa0 > kappa_floor
};

/// Errors: RadiiOutOfRange (radius outside [4h, 0.2]).
NondegeneracyReport nondegeneracy_scan(const ScalarField& u, const BoundaryPointSet& bset,
                                       const std::vector<double>& radii, double kappa_floor = 0.0);

struct DensityReport {
  std::vector<double> radii;
  std::vector<std::vector<double>> ratio;  ///< ratio[point][radius]
  double max = 0.0;
  std::vector<char> non_boundary;  ///< some ratio > 0.98
};

/// Fraction of cells (by centre) inside B_r(x0) whose corner mean is positive.
DensityReport density_scan(const ScalarField& u, const BoundaryPointSet& bset,
                           const std::vector<double>& radii);

struct ExteriorReport {
  double r = 0.0;
  std::vector<std::size_t> zero_nodes;  ///< per point
  bool inconclusive = false;            ///< r < 2h
  bool all_pass = false;
};

ExteriorReport exterior_measure_check(const ScalarField& u, const BoundaryPointSet& bset, double r);

struct HarnackSample {
  Vec center;
  double r = 0.0;
  double sphere_avg = 0.0;
  double C1 = 0.0;
  double C2 = 0.0;
  double L_measured = 0.0;  ///< max |L u| over nodes of B_r
};

struct HarnackReport {
  std::vector<HarnackSample> samples;
  double C1 = 0.0;
  double C2 = 0.0;
  double mean_value_constant = 0.0;  ///< 2^n
  bool M_certified = true;           ///< every L_measured <= M (1e-8 relative slack)
  bool pass = false;                 ///< C1, C2 <= 4 mean_value_constant
};

/// Measured constants of the interior Harnack and gradient bounds for L = -Laplacian:
/// C1 = max_{x in B_{r/2}} u(x) / (avg + M r^2), C2 = |grad u(c)| r / (avg + M r^2).
/// Errors: NegativeOnSphere.
HarnackReport harnack_check(const ScalarField& u, double M, const std::vector<Vec>& centers,
                            const std::vector<double>& radii);

/// Largest distance from a boundary point to the sphere |x - c| = R.
double hausdorff_to_sphere(const BoundaryPointSet& bset, const Vec& c, double R);

/// CSV per boundary point: x, normal, g, target, residual.
std::string neumann_csv(const BoundaryPointSet& bset, const NeumannReport& rep);

}  // namespace fb
