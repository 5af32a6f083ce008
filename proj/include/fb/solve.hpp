#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fb/grid.hpp"
#include "fb/problem.hpp"

namespace fb {

struct SolverConfig {
  double h = 1.0 / 64.0;
  double box_radius = 0.0;  ///< 0: automatic (see solve_constrained)
  double box_cap = 0.0;     ///< 0: 4 x the initial box radius
  double coarse_h = 1.0 / 16.0;  ///< coarsest level (also at most R_m / 16)
  int max_bisection = 40;
  int max_inner = 200;  ///< accepted steps per smoothing stage
  int line_search_halvings = 30;
  int stall_window = 5;
  /// Smoothing widths in units of h sqrt(Lambda_est), annealed in this order.
  std::vector<double> delta_schedule{4.0, 2.0, 1.0};
  double tol_vol = 1e-3;
  double tol_E = 1e-10;
  double tol_g = 1e-8;
  /// Hard cap on the sharp q-volume, as a multiple of m.
  double volume_cap = 1.05;
  /// Volume stiffness in units of 8 Lambda_est / m; 0 disables the term.
  double volume_stiffness = 1.0;
  double lambda_hint = 0.0;
  double energy_guard = 0.0;  ///< 0: 10 (2 N m / q_lo + 1) with N fitted
  int hr_balls = 8;           ///< harmonic-replacement balls per final sweep
  int multistart = 1;
  std::uint64_t seed = 1;
  bool force = false;  ///< run even if the spec fails admissibility
};

struct TraceRow {
  int iteration = 0;
  double energy = 0.0;
  double vol = 0.0;
  double Lambda = 0.0;
  double delta = 0.0;
};

struct SolverState {
  double Lambda = 0.0;
  double Lambda_lo = 0.0;
  double Lambda_hi = 0.0;
  double delta = 0.0;
  int iterations = 0;
  int inner_solves = 0;
  double box_radius = 0.0;
  int restarts = 0;
  std::vector<double> energy_trace;
  std::vector<double> volume_trace;
};

struct RunResult {
  ScalarField u;
  double Lambda = 0.0;           ///< multiplier_estimate of the final field
  double Lambda_bisect = 0.0;    ///< penalty parameter found by the outer bracket
  double Lambda_smoothed = 0.0;  ///< effective multiplier of the last smoothed solve
  EnergyBreakdown energy;      ///< sharp, at Lambda
  double F0 = 0.0;             ///< dirichlet + potential
  double vol_q = 0.0;
  bool converged = false;
  bool diverged = false;
  bool multiplier_at_boundary = false;
  bool bracket_failure = false;
  bool lambda_positive = true;
  std::uint64_t seed = 0;
  double h = 0.0;
  double box_radius = 0.0;
  int replica = 0;
  std::vector<double> replica_F0;
  int hr_accepted = 0;
  SolverState state;
  std::vector<TraceRow> trace;
  std::string message;
};

/// Minimises F_Lambda + (mu/2)(V_delta - m)^2 over u >= 0 with sharp volume at
/// most volume_cap * m, annealing delta through cfg.delta_schedule. `init`
/// fixes the grid. Errors: Diverged, NoProgress.
ScalarField minimize_penalized(const ProblemSpec& spec, double Lambda, const ScalarField& init,
                               const SolverConfig& cfg);

/// Solves L w = f(x, u) at the nodes inside the ball, w = u elsewhere.
/// Errors: LinearSolveFailure, OutOfBox (ball closer than two cells to the box boundary).
ScalarField harmonic_replacement(const ScalarField& u, const ProblemSpec& spec, const Vec& center,
                                 double radius);

/// Largest admissible harmonic-replacement radius, 0.25 min(1, sqrt(lambda / (2 M2))).
double harmonic_replacement_radius(const ProblemSpec& spec, double M2);

/// Volume-saturating constrained minimisation: Lambda bracket and false
/// position on the inner minimiser's volume, multilevel in h, box enlargement,
/// multistart. Divergence is reported through RunResult::diverged.
/// Errors: BracketFailure (strict mode is left to the caller), BoxOverflow,
/// InvalidArgument (inadmissible spec without cfg.force).
RunResult solve_constrained(const ProblemSpec& spec, const SolverConfig& cfg);

enum class Boundedness { Bounded, Diverged };

/// Diverged iff some energy is below -guard.
Boundedness detect_unbounded(const std::vector<double>& trace, double guard);
/// 10 (2 N m / q_lo + 1).
double energy_guard(double N, double m, double q_lo);

/// Lagrange multiplier from the dilation identity: the Lambda at which the first
/// variation along xi = x - (support centroid) vanishes. Zero for empty support.
double multiplier_estimate(const ScalarField& u, const ProblemSpec& spec);

/// max over random tensor-product bump fields xi (unit sup norm) of |first_variation|.
double stationarity_residual(const ScalarField& u, const ProblemSpec& spec, double Lambda,
                             int n_fields, std::uint64_t seed);

/// Initial field: a torsion-like bump of volume m / K around each of the K seed points.
ScalarField initial_field(const ProblemSpec& spec, const Grid& grid, const std::vector<Vec>& centers);
/// Seed points of the spec (origin when the nonlinearity declares none).
std::vector<Vec> default_centers(const ProblemSpec& spec);

}  // namespace fb
