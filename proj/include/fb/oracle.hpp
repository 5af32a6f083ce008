#pragma once

#include <vector>

#include "fb/grid.hpp"
#include "fb/problem.hpp"

namespace fb {

/// u(r) = (rho^2 - r^2) / (2n) on the ball of radius rho: -Laplace u = 1, u = 0 on the sphere.
struct RadialSolution {
  int n = 2;
  double rho = 1.0;
  double sup = 0.0;
  double boundary_gradient = 0.0;
  double Lambda = 0.0;
  double energy = 0.0;

  double u(double r) const { return r < rho ? (rho * rho - r * r) / (2.0 * n) : 0.0; }
  double du(double r) const { return r < rho ? -r / n : 0.0; }
};

RadialSolution torsion_ball(int n, double rho);

double bessel_j0(double x);
double bessel_j1(double x);
/// First positive zero of J0.
double bessel_j0_zero();

/// First Dirichlet eigenvalue of the Laplacian on the ball of the given volume.
double lambda1_ball(int n, double volume);
/// First Dirichlet eigenfunction of the ball of radius R, normalised to 1 at the centre.
double eigenfunction_ball(int n, double R, double r);
/// Integral of the square of eigenfunction_ball over the ball.
double eigenfunction_l2sq(int n, double R);

/// Closed-form energies of the two-ball construction.
///
/// The `*_printed` values follow the formulas exactly as printed in the source
/// text; the `*_exact` values are the correct integrals:
/// one_ball_exact = -int_{B^{m/2}} w with w the torsion function of B^m, and
/// two_ball_exact = F0 of two disjoint torsion balls of volume m/2 each.
struct AppendixEnergies {
  int n = 2;
  double m = 0.0;
  double r = 0.0;    ///< |B_r| = m/2
  double rho = 0.0;  ///< |B_rho| = m
  double one_ball_printed = 0.0;
  double two_ball_printed = 0.0;
  double one_ball_exact = 0.0;
  double two_ball_exact = 0.0;
  double m_star = 0.0;  ///< smallest m with two_ball_printed < one_ball_printed
  bool two_ball_wins = false;
};

AppendixEnergies appendix_energies(int n, double m);
/// Threshold m* of appendix_energies, by bisection to relative 1e-10.
double appendix_threshold(int n);

/// Difference quotients of the smoothed discrete energy: central differences,
/// or the second-order forward formula at nodes where u < step.
std::vector<double> fd_gradient(const Discretization& disc, const std::vector<double>& u,
                                double Lambda, double delta, double step);
ScalarField fd_gradient(const ScalarField& u, const ProblemSpec& spec, double Lambda, double delta,
                        double step);

/// W of the half-plane profile sqrt(Lambda q0) (x.nu)_+ : Lambda q0 |B_1| / 2.
double halfplane_weiss(int n, double Lambda, double q0);

struct BlowupTrace {
  double lambda1 = 0.0;
  double phi_l2sq = 0.0;
  double unit_energy = 0.0;  ///< F0(phi_1) = (lambda_1 - 2b) int phi_1^2
  std::vector<double> taus;
  std::vector<double> energies;
};

/// F0(tau phi_1) = tau^2 F0(phi_1) for F = b u^2, A = I, q = 1.
BlowupTrace quadratic_blowup_trace(int n, double m, double b, const std::vector<double>& taus);

}  // namespace fb
