#pragma once

#include <string>
#include <vector>

#include "fb/grid.hpp"
#include "fb/problem.hpp"

namespace fb {

/// Symmetric positive square root by eigen-decomposition. Errors: NotSPD.
Mat sqrt_spd(const Mat& M);

/// The common blow-up grid: 129^n nodes over [-2, 2]^n.
Grid blowup_grid(int n);

struct BlowupFrame {
  Vec x0;
  Mat S;      ///< sqrt A(x0)
  Mat S_inv;
  double Lambda = 0.0;
  double q0 = 1.0;
  std::vector<double> radii;  ///< strictly decreasing, >= 8 h of the source grid
};

/// v(x) = u(x0 + r S x) / r sampled on `target`. Errors: OutOfBox (the image
/// of B_2 leaves the source box).
ScalarField rescale(const ScalarField& u, const Vec& x0, double r, const Grid& target, const Mat& S);
ScalarField rescale(const ScalarField& u, const Vec& x0, double r, const Grid& target);

/// int_{B_1} |grad v|^2 - int_{dB_1} v^2 + Lambda q0 |{v > 0} cap B_1|; v must live on B_2.
double weiss(const ScalarField& v, double Lambda, double q0);

/// z(x) = |x| v(x / |x|), built from samples of v on the unit sphere.
ScalarField homogeneous_extension(const ScalarField& v);

/// int_{dB_1} |x . grad v - v|^2.
double homogeneity_deviation(const ScalarField& v);

struct WeissTrace {
  BlowupFrame frame;
  std::vector<double> radii;
  std::vector<double> W;      ///< W(u_r)
  std::vector<double> W_hom;  ///< W(z_r)
  std::vector<double> H;
  std::vector<double> slack;  ///< W_hom - W - H / n
  std::vector<double> derivative;  ///< (W_k - W_{k+1}) / (r_k - r_{k+1})
  double C_W = 0.0;                ///< max(0, -min slack / r)
  double min_derivative = 0.0;
  ScalarField finest;  ///< u_r at the smallest radius
  std::string csv() const;
};

/// Errors: OutOfBox, NotBoundaryPoint (no sign change within 2h of x0).
/// Radii below 8h are dropped.
WeissTrace weiss_trace(const ScalarField& u, const ProblemSpec& spec, double Lambda, const Vec& x0,
                       std::vector<double> radii);

enum class BlowupKind { Regular, Unresolved };

struct BlowupClass {
  BlowupKind kind = BlowupKind::Unresolved;
  Vec nu;            ///< inward normal in original coordinates, S^{-1} nu_hat
  Vec nu_hat;        ///< unit normal in blow-up coordinates
  double alpha = 0.0;
  double misfit = 0.0;  ///< relative L2(B_1) misfit to alpha (x . nu_hat)_+
};

/// Least-squares fit of the finest rescaling to a half-plane profile.
BlowupClass classify_blowup(const WeissTrace& trace, double tol = 0.1);
/// The fit alone, for a field on the blow-up grid.
BlowupClass fit_halfplane(const ScalarField& v);

}  // namespace fb
