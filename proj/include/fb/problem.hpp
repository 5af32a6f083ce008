#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fb/linalg.hpp"

namespace fb {

enum class NonlinearityKind { ConstantF, LinearF, QuadraticF, BumpTimesU, CustomTable };

/// The potential F(x, u) together with f = dF/du and f' = d^2F/du^2.
///
/// Every builtin has closed-form derivatives; the custom table is a monotone
/// cubic (Fritsch-Carlson) interpolant of (u, F) pairs and differentiates the
/// interpolant exactly.
class Nonlinearity {
 public:
  /// f(x, u) = c.
  static Nonlinearity constant_f(double c);
  /// f(x, u) = a + slope * u.
  static Nonlinearity linear_f(double a, double slope);
  /// F(x, u) = a * u + b * u^2.
  static Nonlinearity quadratic_F(double b, double a = 0.0);
  /// F(x, u) = phi(x) u, phi == 1 on the ball of volume m/2 around each center,
  /// radially decreasing to 0 on the sphere bounding the ball of volume m.
  static Nonlinearity bump_times_u(int dim, double m, std::vector<Vec> centers);
  /// Tabulated F; the first pair must be (0, 0).
  static Nonlinearity custom_table(std::vector<double> u, std::vector<double> F);

  NonlinearityKind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  const std::vector<double>& params() const { return params_; }
  /// Points where f(., 0) is maximal, used for witnesses and solver seeds.
  const std::vector<Vec>& seed_points() const { return seeds_; }
  bool depends_on_x() const { return kind_ == NonlinearityKind::BumpTimesU; }

  double F(const Vec& x, double u) const;
  double f(const Vec& x, double u) const;
  double fprime(const Vec& x, double u) const;
  /// Gradient of F in x at fixed u.
  Vec grad_x_F(const Vec& x, double u) const;

  /// phi(x) of the bump nonlinearity (1 for the others).
  double bump(const Vec& x) const;

 private:
  NonlinearityKind kind_ = NonlinearityKind::ConstantF;
  std::string name_;
  std::vector<double> params_;
  std::vector<Vec> seeds_;
  // bump_times_u
  double r_inner_ = 0.0;
  double r_outer_ = 0.0;
  // custom_table
  std::vector<double> tu_, tF_, td_;

  double bump_slope(double s) const;
  void table_eval(double u, double* F, double* f, double* fp) const;
};

enum class MatrixKind { Identity, ConstantSpd, PeriodicSpd };

/// Coefficient matrix field A(x).
class CoefficientMatrix {
 public:
  static CoefficientMatrix identity(int dim);
  /// Row-major entries; `lambda` <= 0 selects the tightest value from the eigenvalues.
  static CoefficientMatrix constant_spd(int dim, std::vector<double> entries, double lambda = 0.0);
  /// A_ii = 1 + amp cos(2 pi x_i / T), A_ij = (amp/2) sin(2 pi x_i / T) sin(2 pi x_j / T);
  /// `asym` is added to A_01 only, to build deliberately non-symmetric test data.
  static CoefficientMatrix periodic_spd(int dim, double period, double amp, double asym = 0.0,
                                        double lambda = 0.0);

  MatrixKind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  const std::vector<double>& params() const { return params_; }
  int dim() const { return dim_; }
  double lambda() const { return lambda_; }
  std::optional<double> period() const { return period_; }

  double entry(const Vec& x, int i, int j) const;
  Mat operator()(const Vec& x) const;
  /// (grad A . xi)(x), the derivative of A along xi, by central differences.
  Mat derivative_along(const Vec& x, const Vec& xi) const;

 private:
  MatrixKind kind_ = MatrixKind::Identity;
  std::string name_;
  std::vector<double> params_;
  int dim_ = 1;
  double lambda_ = 1.0;
  std::optional<double> period_;
  Mat constant_;
  double amp_ = 0.0;
  double asym_ = 0.0;
};

enum class WeightKind { ConstantQ, PeriodicQ };

/// Volume weight q(x) with declared bounds q_lo <= q <= q_hi.
class WeightField {
 public:
  static WeightField constant_q(double c);
  /// q = c (1 + amp * mean_i cos(2 pi x_i / T)).
  static WeightField periodic_q(double period, double c, double amp);

  WeightKind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  const std::vector<double>& params() const { return params_; }
  double q_lo() const { return q_lo_; }
  double q_hi() const { return q_hi_; }
  std::optional<double> period() const { return period_; }

  double operator()(const Vec& x) const;
  Vec gradient(const Vec& x) const;

 private:
  WeightKind kind_ = WeightKind::ConstantQ;
  std::string name_;
  std::vector<double> params_;
  double c_ = 1.0;
  double amp_ = 0.0;
  double q_lo_ = 1.0;
  double q_hi_ = 1.0;
  std::optional<double> period_;
};

/// Complete problem data for one run.
struct ProblemSpec {
  int dim = 2;
  Nonlinearity nonlinearity;
  CoefficientMatrix matrix;
  WeightField weight;
  double volume = 1.0;  ///< the q-volume target m
  std::optional<double> period;

  /// F(x, u); throws NegativeU for u < 0.
  double F(const Vec& x, double u) const;
  double f(const Vec& x, double u) const;
  double fprime(const Vec& x, double u) const;
  Mat A(const Vec& x) const { return matrix(x); }
  double q(const Vec& x) const { return weight(x); }
};

/// Builtin names and parameter lists as read from a configuration file.
struct ProblemConfig {
  int dim = 2;
  std::string nonlinearity = "constant_f";
  std::vector<double> nonlinearity_params{1.0};
  std::string matrix = "identity";
  std::vector<double> matrix_params;
  std::string weight = "constant_q";
  std::vector<double> weight_params{1.0};
  double volume = 1.0;
  std::optional<double> period;
};

/// Builds a ProblemSpec from registered builtins.
/// Errors: UnknownBuiltin, NonPositiveVolumeTarget, PeriodMismatch.
ProblemSpec build_problem(const ProblemConfig& config);

// Free-function evaluators mirroring the member functions.
double eval_F(const ProblemSpec& spec, const Vec& x, double u);
double eval_f(const ProblemSpec& spec, const Vec& x, double u);
double eval_fprime(const ProblemSpec& spec, const Vec& x, double u);

/// Names accepted by build_problem, for documentation and error messages.
std::vector<std::string> nonlinearity_builtins();
std::vector<std::string> matrix_builtins();
std::vector<std::string> weight_builtins();

}  // namespace fb
