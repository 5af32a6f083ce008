#pragma once

#include <string>
#include <vector>

#include "fb/problem.hpp"
#include "fb/solve.hpp"

namespace fb {

struct DiagnosticsConfig {
  int pde_margin = 3;
  double neumann_tol = 0.15;
  double neumann_fraction = 0.9;  ///< required share of points within neumann_tol
  std::vector<double> scan_radii;  ///< empty: 4h, 8h, 16h (capped at 0.2)
  double kappa_floor = 0.0;
  double exterior_r = 0.0;         ///< 0: max(2h, 0.05)
  double corkscrew_window = 0.05;
  double merge_distance = 0.25;
  int N_max = 0;      ///< 0: no count bound
  double D_max = 0.0; ///< 0: no diameter bound
  bool harnack = true;
};

struct WeissConfig {
  bool enabled = true;
  std::vector<double> radii_h{32.0, 16.0, 8.0};  ///< radii in units of h
  int points = 64;  ///< boundary points sampled evenly; 0: all
  double tol = 0.1;
  /// Fixed radii for the monotonicity constant, so that it compares across h.
  std::vector<double> monotonicity_radii{0.25, 0.125};
};

enum class Expectation { Converge, Diverge };

struct RunConfig {
  std::string name;
  ProblemConfig problem;
  SolverConfig solver;
  DiagnosticsConfig diagnostics;
  WeissConfig weiss;
  Expectation expect = Expectation::Converge;
};

/// Numbers accept products and quotients of decimals and the literal `pi`:
/// "pi", "pi/4", "4*pi", "1/128". Errors: ParseError.
double parse_number(const std::string& text);

/// INI text with [problem], [solver], [diagnostics], [weiss]; `#` comments.
/// Errors: ParseError (with line number), UnknownKey (with a suggestion).
RunConfig parse_config_text(const std::string& text, const std::string& name = "config");
RunConfig parse_config(const std::string& path);

/// Canonical INI rendering; parse_config_text(to_ini(c)) reproduces c.
std::string to_ini(const RunConfig& config);

}  // namespace fb
