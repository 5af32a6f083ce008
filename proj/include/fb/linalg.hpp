#pragma once

#include <cmath>

#include <Eigen/Core>

namespace fb {

/// Points and small vectors in R^n, n <= 3.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 3, 1>;
/// Small n x n matrices, n <= 3.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;

inline constexpr double kPi = 3.14159265358979323846;

/// Hausdorff measure of the unit sphere in R^n (n = 1: two points).
inline double unit_sphere_area(int n) {
  switch (n) {
    case 1: return 2.0;
    case 2: return 2.0 * kPi;
    default: return 4.0 * kPi;
  }
}

/// Lebesgue measure of the unit ball in R^n.
inline double unit_ball_volume(int n) { return unit_sphere_area(n) / n; }

/// Radius of the ball of volume `volume` in R^n.
inline double ball_radius(int n, double volume) {
  return std::pow(volume / unit_ball_volume(n), 1.0 / n);
}

}  // namespace fb
