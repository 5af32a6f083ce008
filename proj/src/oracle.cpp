#include "fb/oracle.hpp"

#include <cmath>

#include "fb/error.hpp"

namespace fb {

RadialSolution torsion_ball(int n, double rho) {
  if (n < 1 || n > 3 || !(rho > 0.0)) throw Error(ErrorCode::InvalidArgument, "torsion_ball: n in 1..3, rho > 0");
  RadialSolution s;
  s.n = n;
  s.rho = rho;
  s.sup = rho * rho / (2.0 * n);
  s.boundary_gradient = rho / n;
  s.Lambda = rho * rho / (n * n);
  s.energy = -unit_sphere_area(n) * std::pow(rho, n + 2) / (n * n * (n + 2.0));
  return s;
}

double bessel_j0(double x) {
  const double y = 0.25 * x * x;
  double term = 1.0, sum = 1.0;
  for (int k = 1; k < 200; ++k) {
    term *= -y / (static_cast<double>(k) * k);
    sum += term;
    if (std::abs(term) < 1e-17 * std::max(1.0, std::abs(sum))) break;
  }
  return sum;
}

double bessel_j1(double x) {
  const double y = 0.25 * x * x;
  double term = 0.5 * x, sum = term;
  for (int k = 1; k < 200; ++k) {
    term *= -y / (static_cast<double>(k) * (k + 1));
    sum += term;
    if (std::abs(term) < 1e-17 * std::max(1.0, std::abs(sum))) break;
  }
  return sum;
}

double bessel_j0_zero() {
  static const double zero = [] {
    double lo = 2.0, hi = 3.0;  // J0(2) > 0 > J0(3)
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
      const double mid = 0.5 * (lo + hi);
      (bessel_j0(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }();
  return zero;
}

double lambda1_ball(int n, double volume) {
  if (!(volume > 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda1_ball needs volume > 0");
  const double R = ball_radius(n, volume);
  switch (n) {
    case 1: return kPi * kPi / (4.0 * R * R);
    case 2: return std::pow(bessel_j0_zero() / R, 2);
    case 3: return kPi * kPi / (R * R);
    default: throw Error(ErrorCode::InvalidArgument, "lambda1_ball: n in 1..3");
  }
}

double eigenfunction_ball(int n, double R, double r) {
  if (r >= R) return 0.0;
  switch (n) {
    case 1: return std::cos(0.5 * kPi * r / R);
    case 2: return bessel_j0(bessel_j0_zero() * r / R);
    default: {
      const double t = kPi * r / R;
      return t < 1e-8 ? 1.0 - t * t / 6.0 : std::sin(t) / t;
    }
  }
}

double eigenfunction_l2sq(int n, double R) {
  switch (n) {
    case 1: return R;
    case 2: return kPi * R * R * std::pow(bessel_j1(bessel_j0_zero()), 2);
    default: return 2.0 * R * R * R / kPi;
  }
}

namespace {

void appendix_printed(int n, double m, double& one, double& two, double& r, double& rho) {
  const double w = unit_sphere_area(n);
  r = ball_radius(n, 0.5 * m);
  rho = ball_radius(n, m);
  const double cap = w / (2.0 * n) * std::pow(r, n + 2) / (n + 2.0);
  one = -cap + rho / (2.0 * n) * (0.5 * m);
  two = 2.0 * (-cap + r / (2.0 * n) * (0.5 * m));
}

}  // namespace

AppendixEnergies appendix_energies(int n, double m) {
  if (n < 1 || n > 3 || !(m > 0.0)) throw Error(ErrorCode::InvalidArgument, "appendix_energies: n in 1..3, m > 0");
  AppendixEnergies e;
  e.n = n;
  e.m = m;
  appendix_printed(n, m, e.one_ball_printed, e.two_ball_printed, e.r, e.rho);
  const double w = unit_sphere_area(n);
  const double cap = w / (2.0 * n) * std::pow(e.r, n + 2) / (n + 2.0);
  e.one_ball_exact = -(e.rho * e.rho / (2.0 * n) * (0.5 * m) - cap);
  e.two_ball_exact = -2.0 * (e.r * e.r / (2.0 * n) * (0.5 * m) - cap);
  e.m_star = appendix_threshold(n);
  e.two_ball_wins = e.two_ball_printed < e.one_ball_printed;
  return e;
}

double appendix_threshold(int n) {
  auto wins = [n](double m) {
    double one, two, r, rho;
    appendix_printed(n, m, one, two, r, rho);
    return two < one;
  };
  // The sign of two - one changes once: it is negative exactly for large r.
  double lo = 1e-6, hi = 1.0;
  while (!wins(hi)) hi *= 2.0;
  while (hi - lo > 1e-10 * hi) {
    const double mid = 0.5 * (lo + hi);
    (wins(mid) ? hi : lo) = mid;
  }
  return hi;
}

std::vector<double> fd_gradient(const Discretization& disc, const std::vector<double>& u,
                                double Lambda, double delta, double step) {
  if (!(step >= 1e-7 && step <= 1e-3)) throw Error(ErrorCode::InvalidArgument, "fd step must lie in [1e-7, 1e-3]");
  const EnergyMode mode = EnergyMode::smooth(delta);
  std::vector<double> v = u, g(u.size());
  auto E = [&] { return disc.energy(v, Lambda, mode).total; };
  const double E0 = disc.energy(u, Lambda, mode).total;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (u[i] >= step) {
      v[i] = u[i] + step;
      const double ep = E();
      v[i] = u[i] - step;
      const double em = E();
      g[i] = (ep - em) / (2.0 * step);
    } else {
      v[i] = u[i] + step;
      const double e1 = E();
      v[i] = u[i] + 2.0 * step;
      const double e2 = E();
      g[i] = (-3.0 * E0 + 4.0 * e1 - e2) / (2.0 * step);
    }
    v[i] = u[i];
  }
  return g;
}

ScalarField fd_gradient(const ScalarField& u, const ProblemSpec& spec, double Lambda, double delta,
                        double step) {
  ScalarField g(u.grid);
  g.values = fd_gradient(Discretization(spec, u.grid), u.values, Lambda, delta, step);
  return g;
}

double halfplane_weiss(int n, double Lambda, double q0) {
  return Lambda * q0 * unit_ball_volume(n) / 2.0;
}

BlowupTrace quadratic_blowup_trace(int n, double m, double b, const std::vector<double>& taus) {
  BlowupTrace t;
  t.lambda1 = lambda1_ball(n, m);
  t.phi_l2sq = eigenfunction_l2sq(n, ball_radius(n, m));
  t.unit_energy = (t.lambda1 - 2.0 * b) * t.phi_l2sq;
  t.taus = taus;
  for (double tau : taus) t.energies.push_back(tau * tau * t.unit_energy);
  return t;
}

}  // namespace fb
