#include <cmath>

#include "doctest.h"
#include "fb/oracle.hpp"

using namespace fb;

TEST_CASE("torsion_ball closed forms") {
  const RadialSolution a = torsion_ball(2, 1.0);
  CHECK(a.sup == doctest::Approx(0.25));
  CHECK(a.boundary_gradient == doctest::Approx(0.5));
  CHECK(a.Lambda == doctest::Approx(0.25));
  CHECK(a.energy == doctest::Approx(-kPi / 8));

  const RadialSolution b = torsion_ball(2, 0.5);
  CHECK(b.Lambda == doctest::Approx(1.0 / 16));
  CHECK(b.sup == doctest::Approx(1.0 / 16));
  CHECK(b.energy == doctest::Approx(-kPi / 128));

  const RadialSolution c = torsion_ball(1, 1.0);
  CHECK(c.energy == doctest::Approx(-2.0 / 3.0));
  CHECK(c.u(0.0) == doctest::Approx(0.5));
}

TEST_CASE("torsion_ball energy matches 512^2 quadrature") {
  for (double rho : {1.0, 0.5}) {
    const RadialSolution t = torsion_ball(2, rho);
    const int K = 512;
    const double h = 2.0 * rho / K;
    double s = 0.0;
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < K; ++j) {
        const double x = -rho + (i + 0.5) * h, y = -rho + (j + 0.5) * h;
        s += t.u(std::hypot(x, y));
      }
    // F0 = -int u for the torsion function.
    CHECK(std::abs(-s * h * h - t.energy) <= 1e-4 * std::abs(t.energy));
  }
}

TEST_CASE("Bessel zero and lambda1_ball") {
  CHECK(bessel_j0_zero() == doctest::Approx(2.404825557695773).epsilon(1e-13));
  CHECK(std::abs(bessel_j0(bessel_j0_zero())) < 1e-13);
  CHECK(lambda1_ball(2, kPi) == doctest::Approx(5.7832).epsilon(2e-4));
  CHECK(lambda1_ball(3, 4 * kPi / 3) == doctest::Approx(kPi * kPi));
  CHECK(lambda1_ball(1, 2.0) == doctest::Approx(kPi * kPi / 4));
  for (double R : {0.3, 1.0, 2.7}) CHECK(std::abs(lambda1_ball(2, kPi * R * R) * R * R - lambda1_ball(2, kPi)) <= 1e-10);
}

TEST_CASE("eigenfunction_l2sq matches quadrature") {
  for (int n : {1, 2, 3}) {
    const double R = 0.8;
    const int K = 200000;
    double s = 0.0;
    for (int k = 0; k < K; ++k) {
      const double r = (k + 0.5) * R / K;
      const double p = eigenfunction_ball(n, R, r);
      s += p * p * unit_sphere_area(n) * std::pow(r, n - 1) * R / K;
    }
    CAPTURE(n);
    CHECK(s == doctest::Approx(eigenfunction_l2sq(n, R)).epsilon(1e-6));
  }
}

TEST_CASE("appendix_energies") {
  for (int n : {1, 2, 3})
    for (double m : {0.5, 8 * kPi, 40.0}) {
      const AppendixEnergies e = appendix_energies(n, m);
      CHECK(e.rho / e.r == doctest::Approx(std::pow(2.0, 1.0 / n)).epsilon(1e-14));
    }

  // n = 2, m = 8 pi: r = 2, rho = 2 sqrt 2.
  const AppendixEnergies e = appendix_energies(2, 8 * kPi);
  CHECK(e.r == doctest::Approx(2.0));
  // -(2 pi / 4)(2^4 / 4) + (2 sqrt 2 / 4)(4 pi) = (-2 + 2 sqrt 2) pi.
  CHECK(e.one_ball_printed == doctest::Approx((-2 + 2 * std::sqrt(2.0)) * kPi));
  CHECK(e.two_ball_printed == doctest::Approx(0.0));
  CHECK(e.two_ball_wins);

  // The printed comparison flips at r = (n + 2)(2 - 2^{1/n}) / n.
  const double r_star = 4.0 - 2.0 * std::sqrt(2.0);
  CHECK(appendix_threshold(2) == doctest::Approx(2 * kPi * r_star * r_star).epsilon(1e-8));
  CHECK(appendix_energies(2, 1.01 * appendix_threshold(2)).two_ball_wins);
  CHECK(!appendix_energies(2, 0.99 * appendix_threshold(2)).two_ball_wins);

  // Exact integrals in n = 2: -3 pi r^4 / 8 and -pi r^4 / 4.
  const AppendixEnergies f = appendix_energies(2, 4 * kPi);
  CHECK(f.one_ball_exact == doctest::Approx(-3 * kPi * std::pow(f.r, 4) / 8));
  CHECK(f.two_ball_exact == doctest::Approx(-kPi * std::pow(f.r, 4) / 4));
}

TEST_CASE("halfplane_weiss") {
  CHECK(halfplane_weiss(2, 1, 1) == doctest::Approx(kPi / 2));
  CHECK(halfplane_weiss(3, 1, 1) == doctest::Approx(2 * kPi / 3));
  CHECK(halfplane_weiss(2, 0, 1) == 0.0);
}

TEST_CASE("quadratic_blowup_trace") {
  const BlowupTrace t = quadratic_blowup_trace(2, kPi, 3.0, {0.5, 1.0, 2.0, 4.0});
  CHECK(t.unit_energy < 0.0);
  CHECK(t.unit_energy == doctest::Approx((t.lambda1 - 6.0) * t.phi_l2sq));
  for (std::size_t k = 0; k + 1 < t.energies.size(); ++k)
    CHECK(std::abs(t.energies[k + 1] / t.energies[k] - 4.0) <= 1e-6);

  const double lam = lambda1_ball(2, kPi);
  const BlowupTrace z = quadratic_blowup_trace(2, kPi, lam / 2, {1.0, 3.0});
  CHECK(z.energies[1] == doctest::Approx(0.0));
  const BlowupTrace p = quadratic_blowup_trace(2, kPi, 0.0, {1.0});
  CHECK(p.energies[0] == doctest::Approx(lam * p.phi_l2sq));
}

TEST_CASE("fd_gradient on a quadratic energy is exact") {
  ProblemConfig c;
  c.dim = 2;
  c.nonlinearity = "constant_f";
  c.nonlinearity_params = {0.0};
  const ProblemSpec s = build_problem(c);
  const Grid g = Grid::centered(2, 0.5, 1.0 / 8);
  ScalarField u(g);
  for (std::size_t i = 0; i < u.size(); ++i)
    if (!g.on_boundary(g.node_coords(i))) u[i] = 0.5 + 0.01 * static_cast<double>(i % 7);
  const Discretization d(s, g);
  const auto ga = d.energy_gradient(u.values, 0.0, 0.01);
  const auto gf = fd_gradient(d, u.values, 0.0, 0.01, 1e-4);
  for (std::size_t i = 0; i < ga.size(); ++i) CHECK(std::abs(ga[i] - gf[i]) <= 1e-8);
}
