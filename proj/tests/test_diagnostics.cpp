#include <algorithm>
#include <cmath>
#include <functional>

#include "doctest.h"
#include "fb/diagnostics.hpp"
#include "fb/error.hpp"
#include "fb/oracle.hpp"
#include "fb/solve.hpp"

using namespace fb;

namespace {

Vec pt(double a, double b) {
  Vec x(2);
  x << a, b;
  return x;
}

ProblemSpec torsion_spec(double m = kPi) {
  ProblemConfig c;
  c.dim = 2;
  c.nonlinearity = "constant_f";
  c.nonlinearity_params = {1.0};
  c.volume = m;
  return build_problem(c);
}

ScalarField torsion_field(const Grid& g, double rho) {
  const RadialSolution t = torsion_ball(g.dim, rho);
  return sample_function(g, [&](const Vec& x) { return x.norm() < rho ? t.u(x.norm()) : 0.0; });
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an fb::Error");
  return ErrorCode::InvalidArgument;
}

// Boundary points of the half-plane field away from the box edges.
BoundaryPointSet central_points(const ScalarField& u) {
  BoundaryPointSet b = extract_free_boundary(u);
  std::erase_if(b.points, [](const BoundaryPoint& p) { return std::abs(p.x[1]) > 1.0; });
  return b;
}

double angle(const Vec& a, const Vec& b) {
  return std::acos(std::clamp(a.dot(b) / (a.norm() * b.norm()), -1.0, 1.0));
}

}  // namespace

TEST_CASE("extract_free_boundary examples") {
  const double h = 1.0 / 128;
  const Grid g = Grid::centered(2, 1.5, h);
  const BoundaryPointSet b = extract_free_boundary(torsion_field(g, 1.0));
  CHECK(b.size() > 500);
  for (const BoundaryPoint& p : b.points) {
    CHECK(std::abs(p.x.norm() - 1.0) <= 2 * h);
    CHECK(angle(p.normal, p.x) <= 0.1);
  }
  CHECK(hausdorff_to_sphere(b, Vec::Zero(2), 1.0) <= 2 * h);

  const ScalarField half = sample_function(g, [](const Vec& x) { return std::max(0.0, x[0]); });
  const BoundaryPointSet hb = extract_free_boundary(half);
  for (const BoundaryPoint& p : hb.points) {
    CHECK(std::abs(p.x[0]) <= 1e-12);
    CHECK(angle(p.normal, pt(-1, 0)) <= 1e-9);
  }

  CHECK(code_of([&] { extract_free_boundary(ScalarField(g)); }) == ErrorCode::EmptySupport);
}

TEST_CASE("pde_residual examples") {
  const ProblemSpec s = torsion_spec();
  const Grid g = Grid::centered(2, 1.5, 1.0 / 128);
  const ScalarField u = torsion_field(g, 1.0);
  const PdeResidual r = pde_residual(u, s, 3);
  CHECK(r.sup <= 0.05);
  CHECK(r.nodes > 1000);
  CHECK(r.M1 == 1.0);

  const ScalarField w = harmonic_replacement(ScalarField(g), s, Vec::Zero(2), 0.5);
  CHECK(pde_residual(w, s, 3).sup <= 1e-8);

  ScalarField p = u;
  ScalarField p2 = u;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const Vec x = g.node_position(i);
    const double bump = std::exp(-((x - pt(0.2, 0.1)).squaredNorm()) / 0.02);
    if (u[i] > 0.0) {
      p[i] += 1e-3 * bump;
      p2[i] += 2e-3 * bump;
    }
  }
  const double e1 = pde_residual(p, s, 3).sup, e2 = pde_residual(p2, s, 3).sup;
  CHECK(e1 > r.sup);
  CHECK(e2 / e1 == doctest::Approx(2.0).epsilon(0.01));
}

TEST_CASE("neumann_check examples") {
  const double h = 1.0 / 128;
  const ProblemSpec s = torsion_spec();
  const Grid g = Grid::centered(2, 1.5, h);
  const ScalarField u = torsion_field(g, 1.0);
  const BoundaryPointSet b = extract_free_boundary(u);
  const NeumannReport r = neumann_check(u, s, 0.25, b);
  CHECK(r.median <= 0.1);
  CHECK(r.fraction_within >= 0.9);
  CHECK(r.q10 <= r.median);
  CHECK(r.median <= r.q90);
  for (double v : r.residual) CHECK(v >= 0.0);

  const ScalarField small = torsion_field(g, 0.5);
  const BoundaryPointSet bs = extract_free_boundary(small);
  CHECK(neumann_check(small, torsion_spec(kPi / 4), 1.0 / 16, bs).median <= 0.1);

  CHECK(neumann_check(u, s, 0.125, b).median == doctest::Approx(1.0).epsilon(0.1));
  CHECK(code_of([&] { neumann_check(u, s, 0.0, b); }) == ErrorCode::LambdaNonPositive);
}

TEST_CASE("lipschitz_and_sup examples") {
  const ProblemSpec s = torsion_spec();
  const Grid g = Grid::centered(2, 1.5, 1.0 / 128);
  const LipschitzReport t = lipschitz_and_sup(torsion_field(g, 1.0), s);
  CHECK(t.L == doctest::Approx(0.5).epsilon(0.02));
  CHECK(t.sup == doctest::Approx(0.25).epsilon(1e-4));
  CHECK(t.M1 == 1.0);

  const LipschitzReport z = lipschitz_and_sup(ScalarField(g), s);
  CHECK(z.L == 0.0);
  CHECK(z.sup == 0.0);
  CHECK(z.M1 == 1.0);

  const ScalarField cone = sample_function(g, [](const Vec& x) { return std::max(0.0, 1.0 - x.norm()); });
  CHECK(lipschitz_and_sup(cone, s).L == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("sphere_average") {
  const Grid g = Grid::centered(2, 1.0, 1.0 / 64);
  const ScalarField lin = sample_function(g, [](const Vec& x) { return 1.0 + x[0] + 2 * x[1]; });
  CHECK(sphere_average(lin, pt(0.1, 0.2), 0.3) == doctest::Approx(1.5).epsilon(1e-12));
  const Grid g3 = Grid::centered(3, 1.0, 1.0 / 16);
  const ScalarField sq = sample_function(g3, [](const Vec& x) { return x.squaredNorm(); });
  CHECK(sphere_average(sq, Vec::Zero(3), 0.5) == doctest::Approx(0.25).epsilon(0.02));
}

TEST_CASE("nondegeneracy_scan examples") {
  const double h = 1.0 / 128;
  const Grid g = Grid::centered(2, 1.5, h);
  const ScalarField u = torsion_field(g, 1.0);
  const BoundaryPointSet b = extract_free_boundary(u);
  const std::vector<double> radii{4 * h, 0.05, 0.1};
  const NondegeneracyReport r = nondegeneracy_scan(u, b, radii, 0.05);
  // Near a flat interface of slope 1/2, s = (1/2) * mean of cos_+ = 1 / (2 pi).
  CHECK(r.kappa0 == doctest::Approx(1.0 / (2 * kPi)).epsilon(0.15));
  CHECK(r.C_upper <= 0.2);
  CHECK(r.kappa0 <= r.C_upper);
  CHECK(r.pass);

  const double alpha = 3.0;
  const ScalarField half = sample_function(g, [&](const Vec& x) { return alpha * std::max(0.0, x[0]); });
  const NondegeneracyReport hr = nondegeneracy_scan(half, central_points(half), {0.05, 0.1}, 0.0);
  CHECK(hr.kappa0 == doctest::Approx(alpha / kPi).epsilon(0.01));
  CHECK(hr.C_upper == doctest::Approx(alpha / kPi).epsilon(0.01));

  BoundaryPointSet fake;
  fake.grid = g;
  fake.points.push_back({pt(1.3, 0.0), pt(1, 0), 0, 0});
  const NondegeneracyReport fr = nondegeneracy_scan(u, fake, {0.05}, 0.0);
  CHECK(fr.kappa0 == 0.0);
  CHECK(!fr.pass);

  CHECK(code_of([&] { nondegeneracy_scan(u, b, {h}); }) == ErrorCode::RadiiOutOfRange);
  CHECK(code_of([&] { nondegeneracy_scan(u, b, {0.3}); }) == ErrorCode::RadiiOutOfRange);
}

TEST_CASE("density_scan examples") {
  const double h = 1.0 / 128;
  const Grid g = Grid::centered(2, 1.5, h);
  const ScalarField half = sample_function(g, [](const Vec& x) { return std::max(0.0, x[0]); });
  const BoundaryPointSet hb = central_points(half);
  const std::vector<double> radii{0.05, 0.1};
  const DensityReport hr = density_scan(half, hb, radii);
  for (const auto& row : hr.ratio)
    for (std::size_t k = 0; k < radii.size(); ++k) CHECK(std::abs(row[k] - 0.5) <= 2 * h / radii[k]);

  const ScalarField disk = torsion_field(g, 1.0);
  const DensityReport dr = density_scan(disk, extract_free_boundary(disk), radii);
  for (const auto& row : dr.ratio)
    for (std::size_t k = 0; k < radii.size(); ++k) CHECK(row[k] <= 0.5 + 2 * h / radii[k]);
  CHECK(dr.max < 0.98);

  BoundaryPointSet inner;
  inner.grid = g;
  inner.points.push_back({Vec::Zero(2), pt(1, 0), 0, 0});
  const DensityReport ir = density_scan(disk, inner, radii);
  CHECK(ir.max == doctest::Approx(1.0));
  CHECK(ir.non_boundary[0]);
}

TEST_CASE("exterior_measure_check examples") {
  const double h = 1.0 / 128;
  const Grid g = Grid::centered(2, 1.5, h);
  const ScalarField disk = torsion_field(g, 1.0);
  const BoundaryPointSet b = extract_free_boundary(disk);
  const ExteriorReport r = exterior_measure_check(disk, b, 0.05);
  CHECK(r.all_pass);
  CHECK(!r.inconclusive);
  for (std::size_t z : r.zero_nodes) CHECK(z >= 1);

  const ExteriorReport t = exterior_measure_check(disk, b, 0.5 * h);
  CHECK(t.inconclusive);
  CHECK(!t.all_pass);
}

TEST_CASE("harnack_check examples") {
  const double h = 1.0 / 128;
  const Grid g = Grid::centered(2, 1.0, h);
  const std::vector<Vec> c{Vec::Zero(2)};
  const double r = 0.5;

  const ScalarField one = sample_function(g, [](const Vec&) { return 1.0; });
  const HarnackReport a = harnack_check(one, 0.0, c, {r});
  CHECK(a.C1 == doctest::Approx(1.0));
  CHECK(a.C2 <= 1e-12);
  CHECK(a.M_certified);
  CHECK(a.mean_value_constant == 4.0);

  const double rb = r + 2 * h;
  const ScalarField bowl = sample_function(g, [&](const Vec& x) { return (rb * rb - x.squaredNorm()) / 4; });
  const HarnackReport b = harnack_check(bowl, 1.0, c, {r});
  CHECK(std::isfinite(b.C1));
  CHECK(b.C1 <= 4.0 * (1.0 + 1.0 / 4));
  CHECK(b.M_certified);

  const ScalarField ramp = sample_function(g, [&](const Vec& x) { return x[0] + r; });
  const HarnackReport d = harnack_check(ramp, 0.0, c, {r});
  CHECK(d.C2 == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(d.pass);

  const ScalarField neg = sample_function(g, [](const Vec& x) { return x[0]; });
  CHECK(code_of([&] { harnack_check(neg, 0.0, c, {r}); }) == ErrorCode::NegativeOnSphere);
  CHECK(!harnack_check(bowl, 0.5, c, {r}).M_certified);
}

TEST_CASE("neumann_csv") {
  const Grid g = Grid::centered(2, 1.5, 1.0 / 32);
  const ScalarField u = torsion_field(g, 1.0);
  const BoundaryPointSet b = extract_free_boundary(u);
  const std::string csv = neumann_csv(b, neumann_check(u, torsion_spec(), 0.25, b));
  CHECK(csv.rfind("x0,x1,nu0,nu1,g,target,residual\n", 0) == 0);
  CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == b.size() + 1);
}
