#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "fb/error.hpp"
#include "fb/oracle.hpp"
#include "fb/weiss.hpp"

using namespace fb;

namespace {

Vec pt(double a, double b) {
  Vec x(2);
  x << a, b;
  return x;
}

ProblemSpec torsion_spec(int dim = 2) {
  ProblemConfig c;
  c.dim = dim;
  c.nonlinearity = "constant_f";
  c.nonlinearity_params = {1.0};
  c.volume = unit_ball_volume(dim);
  return build_problem(c);
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

ScalarField halfplane(const Grid& g, const Vec& nu, double a) {
  return sample_function(g, [&](const Vec& x) { return a * std::max(0.0, x.dot(nu)); });
}

}  // namespace

TEST_CASE("sqrt_spd") {
  Mat I = Mat::Identity(2, 2);
  CHECK((sqrt_spd(I) - I).norm() < 1e-14);
  Mat D(2, 2);
  D << 4, 0, 0, 1;
  Mat SD(2, 2);
  SD << 2, 0, 0, 1;
  CHECK((sqrt_spd(D) - SD).norm() < 1e-12);
  Mat M(2, 2);
  M << 2, 1, 1, 2;
  const Mat S = sqrt_spd(M);
  CHECK((S * S - M).norm() < 1e-12);
  CHECK((S - S.transpose()).norm() < 1e-14);

  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  for (int k = 0; k < 100; ++k) {
    const int n = 2 + k % 2;
    Mat B(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) B(i, j) = nd(rng);
    const Mat P = B * B.transpose() + 0.1 * Mat::Identity(n, n);
    const Mat R = sqrt_spd(P);
    CHECK((R * R - P).norm() <= 1e-12 * std::max(1.0, P.norm()));
  }

  Mat N(2, 2);
  N << 1, 0, 0, -1;
  CHECK(code_of([&] { sqrt_spd(N); }) == ErrorCode::NotSPD);
  Mat A(2, 2);
  A << 1, 0.5, 0, 1;
  CHECK(code_of([&] { sqrt_spd(A); }) == ErrorCode::NotSPD);
}

TEST_CASE("rescale") {
  const Grid src = Grid::centered(2, 2.0, 1.0 / 64);
  const Vec nu = pt(0.6, 0.8);
  const ScalarField u = halfplane(src, nu, 0.5);
  const Grid tg = blowup_grid(2);
  CHECK(tg.num_nodes() == 129u * 129u);

  SUBCASE("a one-homogeneous profile is fixed") {
    for (double r : {0.5, 0.25, 0.125}) {
      const ScalarField v = rescale(u, Vec::Zero(2), r, tg);
      double err = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i)
        err = std::max(err, std::abs(v[i] - 0.5 * std::max(0.0, tg.node_position(i).dot(nu))));
      // Multilinear interpolation of the kink: at most slope * (h / r) / 4.
      CHECK(err <= 0.5 * src.h / r / 4 + 1e-12);
    }
  }
  SUBCASE("Lipschitz constant is preserved") {
    const ScalarField v = rescale(u, Vec::Zero(2), 0.25, tg);
    double L = 0.0;
    for (std::size_t c = 0; c < tg.num_cells(); ++c)
      L = std::max(L, v.sample_gradient(tg.cell_center(tg.cell_coords(c))).norm());
    CHECK(L == doctest::Approx(0.5).epsilon(1e-6));
  }
  SUBCASE("errors") {
    CHECK(code_of([&] { rescale(u, Vec::Zero(2), 1.5, tg); }) == ErrorCode::OutOfBox);
    CHECK(code_of([&] { rescale(u, pt(1.8, 0), 0.25, tg); }) == ErrorCode::OutOfBox);
  }
}

TEST_CASE("weiss energy examples") {
  for (int n : {2, 3}) {
    CAPTURE(n);
    const Grid g = blowup_grid(n);
    Vec nu = Vec::Zero(n);
    nu[0] = 0.6;
    nu[1] = 0.8;
    const double Lq = 0.25;
    CHECK(weiss(ScalarField(g), Lq, 1.0) == 0.0);
    const double expect = Lq * unit_ball_volume(n) / 2.0;
    CHECK(weiss(halfplane(g, nu, std::sqrt(Lq)), Lq, 1.0) == doctest::Approx(expect).epsilon(0.02));
    CHECK(std::abs(weiss(halfplane(g, nu, 1.0), 0.0, 1.0)) < 0.02);
    // Lambda enters only through the positivity set.
    const ScalarField hp = halfplane(g, nu, 1.0);
    CHECK(weiss(hp, 2.0, 0.5) - weiss(hp, 0.0, 1.0) == doctest::Approx(unit_ball_volume(n) / 2.0).epsilon(0.02));
  }
}

TEST_CASE("homogeneous extension and deviation") {
  const Grid g = blowup_grid(2);
  const ScalarField hp = halfplane(g, pt(1, 0), 0.5);
  const ScalarField z = homogeneous_extension(hp);
  double err = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) err = std::max(err, std::abs(z[i] - hp[i]));
  CHECK(err < 1e-3);
  CHECK(homogeneity_deviation(hp) < 1e-3);

  const ScalarField quad = sample_function(g, [](const Vec& x) { return x.squaredNorm(); });
  // x . grad |x|^2 - |x|^2 = |x|^2 = 1 on the sphere.
  CHECK(homogeneity_deviation(quad) == doctest::Approx(2 * kPi).epsilon(0.01));
}

TEST_CASE("weiss_trace on a half-plane") {
  const double h = 1.0 / 128;
  const Grid src = Grid::centered(2, 1.5, h);
  const ProblemSpec spec = torsion_spec();
  const ScalarField u = halfplane(src, pt(1, 0), 0.5);
  const WeissTrace t = weiss_trace(u, spec, 0.25, Vec::Zero(2), {0.4, 0.2, 0.1, 0.05, 0.02});
  REQUIRE(t.radii.size() == 3);  // 0.05, 0.02 < 8h are dropped
  CHECK(t.radii.front() == 0.4);
  for (std::size_t k = 0; k < t.radii.size(); ++k) {
    CHECK(t.W[k] == doctest::Approx(0.25 * kPi / 2).epsilon(0.02));
    CHECK(std::abs(t.slack[k]) < 0.01);
    CHECK(t.H[k] < 1e-3);
  }
  CHECK(t.derivative.size() == 2);
  const BlowupClass c = classify_blowup(t);
  CHECK(c.kind == BlowupKind::Regular);
  CHECK(c.alpha == doctest::Approx(0.5).epsilon(0.01));
  CHECK(c.nu[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(!t.csv().empty());

  CHECK(code_of([&] { weiss_trace(u, spec, 0.25, pt(0.5, 0), {0.1}); }) == ErrorCode::NotBoundaryPoint);
  CHECK(code_of([&] { weiss_trace(u, spec, 0.25, pt(0, 1.4), {0.1}); }) == ErrorCode::OutOfBox);
}

TEST_CASE("torsion disk blow-up") {
  const double h = 1.0 / 128;
  const Grid src = Grid::centered(2, 1.5, h);
  const ProblemSpec spec = torsion_spec();
  const RadialSolution tb = torsion_ball(2, 1.0);
  const ScalarField u = sample_function(src, [&](const Vec& x) { return x.norm() < 1.0 ? tb.u(x.norm()) : 0.0; });
  const WeissTrace t = weiss_trace(u, spec, 0.25, pt(1, 0), {32 * h, 16 * h, 8 * h});
  CHECK(t.W[1] == doctest::Approx(0.25 * kPi / 2).epsilon(0.05));
  const BlowupClass c = classify_blowup(t);
  CHECK(c.kind == BlowupKind::Regular);
  CHECK(c.alpha == doctest::Approx(0.5).epsilon(0.05));
  CHECK(c.nu[0] < -0.99);
  CHECK(c.misfit < 0.1);
}

TEST_CASE("anisotropic frame") {
  const double h = 1.0 / 64;
  ProblemConfig cfg;
  cfg.matrix = "constant_spd";
  cfg.matrix_params = {4, 0, 0, 1};
  cfg.volume = 1.0;
  const ProblemSpec spec = build_problem(cfg);
  const Grid src = Grid::centered(2, 1.5, h);
  // Zero set {x_0 < 0}, slope 1/4 along x_0: in the blow-up frame the slope is 1/2.
  const ScalarField u = halfplane(src, pt(1, 0), 0.25);
  const WeissTrace t = weiss_trace(u, spec, 0.25, Vec::Zero(2), {0.2, 0.1});
  const BlowupClass c = classify_blowup(t);
  CHECK(c.kind == BlowupKind::Regular);
  CHECK(c.alpha == doctest::Approx(0.5).epsilon(0.01));
  CHECK(c.nu_hat[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(c.nu[0] == doctest::Approx(0.5).epsilon(1e-3));
  CHECK(std::abs(c.nu[1]) < 1e-3);
}

TEST_CASE("a double wedge is not regular") {
  const Grid g = blowup_grid(2);
  const ScalarField v = sample_function(g, [](const Vec& x) { return 0.5 * std::abs(x[0]); });
  const BlowupClass c = fit_halfplane(v);
  CHECK(c.misfit > 0.3);
  const ScalarField z = ScalarField(g);
  CHECK(fit_halfplane(z).alpha == 0.0);
}
