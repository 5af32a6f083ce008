// Acceptance suite: one PASS/FAIL line per criterion.
//
//   fb_acceptance [--expect-fail K ...]
//
// Exit status is the number of failing criteria not listed with --expect-fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <random>
#include <set>
#include <string>

#include "fb/diagnostics.hpp"
#include "fb/error.hpp"
#include "fb/geometry.hpp"
#include "fb/oracle.hpp"
#include "fb/pipeline.hpp"
#include "fb/scenarios.hpp"
#include "fb/weiss.hpp"

using namespace fb;

namespace {

std::map<int, bool> verdicts;

void report(int id, bool pass, const char* title, const std::string& detail) {
  verdicts[id] = pass;
  std::printf("%s %2d %s: %s\n", pass ? "PASS" : "FAIL", id, title, detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double num(const PipelineResult& r, const std::string& key) {
  const std::string v = r.manifest.get(key);
  return v.empty() ? std::nan("") : std::stod(v);
}

bool required_pass(const PipelineResult& r, const std::string& name) {
  for (const Check& c : r.checks)
    if (c.name == name) return c.pass;
  return false;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Criterion 4 helpers.
ScalarField random_field(const Grid& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  ScalarField u(g);
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (g.on_boundary(g.node_coords(i))) continue;
    u[i] = U(rng) < 0.3 ? 0.0 : 0.02 + U(rng);
  }
  return u;
}

bool near_kink(const Discretization& d, const ScalarField& u, double delta, double gap) {
  for (std::size_t c = 0; c < d.cell_q().size(); ++c) {
    const double m = d.cell_mean(u.values, c);
    if ((m > 0.0 && m < gap) || std::abs(m - delta) < gap) return true;
  }
  return false;
}

// Copies u into `big` shifted by `shift` (a lattice vector of both grids).
void paste(const ScalarField& u, ScalarField& big, const Vec& shift) {
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (u[i] == 0.0) continue;
    const Vec y = u.grid.node_position(i) + shift;
    Index3 ijk{0, 0, 0};
    for (int a = 0; a < big.grid.dim; ++a) {
      const double s = (y[a] - big.grid.origin[a]) / big.grid.h;
      ijk[a] = std::llround(s);
      if (std::abs(s - static_cast<double>(ijk[a])) > 1e-9) throw Error(ErrorCode::InvalidArgument, "grids not aligned");
    }
    big[big.grid.node_index(ijk)] = u[i];
  }
}

double sharp_F0(const Discretization& d, const ScalarField& u) {
  const EnergyBreakdown e = d.energy(u.values, 0.0, EnergyMode::sharp());
  return e.dirichlet + e.potential;
}

// Midpoint quadrature on an N x N polar grid of the disk of radius R.
template <typename Fn>
double disk_integral(double R, Fn&& f, int N = 2000) {
  double s = 0.0;
  const double dr = R / N;
  for (int i = 0; i < N; ++i) {
    const double r = (i + 0.5) * dr;
    s += f(r) * 2.0 * kPi * r * dr;
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> expected_fail;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::strcmp(argv[i], "--expect-fail") == 0) expected_fail.insert(std::atoi(argv[++i]));

  // Shipped scenarios through the full pipeline.
  std::map<std::string, PipelineResult> runs;
  for (const std::string& name : scenario_names()) {
    const auto t0 = std::chrono::steady_clock::now();
    runs[name] = run_pipeline(scenario(name));
    std::printf("# %-20s %-4s %6.1fs\n", name.c_str(), runs[name].ok() ? "ok" : "FAIL", seconds_since(t0));
    std::fflush(stdout);
  }

  // 1. Serrin / torsion recovery.
  {
    const PipelineResult& r = runs["serrin_torsion"];
    const double h = r.config.solver.h;
    const double L = num(r, "Lambda"), vol = num(r, "vol_q"), F0 = num(r, "F0"), med = num(r, "neumann.median");
    double haus = std::nan("");
    if (r.solved && r.run.u.max() > 0.0) haus = hausdorff_to_sphere(extract_free_boundary(r.run.u), Vec::Zero(2), 1.0);
    const double solve_s = r.timings.empty() ? 0.0 : r.timings[0].second;
    const bool pass = r.run.converged && std::abs(L - 0.25) <= 0.025 && std::abs(vol - kPi) / kPi <= 0.01 &&
                      std::abs(F0 + kPi / 8) <= 0.01 * kPi / 8 && haus <= 3 * h && med <= 0.10 && solve_s <= 300;
    report(1, pass, "Serrin/torsion recovery",
           fmt("Lambda %.5f, vol err %.2e, F0 err %.2e (rel), Hausdorff %.4f (3h %.4f), Neumann median %.4f, solve %.1fs",
               L, std::abs(vol - kPi) / kPi, std::abs(F0 + kPi / 8) / (kPi / 8), haus, 3 * h, med, solve_s));
  }

  // 2. Scaling consistency.
  {
    const PipelineResult& r = runs["serrin_small"];
    const double L = num(r, "Lambda"), sup = num(r, "sup");
    const bool pass = r.run.converged && std::abs(L - 1.0 / 16) <= 0.1 / 16 && std::abs(sup - 1.0 / 16) <= 0.05 / 16;
    report(2, pass, "Scaling consistency (m = pi/4)",
           fmt("Lambda %.5f (rel err %.3f), sup %.5f (rel err %.3f)", L, std::abs(L * 16 - 1), sup, std::abs(sup * 16 - 1)));
  }

  // 3. Saturation on every converged scenario.
  {
    bool pass = true;
    std::string detail;
    for (const auto& [name, r] : runs) {
      if (r.config.expect != Expectation::Converge) continue;
      const double ratio = num(r, "vol_q") / num(r, "m");
      const bool ok = r.run.converged && ratio >= 0.99 && ratio <= 1.01;
      pass = pass && ok;
      detail += fmt("%s %.5f%s; ", name.c_str(), ratio, ok ? "" : " (!)");
    }
    report(3, pass, "Saturation vol_q in [0.99 m, 1.01 m]", detail);
  }

  // 4. Gradient correctness.
  {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2024);
    const double delta = 0.01;
    double worst = 0.0;
    int fields = 0;
    for (const std::string& name : scenario_names()) {
      const ProblemSpec spec = build_problem(scenario(name).problem);
      const double R = name == "appendix_two_ball" ? 4.0 : 1.0;
      const Grid g = Grid::centered(2, R, 2.0 * R / 16);
      const Discretization d(spec, g);
      for (int k = 0; k < 50; ++k) {
        ScalarField u = random_field(g, rng);
        while (near_kink(d, u, delta, 1e-4)) u = random_field(g, rng);
        const std::vector<double> ga = d.energy_gradient(u.values, 0.3, delta);
        const std::vector<double> gf = fd_gradient(d, u.values, 0.3, delta, 1e-5);
        double err = 0.0, scale = 0.0;
        for (std::size_t i = 0; i < ga.size(); ++i) {
          err = std::max(err, std::abs(ga[i] - gf[i]));
          scale = std::max(scale, std::abs(ga[i]));
        }
        worst = std::max(worst, err / scale);
        ++fields;
      }
    }
    const double t = seconds_since(t0);
    report(4, worst <= 1e-6 && t <= 60, "Gradient vs finite differences",
           fmt("%d fields on 16^2 grids, worst relative error %.2e, %.1fs", fields, worst, t));
  }

  // 5. Quadratic growth.
  {
    const BlowupTrace tr = quadratic_blowup_trace(2, kPi, 3.0, {1.0, 2.0, 4.0, 8.0});
    // Discrete F0 of tau phi_1 on the scenario grid: E(2 tau) / E(tau) must be 4.
    const RunConfig qcfg = scenario("quadratic_blowup");
    const ProblemSpec qspec = build_problem(qcfg.problem);
    const Grid qg = Grid::centered(2, 1.25, qcfg.solver.h);
    const Discretization qd(qspec, qg);
    const double R = 1.0;
    std::vector<double> E;
    for (double tau : tr.taus) {
      const ScalarField v = sample_function(qg, [&](const Vec& x) {
        const double r = x.norm();
        return r < R ? tau * eigenfunction_ball(2, R, r) : 0.0;
      });
      E.push_back(sharp_F0(qd, v));
    }
    double worst = 0.0;
    for (std::size_t k = 0; k + 1 < E.size(); ++k) worst = std::max(worst, std::abs(E[k + 1] / E[k] - 4.0));
    const PipelineResult& b3 = runs["quadratic_blowup"];
    const PipelineResult& b25 = runs["quadratic_stable"];
    const bool pass = worst <= 1e-6 && tr.unit_energy < 0.0 && E[0] < 0.0 && b3.run.diverged && b25.run.converged && !b25.run.diverged;
    report(5, pass, "Quadratic growth blow-up",
           fmt("F0(phi_1) oracle %.5f, discrete %.5f, trace ratio error %.1e, b=3 diverged=%d, b=2.5 converged=%d (Lambda %.4f)", tr.unit_energy,
               E[0], worst, b3.run.diverged, b25.run.converged, num(b25, "Lambda")));
  }

  // 6. Two-ball splitting.
  {
    const PipelineResult& r = runs["appendix_two_ball"];
    const double m = r.config.problem.volume;
    const AppendixEnergies ae = appendix_energies(2, m);
    const int necc = static_cast<int>(num(r, "N_ecc"));
    const double diam = num(r, "diameter.support");
    // Quadrature of the oracle profiles against the closed forms.
    const double rho = ae.rho, rr = ae.r;
    const double one = -disk_integral(rr, [&](double s) { return (rho * rho - s * s) / 4.0; });
    const double two = 2.0 * disk_integral(rr, [&](double s) { return s * s / 4.0 - 2.0 * (rr * rr - s * s) / 4.0; });
    const double e1 = std::abs(one - ae.one_ball_exact) / std::abs(ae.one_ball_exact);
    const double e2 = std::abs(two - ae.two_ball_exact) / std::abs(ae.two_ball_exact);
    const bool pass = m > ae.m_star && r.run.converged && necc == 2 && diam >= 5.4 && e1 <= 0.01 && e2 <= 0.01;
    report(6, pass, "Two-ball splitting",
           fmt("m %.4f > m* %.4f; N_ecc %d, support diameter %.3f; quadrature vs closed form %.1e / %.1e "
               "(one-ball %.4f, two-ball %.4f, solver F0 %.4f)",
               m, ae.m_star, necc, diam, e1, e2, ae.one_ball_exact, ae.two_ball_exact, num(r, "F0")));
  }

  // 7. Periodic compaction.
  {
    const PipelineResult& r = runs["periodic_landscape"];
    const ProblemSpec spec = build_problem(r.config.problem);
    bool pass = false;
    std::string detail = "no converged periodic run";
    if (r.run.converged) {
      const double h = r.run.u.grid.h;
      const Grid big = Grid::centered(2, 12.0, h);
      ScalarField sep(big);
      Vec a(2), b(2);
      a << -6.0, 0.0;
      b << 5.0, 3.0;
      paste(r.run.u, sep, a);
      paste(r.run.u, sep, b);
      const Discretization d(spec, big);
      const auto dec = enlarge_components(connected_components(SupportMask::of(sep)));
      try {
        const auto [c, plan] = compact_periodic(sep, spec);
        const double v0 = d.vol_q(sep.values), v1 = d.vol_q(c.values);
        const double f0 = sharp_F0(d, sep), f1 = sharp_F0(d, c);
        const double dv = std::abs(v1 - v0) / v0, df = std::abs(f1 - f0);
        pass = dec.N_ecc() == 2 && dv <= 1e-12 && df <= 1e-9;
        detail = fmt("N_ecc %d, vol_q %.12f -> rel change %.1e, F0 %.12f -> change %.1e", dec.N_ecc(), v0, dv, f0, df);
      } catch (const Error& e) {
        detail = e.what();
      }
    }
    report(7, pass, "Periodic compaction", detail);
  }

  // 8 and 9. Weiss diagnostics and blow-up classification.
  {
    const double hp2 = weiss(sample_function(blowup_grid(2), [](const Vec& x) { return 0.5 * std::max(0.0, x[0]); }), 0.25, 1.0);
    Vec nu3(3);
    nu3 << 0.6, 0.0, 0.8;
    const double hp3 = weiss(sample_function(blowup_grid(3), [&](const Vec& x) { return 0.5 * std::max(0.0, x.dot(nu3)); }), 0.25, 1.0);
    const double e2 = std::abs(hp2 / halfplane_weiss(2, 0.25, 1.0) - 1), e3 = std::abs(hp3 / halfplane_weiss(3, 0.25, 1.0) - 1);

    const PipelineResult& fine = runs["serrin_torsion"];
    RunConfig coarse_cfg = scenario("serrin_torsion");
    coarse_cfg.solver.h = 1.0 / 64;
    coarse_cfg.weiss.points = 64;
    const PipelineResult coarse = run_pipeline(coarse_cfg);
    const double cw_fine = num(fine, "C_W"), cw_coarse = num(coarse, "C_W");
    const double ratio = cw_fine / cw_coarse;
    const bool mono = num(fine, "weiss.min_derivative") >= -cw_fine && num(coarse, "weiss.min_derivative") >= -cw_coarse;

    const ScalarField& u = fine.run.u;
    const ProblemSpec spec = build_problem(fine.config.problem);
    const double h = u.grid.h, L = fine.run.Lambda;
    const double target = L * kPi / 2.0;
    const BoundaryPointSet bset = extract_free_boundary(u);
    double w_dev = 0.0, a_dev = 0.0, ang = 0.0;
    int regular = 0;
    for (const BoundaryPoint& p : bset.points) {
      const WeissTrace t = weiss_trace(u, spec, L, p.x, {32 * h, 16 * h, 8 * h});
      w_dev = std::max(w_dev, std::abs(t.W[1] / target - 1.0));
      const BlowupClass c = classify_blowup(t);
      regular += c.kind == BlowupKind::Regular;
      a_dev = std::max(a_dev, std::abs(c.alpha - 0.5));
      const Vec inward = -p.x / p.x.norm();
      ang = std::max(ang, std::acos(std::clamp(c.nu.dot(inward) / c.nu.norm(), -1.0, 1.0)));
    }
    const bool pass8 = e2 <= 0.02 && e3 <= 0.02 && w_dev <= 0.05 && mono && ratio >= 0.5 && ratio <= 1.5;
    report(8, pass8, "Weiss diagnostics",
           fmt("half-plane rel err n=2 %.4f, n=3 %.4f; W(16h) max rel dev %.4f over %zu points; "
               "C_W h=1/64 %.4f, h=1/128 %.4f (ratio %.3f); min dW/dr %.4f / %.4f",
               e2, e3, w_dev, bset.size(), cw_coarse, cw_fine, ratio, num(coarse, "weiss.min_derivative"),
               num(fine, "weiss.min_derivative")));
    const bool pass9 = regular == static_cast<int>(bset.size()) && a_dev <= 0.05 && ang <= 0.1;
    report(9, pass9, "Blow-up classification",
           fmt("%d/%zu Regular, max |alpha - 1/2| %.4f, max normal angle %.4f rad", regular, bset.size(), a_dev, ang));
  }

  // 10. Structure suite over the converged shipped scenarios.
  {
    bool pass = true;
    std::string detail;
    for (const auto& [name, r] : runs) {
      if (r.config.expect != Expectation::Converge) continue;
      const double h = r.run.h;
      const bool identity = r.config.problem.matrix == "identity";
      const bool ok = num(r, "kappa0") > 0.0 && num(r, "density.max") < 0.98 && required_pass(r, "exterior_measure") &&
                      num(r, "corkscrew.min_rho") >= 1.0 / 40 - 2 * h && (!identity || required_pass(r, "harnack"));
      pass = pass && ok;
      detail += fmt("%s k0 %.3f dens %.3f rho %.4f", name.c_str(), num(r, "kappa0"), num(r, "density.max"),
                    num(r, "corkscrew.min_rho"));
      if (identity) detail += fmt(" C1 %.2f C2 %.2f", num(r, "harnack.C1"), num(r, "harnack.C2"));
      detail += ok ? "; " : " (!); ";
    }
    report(10, pass, "Structure suite", detail);
  }

  // 11. Determinism.
  {
    const RunConfig cfg = scenario("serrin_small");
    const PipelineResult a = run_pipeline(cfg);
    const PipelineResult b = run_pipeline(cfg);
    const bool pass = a.manifest_checksum == b.manifest_checksum && a.files == b.files &&
                      a.manifest_checksum == runs["serrin_small"].manifest_checksum;
    report(11, pass, "Determinism", fmt("manifest sha256 %s (x3)", a.manifest_checksum.c_str()));
  }

  int unexpected = 0;
  for (const auto& [id, pass] : verdicts)
    if (!pass && !expected_fail.count(id)) ++unexpected;
  for (int id : expected_fail)
    if (verdicts.count(id) && !verdicts[id]) std::printf("# criterion %d fails as documented\n", id);
  std::printf("# %zu criteria, %d unexpected failure(s)\n", verdicts.size(), unexpected);
  return unexpected;
}
