#include "fb/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <openssl/evp.h>

#include "fb/diagnostics.hpp"
#include "fb/error.hpp"
#include "fb/geometry.hpp"
#include "fb/weiss.hpp"

namespace fb {
namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

Check check(std::string name, bool pass, std::string detail, CheckLevel level = CheckLevel::Required) {
  return {std::move(name), pass, level, std::move(detail)};
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

std::string trace_csv(const RunResult& r) {
  std::ostringstream s;
  s.precision(12);
  s << "iteration,energy,vol,Lambda,delta\n";
  for (const TraceRow& t : r.trace) s << t.iteration << ',' << t.energy << ',' << t.vol << ',' << t.Lambda << ',' << t.delta << '\n';
  return s.str();
}

std::string field_bytes(const ScalarField& u) {
  std::ostringstream s(std::ios::binary);
  write_field(u, s);
  return s.str();
}

void add_blowups(const ScalarField& u, const ProblemSpec& spec, const RunConfig& config, double Lambda,
                 const BoundaryPointSet& bset, Analysis& a) {
  const WeissConfig& wc = config.weiss;
  const double h = u.grid.h;
  std::vector<double> radii;
  for (double k : wc.radii_h) radii.push_back(k * h);
  const std::size_t total = bset.size();
  const std::size_t count = wc.points <= 0 ? total : std::min<std::size_t>(total, wc.points);

  std::ostringstream rows;
  rows.precision(10);
  rows << "x,y,z,kind,alpha,nu_x,nu_y,nu_z,misfit,C_W,min_derivative\n";
  int regular = 0, skipped = 0;
  double worst_alpha = 0.0, worst_angle = 0.0;
  std::vector<double> cws;
  double min_derivative = std::numeric_limits<double>::infinity();
  std::string first_trace;
  for (std::size_t k = 0; k < count; ++k) {
    const BoundaryPoint& p = bset.points[k * total / count];
    const double room = u.grid.distance_to_boundary(p.x) / (2.0 * sqrt_spd(spec.A(p.x)).operatorNorm());
    auto fitting = [&](std::vector<double> rs) {
      std::erase_if(rs, [&](double r) { return r > room; });
      return rs;
    };
    WeissTrace t;
    try {
      t = weiss_trace(u, spec, Lambda, p.x, fitting(radii));
    } catch (const Error&) {
      ++skipped;
      continue;
    }
    if (t.radii.empty()) {
      ++skipped;
      continue;
    }
    const BlowupClass c = classify_blowup(t, wc.tol);
    const double target = std::sqrt(Lambda * t.frame.q0);
    regular += c.kind == BlowupKind::Regular;
    worst_alpha = std::max(worst_alpha, std::abs(c.alpha - target) / target);
    if (c.nu.size() == p.normal.size() && c.nu.norm() > 0.0) {
      const double cosang = std::clamp(-c.nu.dot(p.normal) / c.nu.norm(), -1.0, 1.0);
      worst_angle = std::max(worst_angle, std::acos(cosang));
    }
    double cw = 0.0, md = 0.0;
    try {
      const WeissTrace tm = weiss_trace(u, spec, Lambda, p.x, fitting(wc.monotonicity_radii));
      if (tm.radii.size() >= 2) {
        cw = tm.C_W;
        md = tm.min_derivative;
        cws.push_back(cw);
        min_derivative = std::min(min_derivative, md);
      }
    } catch (const Error&) {
    }
    if (first_trace.empty()) first_trace = t.csv();
    for (int d = 0; d < 3; ++d) rows << (d < p.x.size() ? p.x[d] : 0.0) << ',';
    rows << (c.kind == BlowupKind::Regular ? "Regular" : "Unresolved") << ',' << c.alpha;
    for (int d = 0; d < 3; ++d) rows << ',' << (d < c.nu.size() ? c.nu[d] : 0.0);
    rows << ',' << c.misfit << ',' << cw << ',' << md << '\n';
  }
  const int sampled = static_cast<int>(count) - skipped;
  a.summary.set("weiss.points", std::to_string(sampled));
  a.summary.set("weiss.skipped", std::to_string(skipped));
  a.summary.set("weiss.regular", std::to_string(regular));
  a.summary.set("weiss.alpha_rel_dev_max", worst_alpha);
  a.summary.set("weiss.normal_angle_max", worst_angle);
  const double C_W = cws.empty() ? 0.0 : *std::max_element(cws.begin(), cws.end());
  a.summary.set("C_W.median", median(cws));
  a.summary.set("C_W", C_W);
  a.summary.set("weiss.min_derivative", cws.empty() ? 0.0 : min_derivative);
  a.checks.push_back(check("blowup_regular", sampled > 0 && regular == sampled,
                           std::to_string(regular) + "/" + std::to_string(sampled) + " regular",
                           CheckLevel::Advisory));
  if (!cws.empty())
    a.checks.push_back(check("weiss_monotone", min_derivative >= -C_W,
                             "min dW/dr " + num(min_derivative) + " >= -C_W = " + num(-C_W), CheckLevel::Advisory));
  a.files["blowups.csv"] = rows.str();
  if (!first_trace.empty()) a.files["weiss_trace.csv"] = first_trace;
}

void add_harnack(const ScalarField& u, const LipschitzReport& lip, const BoundaryPointSet& bset, Analysis& a) {
  // Ball around the maximum point reaching half way to the free boundary.
  std::size_t imax = 0;
  for (std::size_t i = 0; i < u.size(); ++i)
    if (u[i] > u[imax]) imax = i;
  const Vec c = u.grid.node_position(imax);
  double dist = std::numeric_limits<double>::infinity();
  for (const BoundaryPoint& p : bset.points) dist = std::min(dist, (p.x - c).norm());
  const double r = 0.5 * dist;
  if (!(r >= 4.0 * u.grid.h)) {
    a.checks.push_back(check("harnack", true, "not applicable: support too thin", CheckLevel::Advisory));
    return;
  }
  const HarnackReport hr = harnack_check(u, lip.M1, {c}, {r, 0.5 * r});
  a.summary.set("harnack.C1", hr.C1);
  a.summary.set("harnack.C2", hr.C2);
  a.summary.set("harnack.bound", 4.0 * hr.mean_value_constant);
  a.checks.push_back(check("harnack", hr.pass && hr.M_certified,
                           "C1 " + num(hr.C1) + ", C2 " + num(hr.C2) + " vs " + num(4.0 * hr.mean_value_constant)));
}

}  // namespace

std::string verdict_label(const Check& c, bool strict) {
  if (c.pass) return "PASS";
  return c.level == CheckLevel::Advisory && !strict ? "WARN" : "FAIL";
}

void Manifest::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries)
    if (k == key) {
      v = value;
      return;
    }
  entries.emplace_back(key, value);
}

void Manifest::set(const std::string& key, double value) { set(key, num(value)); }

std::string Manifest::get(const std::string& key) const {
  for (const auto& [k, v] : entries)
    if (k == key) return v;
  return {};
}

std::string Manifest::text() const {
  std::string s;
  for (const auto& [k, v] : entries) s += k + " = " + v + "\n";
  return s;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorCode::InvalidArgument, "sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

Analysis analyze_field(const ScalarField& u, const ProblemSpec& spec, const RunConfig& config, double Lambda) {
  Analysis a;
  const DiagnosticsConfig& dc = config.diagnostics;
  const double h = u.grid.h;

  const ComponentDecomposition dec = enlarge_components(connected_components(SupportMask::of(u)), dc.merge_distance);
  const DiameterReport dr = diameter_report(dec, dc.N_max, dc.D_max);
  a.summary.set("N_cc", std::to_string(dec.N_cc()));
  a.summary.set("N_ecc", std::to_string(dr.N_ecc));
  a.summary.set("diameter.max_ecc", dr.max_ecc_diameter);
  a.summary.set("diameter.support", dr.support_diameter);
  a.files["components.csv"] = components_csv(dec);
  if (dc.N_max > 0) a.checks.push_back(check("ecc_count", dr.count_pass, std::to_string(dr.N_ecc) + " <= " + std::to_string(dc.N_max)));
  if (dc.D_max > 0) a.checks.push_back(check("ecc_diameter", dr.diameter_pass, num(dr.max_ecc_diameter) + " <= " + num(dc.D_max)));

  const LipschitzReport lip = lipschitz_and_sup(u, spec);
  a.summary.set("L", lip.L);
  a.summary.set("sup", lip.sup);
  a.summary.set("M1", lip.M1);
  const PdeResidual pr = pde_residual(u, spec, dc.pde_margin);
  a.summary.set("pde_residual.sup", pr.sup);
  a.summary.set("pde_residual.l2", pr.l2);

  BoundaryPointSet bset;
  try {
    bset = extract_free_boundary(u);
  } catch (const Error& e) {
    a.checks.push_back(check("free_boundary", false, e.what()));
    return a;
  }
  a.summary.set("boundary_points", std::to_string(bset.size()));

  if (Lambda > 0.0) {
    const NeumannReport nr = neumann_check(u, spec, Lambda, bset, dc.neumann_tol);
    a.summary.set("neumann.q10", nr.q10);
    a.summary.set("neumann.median", nr.median);
    a.summary.set("neumann.q90", nr.q90);
    a.summary.set("neumann.fraction_within", nr.fraction_within);
    a.files["neumann.csv"] = neumann_csv(bset, nr);
    a.checks.push_back(check("neumann", nr.fraction_within >= dc.neumann_fraction,
                             num(nr.fraction_within) + " of points within " + num(dc.neumann_tol),
                             CheckLevel::Advisory));
  } else {
    a.checks.push_back(check("neumann", false, "Lambda <= 0"));
  }

  std::vector<double> radii = dc.scan_radii;
  if (radii.empty())
    for (double k : {4.0, 8.0, 16.0})
      if (k * h <= 0.2) radii.push_back(k * h);
  std::erase_if(radii, [&](double r) { return r < 4.0 * h * (1 - 1e-12) || r > 0.2; });
  if (!radii.empty()) {
    const NondegeneracyReport nd = nondegeneracy_scan(u, bset, radii, dc.kappa_floor);
    a.summary.set("kappa0", nd.kappa0);
    a.summary.set("C_upper", nd.C_upper);
    a.checks.push_back(check("nondegeneracy", nd.kappa0 > dc.kappa_floor, "kappa0 " + num(nd.kappa0)));
    const DensityReport den = density_scan(u, bset, radii);
    a.summary.set("density.max", den.max);
    a.checks.push_back(check("density", den.max < 0.98, "max " + num(den.max)));
  }

  const double er = dc.exterior_r > 0.0 ? dc.exterior_r : std::max(2.0 * h, 0.05);
  const ExteriorReport ex = exterior_measure_check(u, bset, er);
  a.checks.push_back(check("exterior_measure", ex.all_pass && !ex.inconclusive, "r = " + num(er)));

  std::vector<Vec> pts;
  for (const BoundaryPoint& p : bset.points) pts.push_back(p.x);
  const CorkscrewReport ck = corkscrew_check(u, pts, {}, dc.corkscrew_window);
  a.summary.set("corkscrew.min_rho", ck.min_rho);
  const double floor = dc.corkscrew_window / 2.0 - 2.0 * h;
  a.checks.push_back(check("corkscrew", ck.min_rho >= floor, num(ck.min_rho) + " >= " + num(floor)));

  if (dc.harnack && spec.matrix.kind() == MatrixKind::Identity) add_harnack(u, lip, bset, a);
  if (config.weiss.enabled && Lambda > 0.0) add_blowups(u, spec, config, Lambda, bset, a);
  return a;
}

bool PipelineResult::ok() const {
  return std::all_of(checks.begin(), checks.end(), [&](const Check& c) { return verdict_label(c, strict) != "FAIL"; });
}

std::string PipelineResult::failure_list() const {
  std::string s;
  for (const Check& c : checks)
    if (verdict_label(c, strict) == "FAIL") s += c.name + ": " + c.detail + "\n";
  return s;
}

PipelineResult run_pipeline(const RunConfig& config, const PipelineOptions& options) {
  PipelineResult res;
  res.config = config;
  res.strict = options.strict;
  Stopwatch sw;
  const ProblemSpec spec = build_problem(config.problem);
  const double m = spec.volume;

  try {
    res.run = solve_constrained(spec, config.solver);
    res.solved = true;
  } catch (const Error& e) {
    res.error = e.what();
  }
  res.timings.emplace_back("solve", sw.lap());

  Manifest& mf = res.manifest;
  mf.set("tool", kToolVersion);
  mf.set("scenario", config.name);
  mf.set("seed", std::to_string(config.solver.seed));
  {
    std::istringstream ini(to_ini(config));
    std::string line, section;
    while (std::getline(ini, line)) {
      if (line.empty()) continue;
      if (line.front() == '[') {
        section = line.substr(1, line.size() - 2);
        continue;
      }
      const auto eq = line.find(" = ");
      mf.set("config." + section + "." + line.substr(0, eq), line.substr(eq + 3));
    }
  }

  std::map<std::string, std::string>& files = res.files;
  const RunResult& r = res.run;
  if (!res.solved) {
    res.checks.push_back(check("solve", false, res.error));
  } else if (config.expect == Expectation::Diverge) {
    res.checks.push_back(check("diverged_detected", r.diverged,
                               r.diverged ? "energy fell below the guard" : "solver did not report divergence"));
    mf.set("diverged", r.diverged ? "true" : "false");
    files["trace.csv"] = trace_csv(r);
  } else {
    mf.set("Lambda", r.Lambda);
    mf.set("Lambda_bisect", r.Lambda_bisect);
    mf.set("Lambda_smoothed", r.Lambda_smoothed);
    mf.set("vol_q", r.vol_q);
    mf.set("m", m);
    mf.set("energy", r.energy.total);
    mf.set("F0", r.F0);
    mf.set("h", r.h);
    mf.set("box_radius", r.box_radius);
    mf.set("replica", std::to_string(r.replica));
    res.checks.push_back(check("converged", r.converged && !r.diverged, r.message));
    res.checks.push_back(check("saturation", r.vol_q >= 0.99 * m && r.vol_q <= 1.01 * m,
                               "vol_q / m = " + num(r.vol_q / m)));
    res.checks.push_back(check("lambda_positive", r.Lambda > 0.0, "Lambda = " + num(r.Lambda)));
    res.checks.push_back(check("multiplier_interior", !r.multiplier_at_boundary, "bracket endpoint not hit",
                               CheckLevel::Advisory));
    if (r.u.max() > 0.0) {
      Analysis a = analyze_field(r.u, spec, config, r.Lambda);
      for (const auto& [k, v] : a.summary.entries) mf.set(k, v);
      for (auto& c : a.checks) res.checks.push_back(std::move(c));
      files = std::move(a.files);
    }
    files["trace.csv"] = trace_csv(r);
    files["u.fbgrid"] = field_bytes(r.u);
  }
  res.timings.emplace_back("analysis", sw.lap());

  for (const Check& c : res.checks) mf.set("verdict." + c.name, verdict_label(c, options.strict));
  mf.set("status", res.ok() ? "PASS" : "FAIL");
  for (const auto& [name, body] : files) mf.set("file." + name, sha256_hex(body));
  mf.set("file.timing.txt", "unchecked");
  res.manifest_checksum = sha256_hex(mf.text());

  if (!options.out_dir.empty()) {
    namespace fs = std::filesystem;
    const fs::path dir(options.out_dir);
    fs::create_directories(dir);
    for (const auto& [name, body] : files) std::ofstream(dir / name, std::ios::binary) << body;
    std::ofstream(dir / "manifest.txt") << mf.text();
    std::ofstream(dir / "manifest.sha256") << res.manifest_checksum << "  manifest.txt\n";
    std::ofstream t(dir / "timing.txt");
    for (const auto& [stage, s] : res.timings) t << stage << " = " << num(s) << '\n';
  }
  return res;
}

}  // namespace fb
