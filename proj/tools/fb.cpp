#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "fb/admissibility.hpp"
#include "fb/diagnostics.hpp"
#include "fb/error.hpp"
#include "fb/geometry.hpp"
#include "fb/oracle.hpp"
#include "fb/pipeline.hpp"
#include "fb/scenarios.hpp"
#include "fb/weiss.hpp"

using namespace fb;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string scenario;
  std::string config;
  std::string h;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  double box = 0.0;
  int multistart = 0;
  bool strict = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--scenario", c.scenario, "built-in scenario name");
  app->add_option("--config", c.config, "configuration file");
  app->add_option("--h", c.h, "grid spacing, e.g. 1/128");
  app->add_option_function<std::uint64_t>("--seed", [&c](const std::uint64_t& s) { c.seed = s, c.seed_set = true; }, "random seed");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--box", c.box, "truncation box radius");
  app->add_option("--multistart", c.multistart, "independent replicas");
  app->add_flag("--strict", c.strict, "advisory verdicts count as failures");
}

RunConfig config_from_manifest(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw Error(ErrorCode::InvalidArgument, "no --scenario/--config and no " + manifest.string());
  std::map<std::string, std::string> sections;
  std::vector<std::string> order;
  std::string line, name = "manifest";
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq), value = line.substr(eq + 3);
    if (key == "scenario") name = value;
    if (key.rfind("config.", 0) != 0) continue;
    const auto dot = key.find('.', 7);
    const std::string section = key.substr(7, dot - 7);
    if (!sections.count(section)) order.push_back(section);
    sections[section] += key.substr(dot + 1) + " = " + value + "\n";
  }
  std::string text;
  for (const auto& s : order) text += "[" + s + "]\n" + sections[s];
  return parse_config_text(text, name);
}

RunConfig resolve(const Common& c, const std::string& input = {}) {
  RunConfig cfg;
  if (!c.config.empty()) cfg = parse_config(c.config);
  else if (!c.scenario.empty()) cfg = scenario(c.scenario);
  else if (!input.empty()) cfg = config_from_manifest(fs::path(input).parent_path() / "manifest.txt");
  else throw Error(ErrorCode::InvalidArgument, "give --scenario or --config");
  if (!c.h.empty()) cfg.solver.h = parse_number(c.h);
  if (c.seed_set) cfg.solver.seed = c.seed;
  if (c.box > 0.0) cfg.solver.box_radius = c.box;
  if (c.multistart > 0) cfg.solver.multistart = c.multistart;
  return cfg;
}

void print_checks(const std::vector<Check>& checks, bool strict) {
  for (const Check& ch : checks)
    std::printf("%-4s %-20s %s\n", verdict_label(ch, strict).c_str(), ch.name.c_str(), ch.detail.c_str());
}

void write_text(const fs::path& p, const std::string& body) {
  if (!p.parent_path().empty()) fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << body;
}

int cmd_solve(const Common& c) {
  const RunConfig cfg = resolve(c);
  const PipelineResult r = run_pipeline(cfg, {c.out, c.strict});
  std::cout << r.manifest.text();
  print_checks(r.checks, c.strict);
  std::printf("manifest_sha256 %s\n", r.manifest_checksum.c_str());
  if (!r.ok()) {
    std::cerr << "failures:\n" << r.failure_list();
    return 1;
  }
  return 0;
}

int cmd_analyze(const Common& c, const std::string& in, bool neumann_only, double lambda) {
  const ScalarField u = read_field(in);
  const RunConfig cfg = resolve(c, in);
  const ProblemSpec spec = build_problem(cfg.problem);
  const double L = lambda > 0.0 ? lambda : multiplier_estimate(u, spec);
  const fs::path out = c.out.empty() ? fs::path(in).parent_path() : fs::path(c.out);
  if (neumann_only) {
    const BoundaryPointSet b = extract_free_boundary(u);
    const NeumannReport nr = neumann_check(u, spec, L, b, cfg.diagnostics.neumann_tol);
    write_text(out / "neumann.csv", neumann_csv(b, nr));
    std::printf("Lambda %.10g\nneumann.median %.6g\nneumann.fraction_within %.6g\nwrote %s\n", L, nr.median,
                nr.fraction_within, (out / "neumann.csv").c_str());
    return 0;
  }
  const Analysis a = analyze_field(u, spec, cfg, L);
  std::string summary = "Lambda = " + std::to_string(L) + "\n" + a.summary.text();
  for (const auto& [name, body] : a.files) write_text(out / name, body);
  write_text(out / "analysis.txt", summary);
  std::cout << summary;
  print_checks(a.checks, c.strict);
  const bool ok = std::all_of(a.checks.begin(), a.checks.end(), [&](const Check& ch) { return verdict_label(ch, c.strict) != "FAIL"; });
  return ok ? 0 : 1;
}

Vec parse_point(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) v.push_back(parse_number(item));
  Vec x(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) x[static_cast<Eigen::Index>(i)] = v[i];
  return x;
}

int cmd_weiss(const Common& c, const std::string& in, const std::string& point, double lambda) {
  const ScalarField u = read_field(in);
  const RunConfig cfg = resolve(c, in);
  const ProblemSpec spec = build_problem(cfg.problem);
  const double L = lambda > 0.0 ? lambda : multiplier_estimate(u, spec);
  std::vector<double> radii;
  for (double k : cfg.weiss.radii_h) radii.push_back(k * u.grid.h);
  Vec x0;
  if (!point.empty()) {
    // Snap the request to the nearest extracted boundary point.
    const Vec want = parse_point(point);
    const BoundaryPointSet b = extract_free_boundary(u);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : b.points)
      if ((p.x - want).norm() < best) best = (p.x - want).norm(), x0 = p.x;
  } else {
    x0 = extract_free_boundary(u).points.front().x;
  }
  const WeissTrace t = weiss_trace(u, spec, L, x0, radii);
  const BlowupClass k = classify_blowup(t, cfg.weiss.tol);
  std::cout << t.csv();
  std::printf("point");
  for (Eigen::Index i = 0; i < x0.size(); ++i) std::printf(" %.8g", x0[i]);
  std::printf("\nLambda %.10g\nC_W %.6g\nmin_derivative %.6g\nkind %s\nalpha %.6g\nmisfit %.6g\nnu",
              L, t.C_W, t.min_derivative, k.kind == BlowupKind::Regular ? "Regular" : "Unresolved", k.alpha, k.misfit);
  for (Eigen::Index i = 0; i < k.nu.size(); ++i) std::printf(" %.8g", k.nu[i]);
  std::printf("\n");
  if (!c.out.empty()) write_text(fs::path(c.out) / "weiss_trace.csv", t.csv());
  return k.kind == BlowupKind::Regular || !c.strict ? 0 : 1;
}

int cmd_compact(const Common& c, const std::string& in) {
  const ScalarField u = read_field(in);
  const RunConfig cfg = resolve(c, in);
  const ProblemSpec spec = build_problem(cfg.problem);
  const auto [v, plan] = compact_periodic(u, spec);
  const Discretization d(spec, u.grid);
  const EnergyBreakdown e0 = d.energy(u.values, 0.0, EnergyMode::sharp());
  const EnergyBreakdown e1 = d.energy(v.values, 0.0, EnergyMode::sharp());
  std::printf("%s", plan.to_string().c_str());
  std::printf("vol_q %.15g -> %.15g\nF0 %.15g -> %.15g\n", d.vol_q(u.values), d.vol_q(v.values),
              e0.dirichlet + e0.potential, e1.dirichlet + e1.potential);
  if (!c.out.empty()) {
    std::ostringstream s(std::ios::binary);
    write_field(v, s);
    write_text(fs::path(c.out) / "u_compact.fbgrid", s.str());
    write_text(fs::path(c.out) / "plan.txt", plan.to_string());
  }
  return 0;
}

int cmd_oracle() {
  std::printf("# torsion_ball(n, rho): sup, boundary_gradient, Lambda, energy\n");
  for (int n = 1; n <= 3; ++n)
    for (double rho : {1.0, 0.5}) {
      const RadialSolution t = torsion_ball(n, rho);
      std::printf("torsion_ball %d %.17g  %.17g %.17g %.17g %.17g\n", n, rho, t.sup, t.boundary_gradient, t.Lambda, t.energy);
    }
  std::printf("# lambda1_ball(n, volume)\n");
  std::printf("lambda1_ball 1 2  %.17g\n", lambda1_ball(1, 2.0));
  std::printf("lambda1_ball 2 pi  %.17g\n", lambda1_ball(2, kPi));
  std::printf("lambda1_ball 3 4pi/3  %.17g\n", lambda1_ball(3, 4.0 * kPi / 3.0));
  std::printf("bessel_j0_zero %.17g\n", bessel_j0_zero());
  std::printf("# appendix_energies(n, m): r, rho, one_ball, two_ball (printed, exact), m*\n");
  for (int n = 1; n <= 3; ++n)
    for (double m : {kPi, 4.0 * kPi, 8.0 * kPi}) {
      const AppendixEnergies a = appendix_energies(n, m);
      std::printf("appendix %d %.17g  %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", n, m, a.r, a.rho,
                  a.one_ball_printed, a.two_ball_printed, a.one_ball_exact, a.two_ball_exact, a.m_star);
    }
  std::printf("# halfplane_weiss(n, 1, 1)\n");
  for (int n = 1; n <= 3; ++n) std::printf("halfplane_weiss %d %.17g\n", n, halfplane_weiss(n, 1.0, 1.0));
  std::printf("# quadratic_blowup_trace(2, pi, b, tau = 1, 2)\n");
  for (double b : {0.0, 2.5, 3.0}) {
    const BlowupTrace t = quadratic_blowup_trace(2, kPi, b, {1.0, 2.0});
    std::printf("quadratic_blowup %g  %.17g %.17g ratio %.17g\n", b, t.energies[0], t.energies[1],
                t.energies[1] / t.energies[0]);
  }
  return 0;
}

int cmd_validate(const Common& c) {
  const RunConfig cfg = resolve(c);
  const ProblemSpec spec = build_problem(cfg.problem);
  SampleBudget budget;
  budget.seed = cfg.solver.seed;
  const AdmissibilityReport rep = check_admissibility(spec, budget);
  for (const auto& r : rep.results)
    std::printf("%-4s %-5s measured %.6g threshold %.6g %s\n", to_string(r.verdict).c_str(), r.name.c_str(), r.measured,
                r.threshold, r.note.c_str());
  std::printf("lambda1 %.10g\nN %.6g\nb %.6g\n", rep.lambda1, rep.N, rep.b);
  return rep.all_pass() ? 0 : 1;
}

int cmd_sweep(const Common& c, const std::vector<std::string>& scenarios, const std::vector<std::string>& configs,
              int replicas) {
  std::vector<RunConfig> jobs;
  auto add = [&](RunConfig cfg) {
    Common one = c;
    if (!c.h.empty()) cfg.solver.h = parse_number(c.h);
    if (c.box > 0.0) cfg.solver.box_radius = c.box;
    if (c.multistart > 0) cfg.solver.multistart = c.multistart;
    const std::uint64_t base = c.seed_set ? c.seed : cfg.solver.seed;
    for (int k = 0; k < replicas; ++k) {
      RunConfig r = cfg;
      r.solver.seed = base + static_cast<std::uint64_t>(k);
      jobs.push_back(r);
    }
  };
  for (const auto& s : scenarios) add(scenario(s));
  for (const auto& f : configs) add(parse_config(f));
  if (jobs.empty()) throw Error(ErrorCode::InvalidArgument, "sweep needs --scenario or --config entries");

  int threads = 1;
  if (const char* env = std::getenv("FB_THREADS")) threads = std::max(1, std::atoi(env));
  std::vector<PipelineResult> results(jobs.size());
  std::size_t next = 0;
  while (next < jobs.size()) {
    std::vector<std::future<void>> batch;
    for (int t = 0; t < threads && next < jobs.size(); ++t, ++next) {
      const std::size_t i = next;
      const std::string dir = c.out.empty() ? std::string()
                                            : (fs::path(c.out) / (jobs[i].name + "_seed" + std::to_string(jobs[i].solver.seed))).string();
      batch.push_back(std::async(std::launch::async, [&, i, dir] { results[i] = run_pipeline(jobs[i], {dir, c.strict}); }));
    }
    for (auto& f : batch) f.get();
  }
  bool ok = true;
  std::printf("scenario,seed,status,Lambda,vol_q,F0,manifest_sha256\n");
  for (const auto& r : results) {
    std::printf("%s,%llu,%s,%s,%s,%s,%s\n", r.config.name.c_str(), static_cast<unsigned long long>(r.config.solver.seed),
                r.ok() ? "PASS" : "FAIL", r.manifest.get("Lambda").c_str(), r.manifest.get("vol_q").c_str(),
                r.manifest.get("F0").c_str(), r.manifest_checksum.c_str());
    if (!r.ok()) {
      ok = false;
      std::cerr << r.config.name << " seed " << r.config.solver.seed << ":\n" << r.failure_list();
    }
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Volume-constrained one-phase free boundary solver"};
  app.set_help_flag("--help", "print help");
  app.require_subcommand(1);
  Common c;
  std::string in, point;
  bool neumann = false;
  double lambda = 0.0;
  int replicas = 1;
  std::vector<std::string> sweep_scenarios, sweep_configs;

  auto* solve = app.add_subcommand("solve", "solve a scenario and run every diagnostic");
  add_common(solve, c);
  auto* analyze = app.add_subcommand("analyze", "diagnostics on a saved field");
  add_common(analyze, c);
  analyze->add_option("--in", in, "FBGRID1 field")->required();
  analyze->add_flag("--neumann", neumann, "only the Neumann report");
  analyze->add_option("--lambda", lambda, "multiplier (default: dilation estimate)");
  auto* weiss = app.add_subcommand("weiss", "Weiss trace and blow-up class at a boundary point");
  add_common(weiss, c);
  weiss->add_option("--in", in, "FBGRID1 field")->required();
  weiss->add_option("--point", point, "x,y[,z]; snapped to the nearest boundary point");
  weiss->add_option("--lambda", lambda, "multiplier (default: dilation estimate)");
  auto* compact = app.add_subcommand("compact", "periodic compaction of enlarged components");
  add_common(compact, c);
  compact->add_option("--in", in, "FBGRID1 field")->required();
  auto* oracle = app.add_subcommand("oracle", "print closed-form reference values");
  auto* validate = app.add_subcommand("validate", "admissibility checks only");
  add_common(validate, c);
  auto* sweep = app.add_subcommand("sweep", "several configurations and seeds");
  sweep->add_option("--scenario", sweep_scenarios, "scenario names")->delimiter(',');
  sweep->add_option("--config", sweep_configs, "configuration files");
  sweep->add_option("--h", c.h, "grid spacing");
  sweep->add_option_function<std::uint64_t>("--seed", [&c](const std::uint64_t& s) { c.seed = s, c.seed_set = true; }, "first seed");
  sweep->add_option("--replicas", replicas, "seeds per configuration")->check(CLI::PositiveNumber);
  sweep->add_option("--out", c.out, "output directory");
  sweep->add_option("--box", c.box, "truncation box radius");
  sweep->add_option("--multistart", c.multistart, "replicas inside each solve");
  sweep->add_flag("--strict", c.strict, "advisory verdicts count as failures");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*solve) return cmd_solve(c);
    if (*analyze) return cmd_analyze(c, in, neumann, lambda);
    if (*weiss) return cmd_weiss(c, in, point, lambda);
    if (*compact) return cmd_compact(c, in);
    if (*oracle) return cmd_oracle();
    if (*validate) return cmd_validate(c);
    if (*sweep) return cmd_sweep(c, sweep_scenarios, sweep_configs, replicas);
  } catch (const Error& e) {
    std::cerr << "error " << to_string(e.code()) << ": " << e.what() << '\n';
    return 2;
  }
  return 0;
}
