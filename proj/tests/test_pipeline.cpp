#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fb/error.hpp"
#include "fb/pipeline.hpp"
#include "fb/scenarios.hpp"

using namespace fb;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const Check* find(const std::vector<Check>& checks, const std::string& name) {
  for (const Check& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

RunConfig small_run() {
  RunConfig c = scenario("serrin_small");
  c.solver.h = 1.0 / 32;
  c.diagnostics.scan_radii = {1.0 / 8};
  c.weiss.points = 8;
  c.weiss.monotonicity_radii = {0.25};
  return c;
}

}  // namespace

TEST_CASE("sha256") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("manifest") {
  Manifest m;
  m.set("a", "1");
  m.set("b", 0.5);
  m.set("a", "2");
  CHECK(m.get("a") == "2");
  CHECK(m.get("b") == "0.5");
  CHECK(m.get("c").empty());
  CHECK(m.text() == "a = 2\nb = 0.5\n");
}

TEST_CASE("verdict labels") {
  Check c{"x", false, CheckLevel::Advisory, ""};
  CHECK(verdict_label(c, false) == "WARN");
  CHECK(verdict_label(c, true) == "FAIL");
  c.level = CheckLevel::Required;
  CHECK(verdict_label(c, false) == "FAIL");
  c.pass = true;
  CHECK(verdict_label(c, true) == "PASS");
}

TEST_CASE("analyze_field on the exact torsion profile") {
  RunConfig cfg = scenario("serrin_torsion");
  cfg.weiss.points = 16;
  const ProblemSpec spec = build_problem(cfg.problem);
  const Grid g = Grid::centered(2, 1.5, 1.0 / 64);
  const ScalarField u = sample_function(g, [](const Vec& x) { return std::max(0.0, (1.0 - x.squaredNorm()) / 4); });
  const Analysis a = analyze_field(u, spec, cfg, 0.25);
  for (const Check& c : a.checks) {
    CAPTURE(c.name);
    CAPTURE(c.detail);
    CHECK(c.pass);
  }
  CHECK(a.summary.get("N_ecc") == "1");
  CHECK(std::stod(a.summary.get("neumann.median")) < 0.1);
  CHECK(a.files.count("neumann.csv") == 1);
  CHECK(a.files.count("blowups.csv") == 1);
  CHECK(a.files.count("components.csv") == 1);
}

TEST_CASE("pipeline run, files and determinism") {
  const RunConfig cfg = small_run();
  const fs::path dir = fs::temp_directory_path() / "fb_test_pipeline";
  fs::remove_all(dir);
  const PipelineResult r = run_pipeline(cfg, {dir.string(), false});
  CHECK(r.solved);
  CHECK(r.ok());
  CHECK(r.failure_list().empty());
  REQUIRE(find(r.checks, "saturation"));
  CHECK(find(r.checks, "saturation")->pass);
  CHECK(std::abs(std::stod(r.manifest.get("Lambda")) - 1.0 / 16) < 0.1 / 16);
  CHECK(r.manifest.get("status") == "PASS");
  CHECK(r.manifest.get("config.problem.volume") == "0.78539816339744828");

  for (const char* f : {"manifest.txt", "manifest.sha256", "timing.txt", "u.fbgrid", "trace.csv", "neumann.csv",
                        "components.csv", "blowups.csv"})
    CHECK(fs::exists(dir / f));
  CHECK(sha256_hex(slurp(dir / "manifest.txt")) == r.manifest_checksum);
  CHECK(r.manifest.get("file.u.fbgrid") == sha256_hex(slurp(dir / "u.fbgrid")));
  const ScalarField back = read_field((dir / "u.fbgrid").string());
  CHECK(back.values == r.run.u.values);

  const PipelineResult again = run_pipeline(cfg);
  CHECK(again.manifest_checksum == r.manifest_checksum);
  RunConfig other = cfg;
  other.solver.seed = 2;
  CHECK(run_pipeline(other).manifest_checksum != r.manifest_checksum);
  fs::remove_all(dir);
}

TEST_CASE("expectations drive the exit contract") {
  RunConfig blow = scenario("quadratic_blowup");
  const PipelineResult d = run_pipeline(blow);
  REQUIRE(find(d.checks, "diverged_detected"));
  CHECK(find(d.checks, "diverged_detected")->pass);
  CHECK(d.ok());

  RunConfig wrong = small_run();
  wrong.expect = Expectation::Diverge;
  wrong.weiss.enabled = false;
  const PipelineResult w = run_pipeline(wrong);
  CHECK(!w.ok());
  CHECK(w.failure_list().find("diverged_detected") != std::string::npos);

  RunConfig refused = small_run();
  refused.problem.nonlinearity_params = {0.0};
  const PipelineResult z = run_pipeline(refused);
  CHECK(!z.solved);
  CHECK(!z.ok());
  CHECK(z.error.find("InvalidArgument") != std::string::npos);
}
