#include <fstream>
#include <functional>
#include <sstream>

#include "doctest.h"
#include "fb/error.hpp"
#include "fb/scenarios.hpp"

using namespace fb;

namespace {

Error error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e;
  }
  FAIL("expected an fb::Error");
  return Error(ErrorCode::InvalidArgument, "");
}

}  // namespace

TEST_CASE("parse_number") {
  CHECK(parse_number("pi") == kPi);
  CHECK(parse_number("pi/4") == kPi / 4);
  CHECK(parse_number("4*pi") == 4 * kPi);
  CHECK(parse_number(" 1/128 ") == 1.0 / 128);
  CHECK(parse_number("2.5") == 2.5);
  CHECK(parse_number("-3") == -3.0);
  CHECK(parse_number("1e-3") == 1e-3);
  for (const char* bad : {"", "abc", "1/", "2**3", "pie"}) {
    CAPTURE(bad);
    CHECK(error_of([&] { parse_number(bad); }).code() == ErrorCode::ParseError);
  }
}

TEST_CASE("shipped serrin_torsion parses") {
  const RunConfig c = scenario("serrin_torsion");
  CHECK(c.name == "serrin_torsion");
  CHECK(c.problem.dim == 2);
  CHECK(c.problem.volume == kPi);
  CHECK(c.problem.nonlinearity == "constant_f");
  CHECK(c.solver.h == 1.0 / 128);
  CHECK(c.expect == Expectation::Converge);
  CHECK(scenario("quadratic_blowup").expect == Expectation::Diverge);
  CHECK(scenario("quadratic_blowup").solver.force);
  CHECK(scenario("periodic_landscape").problem.period == 1.0);
}

TEST_CASE("parse errors") {
  SUBCASE("misspelt key suggests the right one") {
    const Error e = error_of([] { parse_config_text("[problem]\nvolume = 1\n[solver]\nlamda = 0.2\n"); });
    CHECK(e.code() == ErrorCode::UnknownKey);
    CHECK(std::string(e.what()).find("lambda_hint") != std::string::npos);
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
  SUBCASE("missing [problem]") {
    CHECK(error_of([] { parse_config_text("[solver]\nh = 1/32\n"); }).code() == ErrorCode::ParseError);
  }
  SUBCASE("line numbers") {
    const Error e = error_of([] { parse_config_text("# c\n[problem]\nvolume 3\n"); });
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    const Error v = error_of([] { parse_config_text("[problem]\n\nvolume = three\n"); });
    CHECK(v.code() == ErrorCode::ParseError);
    CHECK(std::string(v.what()).find("line 3") != std::string::npos);
  }
  SUBCASE("other rejections") {
    CHECK(error_of([] { parse_config_text("[problem]\n[extras]\n"); }).code() == ErrorCode::UnknownKey);
    CHECK(error_of([] { parse_config_text("[problem]\nvolume = 1\nvolume = 2\n"); }).code() == ErrorCode::ParseError);
    CHECK(error_of([] { parse_config_text("volume = 1\n[problem]\n"); }).code() == ErrorCode::ParseError);
    CHECK(error_of([] { parse_config_text("[problem]\ndim = 2.5\n"); }).code() == ErrorCode::ParseError);
    CHECK(error_of([] { parse_config_text("[problem]\n[solver]\nforce = maybe\n"); }).code() == ErrorCode::ParseError);
    CHECK(error_of([] { parse_config("/nonexistent/x.cfg"); }).code() == ErrorCode::ParseError);
  }
  SUBCASE("comments") {
    const RunConfig c = parse_config_text("[problem]\n# full line\nvolume = pi/4  # trailing\n");
    CHECK(c.problem.volume == kPi / 4);
  }
}

TEST_CASE("to_ini round trip") {
  for (const auto& name : scenario_names()) {
    CAPTURE(name);
    const RunConfig c = scenario(name);
    const std::string text = to_ini(c);
    const RunConfig d = parse_config_text(text, name);
    CHECK(to_ini(d) == text);
    CHECK(d.problem.volume == c.problem.volume);
    CHECK(d.solver.h == c.solver.h);
    CHECK(d.problem.nonlinearity_params == c.problem.nonlinearity_params);
  }
}

TEST_CASE("registry matches the shipped files") {
  const std::vector<std::string> names = scenario_names();
  CHECK(names.size() == 7);
  for (const auto& name : names) {
    CAPTURE(name);
    std::ifstream in(std::string(FB_SOURCE_DIR) + "/configs/" + name + ".cfg");
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == scenario_text(name));
    const RunConfig file = parse_config(std::string(FB_SOURCE_DIR) + "/configs/" + name + ".cfg");
    CHECK(file.name == name);
    CHECK(to_ini(file) == to_ini(scenario(name)));
  }
  CHECK(error_of([] { scenario("nope"); }).code() == ErrorCode::UnknownBuiltin);
}
