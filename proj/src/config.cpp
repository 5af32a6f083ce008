#include "fb/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "fb/error.hpp"

namespace fb {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_number(item));
  }
  return out;
}

int parse_int(const std::string& text) {
  const double v = parse_number(text);
  if (v != static_cast<int>(v)) throw Error(ErrorCode::ParseError, "expected an integer, got '" + text + "'");
  return static_cast<int>(v);
}

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw Error(ErrorCode::ParseError, "expected a boolean, got '" + text + "'");
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1])});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

struct Field {
  const char* section;
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field number(const char* s, const char* k, T RunConfig::*part, double T::*member) {
  return {s, k, [=](RunConfig& c, const std::string& v) { c.*part.*member = parse_number(v); },
          [=](const RunConfig& c) { return fmt(c.*part.*member); }};
}
template <typename T>
Field integer(const char* s, const char* k, T RunConfig::*part, int T::*member) {
  return {s, k, [=](RunConfig& c, const std::string& v) { c.*part.*member = parse_int(v); },
          [=](const RunConfig& c) { return std::to_string(c.*part.*member); }};
}
template <typename T>
Field flag(const char* s, const char* k, T RunConfig::*part, bool T::*member) {
  return {s, k, [=](RunConfig& c, const std::string& v) { c.*part.*member = parse_bool(v); },
          [=](const RunConfig& c) { return std::string(c.*part.*member ? "true" : "false"); }};
}
template <typename T>
Field list(const char* s, const char* k, T RunConfig::*part, std::vector<double> T::*member) {
  return {s, k, [=](RunConfig& c, const std::string& v) { c.*part.*member = parse_list(v); },
          [=](const RunConfig& c) { return fmt_list(c.*part.*member); }};
}
template <typename T>
Field word(const char* s, const char* k, T RunConfig::*part, std::string T::*member) {
  return {s, k, [=](RunConfig& c, const std::string& v) { c.*part.*member = v; },
          [=](const RunConfig& c) { return c.*part.*member; }};
}

const std::vector<Field>& fields() {
  using P = ProblemConfig;
  using S = SolverConfig;
  using D = DiagnosticsConfig;
  using W = WeissConfig;
  constexpr auto pr = &RunConfig::problem;
  constexpr auto so = &RunConfig::solver;
  constexpr auto di = &RunConfig::diagnostics;
  constexpr auto we = &RunConfig::weiss;
  static const std::vector<Field> f = {
      integer("problem", "dim", pr, &P::dim),
      word("problem", "nonlinearity", pr, &P::nonlinearity),
      list("problem", "nonlinearity_params", pr, &P::nonlinearity_params),
      word("problem", "matrix", pr, &P::matrix),
      list("problem", "matrix_params", pr, &P::matrix_params),
      word("problem", "weight", pr, &P::weight),
      list("problem", "weight_params", pr, &P::weight_params),
      number("problem", "volume", pr, &P::volume),
      {"problem", "period",
       [](RunConfig& c, const std::string& v) {
         if (v == "none") c.problem.period.reset();
         else c.problem.period = parse_number(v);
       },
       [](const RunConfig& c) { return c.problem.period ? fmt(*c.problem.period) : std::string("none"); }},

      number("solver", "h", so, &S::h),
      number("solver", "box_radius", so, &S::box_radius),
      number("solver", "box_cap", so, &S::box_cap),
      number("solver", "coarse_h", so, &S::coarse_h),
      integer("solver", "max_bisection", so, &S::max_bisection),
      integer("solver", "max_inner", so, &S::max_inner),
      integer("solver", "line_search_halvings", so, &S::line_search_halvings),
      integer("solver", "stall_window", so, &S::stall_window),
      list("solver", "delta_schedule", so, &S::delta_schedule),
      number("solver", "tol_vol", so, &S::tol_vol),
      number("solver", "tol_E", so, &S::tol_E),
      number("solver", "tol_g", so, &S::tol_g),
      number("solver", "volume_cap", so, &S::volume_cap),
      number("solver", "volume_stiffness", so, &S::volume_stiffness),
      number("solver", "lambda_hint", so, &S::lambda_hint),
      number("solver", "energy_guard", so, &S::energy_guard),
      integer("solver", "hr_balls", so, &S::hr_balls),
      integer("solver", "multistart", so, &S::multistart),
      {"solver", "seed",
       [](RunConfig& c, const std::string& v) {
         std::uint64_t s = 0;
         const auto r = std::from_chars(v.data(), v.data() + v.size(), s);
         if (r.ec != std::errc() || r.ptr != v.data() + v.size())
           throw Error(ErrorCode::ParseError, "expected an unsigned seed, got '" + v + "'");
         c.solver.seed = s;
       },
       [](const RunConfig& c) { return std::to_string(c.solver.seed); }},
      flag("solver", "force", so, &S::force),
      {"solver", "expect",
       [](RunConfig& c, const std::string& v) {
         if (v == "converge") c.expect = Expectation::Converge;
         else if (v == "diverge") c.expect = Expectation::Diverge;
         else throw Error(ErrorCode::ParseError, "expect must be 'converge' or 'diverge'");
       },
       [](const RunConfig& c) { return std::string(c.expect == Expectation::Converge ? "converge" : "diverge"); }},

      integer("diagnostics", "pde_margin", di, &D::pde_margin),
      number("diagnostics", "neumann_tol", di, &D::neumann_tol),
      number("diagnostics", "neumann_fraction", di, &D::neumann_fraction),
      list("diagnostics", "scan_radii", di, &D::scan_radii),
      number("diagnostics", "kappa_floor", di, &D::kappa_floor),
      number("diagnostics", "exterior_r", di, &D::exterior_r),
      number("diagnostics", "corkscrew_window", di, &D::corkscrew_window),
      number("diagnostics", "merge_distance", di, &D::merge_distance),
      integer("diagnostics", "N_max", di, &D::N_max),
      number("diagnostics", "D_max", di, &D::D_max),
      flag("diagnostics", "harnack", di, &D::harnack),

      flag("weiss", "enabled", we, &W::enabled),
      list("weiss", "radii_h", we, &W::radii_h),
      integer("weiss", "points", we, &W::points),
      number("weiss", "tol", we, &W::tol),
      list("weiss", "monotonicity_radii", we, &W::monotonicity_radii),
  };
  return f;
}

[[noreturn]] void fail_at(ErrorCode code, int line, const std::string& what) {
  throw Error(code, "line " + std::to_string(line) + ": " + what);
}

}  // namespace

double parse_number(const std::string& text) {
  const std::string s = trim(text);
  if (s.empty()) throw Error(ErrorCode::ParseError, "empty number");
  double value = 1.0;
  char op = '*';
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = s.find_first_of("*/", pos);
    const std::string tok = trim(std::string_view(s).substr(pos, next == std::string::npos ? std::string::npos : next - pos));
    double f = 0.0;
    if (tok == "pi") {
      f = kPi;
    } else if (tok == "-pi") {
      f = -kPi;
    } else {
      const char* b = tok.data();
      const char* e = b + tok.size();
      if (b != e && *b == '+') ++b;
      const auto r = std::from_chars(b, e, f);
      if (tok.empty() || r.ec != std::errc() || r.ptr != e)
        throw Error(ErrorCode::ParseError, "not a number: '" + text + "'");
    }
    value = op == '*' ? value * f : value / f;
    if (next == std::string::npos) break;
    op = s[next];
    pos = next + 1;
  }
  return value;
}

RunConfig parse_config_text(const std::string& text, const std::string& name) {
  RunConfig c;
  c.name = name;
  std::istringstream in(text);
  std::string raw, section;
  int line = 0;
  bool have_problem = false;
  std::vector<std::string> seen;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(raw);
    if (s.empty() || s[0] == '#') continue;
    if (s.front() == '[') {
      if (s.back() != ']') fail_at(ErrorCode::ParseError, line, "unterminated section header");
      section = trim(std::string_view(s).substr(1, s.size() - 2));
      if (section != "problem" && section != "solver" && section != "diagnostics" && section != "weiss")
        fail_at(ErrorCode::UnknownKey, line, "unknown section [" + section + "]");
      have_problem |= section == "problem";
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail_at(ErrorCode::ParseError, line, "expected 'key = value'");
    if (section.empty()) fail_at(ErrorCode::ParseError, line, "key outside any section");
    const std::string key = trim(std::string_view(s).substr(0, eq));
    std::string value = trim(std::string_view(s).substr(eq + 1));
    const auto hash = value.find('#');
    if (hash != std::string::npos) value = trim(std::string_view(value).substr(0, hash));

    const Field* field = nullptr;
    const Field* closest = nullptr;
    std::size_t best = std::string::npos;
    for (const Field& f : fields()) {
      if (section != f.section) continue;
      if (key == f.key) field = &f;
      const std::string fk = f.key;
      const std::size_t d = std::min(edit_distance(key, fk), edit_distance(key, fk.substr(0, key.size() + 1)) + 1);
      if (d < best) best = d, closest = &f;
    }
    if (!field) {
      std::string msg = "unknown key '" + key + "' in [" + section + "]";
      if (closest && best <= 3) msg += "; did you mean '" + std::string(closest->key) + "'?";
      fail_at(ErrorCode::UnknownKey, line, msg);
    }
    const std::string full = section + "." + key;
    if (std::find(seen.begin(), seen.end(), full) != seen.end())
      fail_at(ErrorCode::ParseError, line, "duplicate key '" + key + "'");
    seen.push_back(full);
    try {
      field->set(c, value);
    } catch (const Error& e) {
      fail_at(ErrorCode::ParseError, line, e.what());
    }
  }
  if (!have_problem) throw Error(ErrorCode::ParseError, "missing [problem] section");
  return c;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string name = path;
  const auto slash = name.find_last_of('/');
  if (slash != std::string::npos) name = name.substr(slash + 1);
  const auto dot = name.rfind(".cfg");
  if (dot != std::string::npos) name = name.substr(0, dot);
  return parse_config_text(ss.str(), name);
}

std::string to_ini(const RunConfig& config) {
  std::ostringstream out;
  std::string section;
  for (const Field& f : fields()) {
    if (section != f.section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << " = " << f.get(config) << '\n';
  }
  return out.str();
}

}  // namespace fb
