#include "fb/scenarios.hpp"

#include <map>

#include "fb/error.hpp"

namespace fb {
namespace {

const std::map<std::string, std::string>& registry() {
  static const std::map<std::string, std::string> r = {
#include "scenarios.inc"
  };
  return r;
}

}  // namespace

std::vector<std::string> scenario_names() {
  std::vector<std::string> out;
  for (const auto& [name, text] : registry()) out.push_back(name);
  return out;
}

const std::string& scenario_text(const std::string& name) {
  const auto it = registry().find(name);
  if (it == registry().end()) {
    std::string known;
    for (const auto& n : scenario_names()) known += (known.empty() ? "" : ", ") + n;
    throw Error(ErrorCode::UnknownBuiltin, "unknown scenario '" + name + "' (known: " + known + ")");
  }
  return it->second;
}

RunConfig scenario(const std::string& name) { return parse_config_text(scenario_text(name), name); }

}  // namespace fb
