#pragma once

#include <string>
#include <vector>

#include "fb/config.hpp"

namespace fb {

/// Names of the built-in scenarios, sorted.
std::vector<std::string> scenario_names();
/// The configuration text shipped for a scenario. Errors: UnknownBuiltin.
const std::string& scenario_text(const std::string& name);
RunConfig scenario(const std::string& name);

}  // namespace fb
