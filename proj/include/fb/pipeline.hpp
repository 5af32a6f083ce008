#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fb/config.hpp"
#include "fb/solve.hpp"

namespace fb {

inline constexpr const char* kToolVersion = "fb 1.0.0";

enum class CheckLevel { Required, Advisory };

struct Check {
  std::string name;
  bool pass = false;
  CheckLevel level = CheckLevel::Required;
  std::string detail;
};

/// "PASS", "FAIL" or, for a failing advisory check outside strict mode, "WARN".
std::string verdict_label(const Check& c, bool strict);

/// Ordered key = value record.
struct Manifest {
  std::vector<std::pair<std::string, std::string>> entries;
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);
  std::string get(const std::string& key) const;  ///< empty if absent
  std::string text() const;
};

std::string sha256_hex(const std::string& bytes);

/// Everything the diagnostics stages produce for one field.
struct Analysis {
  std::vector<Check> checks;
  Manifest summary;
  std::map<std::string, std::string> files;  ///< file name -> contents
};

/// Geometry, diagnostics and blow-up stages on a field at multiplier Lambda.
Analysis analyze_field(const ScalarField& u, const ProblemSpec& spec, const RunConfig& config, double Lambda);

struct PipelineOptions {
  std::string out_dir;  ///< empty: nothing is written
  bool strict = false;
};

struct PipelineResult {
  RunConfig config;
  RunResult run;
  bool solved = false;  ///< solve_constrained returned
  std::string error;    ///< error text when it threw
  std::vector<Check> checks;
  Manifest manifest;
  std::string manifest_checksum;
  std::map<std::string, std::string> files;  ///< written artifacts, manifest excluded
  std::vector<std::pair<std::string, double>> timings;  ///< seconds per stage
  bool strict = false;

  bool ok() const;
  /// One "name: detail" line per failing check.
  std::string failure_list() const;
};

/// solve -> geometry -> diagnostics -> weiss, then files and manifest.
PipelineResult run_pipeline(const RunConfig& config, const PipelineOptions& options = {});

}  // namespace fb
