#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fb/grid.hpp"
#include "fb/problem.hpp"

namespace fb {

enum class Verdict { Pass, Fail, NotApplicable };
std::string to_string(Verdict v);

struct HypothesisResult {
  std::string name;  ///< "HF1" ... "HPer"
  Verdict verdict = Verdict::NotApplicable;
  double measured = 0.0;
  double threshold = 0.0;
  std::string note;
};

struct SampleBudget {
  std::size_t samples = 4096;  ///< (x, u) pairs
  double u_max = 0.0;          ///< 0: 10 (1 + m^{2/n})
  double box_radius = 0.0;     ///< 0: 2 R_m + 1, R_m the radius of a ball of q-volume m
  std::uint64_t seed = 1;
};

/// tau phi_1 on a small ball with negative energy.
struct Witness {
  ScalarField field;
  double energy = 0.0;
  double tau = 0.0;
  Vec center;
  double radius = 0.0;
};

struct AdmissibilityReport {
  std::vector<HypothesisResult> results;
  double lambda1 = 0.0;  ///< lambda_1(B^m)
  double u_max = 0.0;
  // Tightest constants measured on the samples.
  double N = 0.0;
  double b = 0.0;
  double N_prime = 0.0;
  double M_prime = 0.0;
  double M2 = 0.0;
  double lambda_min_eig = 0.0;
  double lambda_max_eig = 0.0;
  double q_min = 0.0;
  double q_max = 0.0;
  std::optional<Witness> witness;

  const HypothesisResult& get(const std::string& name) const;
  bool all_pass() const;
};

/// Samples every hypothesis on the truncation box; failures are verdicts.
AdmissibilityReport check_admissibility(const ProblemSpec& spec, const SampleBudget& budget = {});

/// Errors: NoWitnessFound if no tau = 2^-k, k <= 20, gives negative energy.
Witness witness_negative_energy(const ProblemSpec& spec);

}  // namespace fb
