#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fb/grid.hpp"
#include "fb/problem.hpp"

namespace fb {

/// Nodes with u > 0.
struct SupportMask {
  Grid grid;
  std::vector<char> mask;

  static SupportMask of(const ScalarField& u);
  std::size_t count() const;
  bool empty() const { return count() == 0; }
};

struct Component {
  std::size_t size = 0;  ///< node count
  Index3 lo{0, 0, 0};    ///< bounding box in node coordinates
  Index3 hi{0, 0, 0};
  double diameter = 0.0;
  int ecc = -1;
};

struct ComponentDecomposition {
  Grid grid;
  std::vector<int> labels;  ///< -1 outside the support
  std::vector<Component> components;
  std::vector<std::vector<int>> eccs;  ///< component ids per enlarged component
  std::vector<double> ecc_diameters;
  double merge_distance = 0.25;

  int N_cc() const { return static_cast<int>(components.size()); }
  int N_ecc() const { return static_cast<int>(eccs.size()); }
};

/// Face-adjacency labelling; components are numbered in order of their
/// lexicographically first node. Every component is its own ECC until
/// enlarge_components is called.
ComponentDecomposition connected_components(const SupportMask& mask);

/// Merges components whose node sets come within `merge_distance` (transitively).
/// Idempotent.
ComponentDecomposition enlarge_components(ComponentDecomposition dec, double merge_distance = 0.25);

/// Largest distance between two nodes of the list of node indices (exact: the
/// maximum is attained at axis-extreme nodes, reduced to the hull in 2D).
double node_set_diameter(const Grid& g, const std::vector<std::size_t>& nodes);

struct DiameterReport {
  int N_ecc = 0;
  std::vector<double> ecc_diameters;
  double max_ecc_diameter = 0.0;
  double support_diameter = 0.0;
  int N_max = 0;
  double D_max = 0.0;
  bool count_pass = true;
  bool diameter_pass = true;
};

DiameterReport diameter_report(const ComponentDecomposition& dec, int N_max, double D_max);

struct CorkscrewReport {
  double window = 0.05;
  std::vector<double> best_rho;   ///< largest rho_grid entry that fits, per point (0 if none)
  std::vector<double> exact_rho;  ///< unquantised largest admissible radius, per point
  std::vector<Vec> centers;       ///< best ball centre per point
  double min_rho = 0.0;
  std::vector<char> degenerate;  ///< exact_rho <= h
};

/// For every point y, the largest rho with B_rho(z) inside {u > 0} and inside
/// B_window(y), searched over all nodes z of B_window(y). A ball counts as inside
/// the support when it contains no node with u == 0 (or outside the box).
/// An empty `rho_grid` reports the unquantised radii.
CorkscrewReport corkscrew_check(const ScalarField& u, const std::vector<Vec>& points,
                                const std::vector<double>& rho_grid, double window = 0.05);

struct CompactionPlan {
  double period = 1.0;
  double cell_side = 0.0;                     ///< 2 D_hat
  std::vector<std::vector<std::int64_t>> translations;  ///< per ECC, units of the period
  std::vector<Vec> targets;                    ///< target cell centres
  bool feasible = true;
  std::string to_string() const;
};

/// Translates each ECC of u by an integer number of periods into consecutive
/// target cells along the first axis, centred at the origin. With `plan`
/// given, its translations are applied instead.
/// Errors: NotPeriodic (spec without period, or period not a multiple of h),
/// InfeasiblePlan (translated ECCs overlap or touch, or leave the box).
std::pair<ScalarField, CompactionPlan> compact_periodic(const ScalarField& u, const ProblemSpec& spec,
                                                        const std::optional<CompactionPlan>& plan = {});

/// CSV report: id, size, diameter, ecc.
std::string components_csv(const ComponentDecomposition& dec);

}  // namespace fb
