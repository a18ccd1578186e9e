#pragma once

#include <array>
#include <boost/multiprecision/cpp_int.hpp>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "edgeplan/estimator.hpp"
#include "edgeplan/geometry.hpp"
#include "edgeplan/model_graph.hpp"
#include "edgeplan/testbed.hpp"

namespace edgeplan {

struct PlannerOptions {
  bool prune = true;
};

struct PlanResult {
  Plan plan;
  double predicted_cost_s = 0.0;
  double simulated_cost_s = 0.0;
  std::int64_t evaluations = 0;  // estimate_segment calls
  std::int64_t plans_enumerated = 0;  // brute force only
};

/// allowed[layer][ordinal(scheme)]
using SchemeMask = std::vector<std::array<bool, kSchemeCount>>;

/// Every scheme that can tile each layer.
SchemeMask tileable_mask(const ModelGraph& graph, int node_count);

/// Reverse-order dynamic program over (layer, scheme) T anchors. Ties go to the shorter chain,
/// then the lower scheme ordinal.
PlanResult plan_dpp(const ModelGraph& graph, const TestbedSpec& testbed, const Estimator& estimator,
                    const PlannerOptions& options = {});
PlanResult plan_dpp(const ModelGraph& graph, const TestbedSpec& testbed, const Estimator& estimator,
                    const SchemeMask& allowed, const PlannerOptions& options);

inline constexpr int kBruteForceLayerCap = 8;

/// Exhaustive search over per-layer (scheme, mode) assignments. Ties go to the plan whose
/// (chain length, scheme ordinal) segment sequence is lexicographically smallest.
PlanResult plan_bruteforce(const ModelGraph& graph, const TestbedSpec& testbed,
                           const Estimator& estimator, int layer_cap = kBruteForceLayerCap);

/// k^L * 2^(L-1).
boost::multiprecision::cpp_int count_search_space(int layer_count, int scheme_count);

/// Lowest-ordinal scheme that can tile the layer, used where a fixed scheme cannot.
Scheme fallback_scheme(const LayerSpec& layer, int node_count);

/// Every layer under `scheme` (or the fallback where it cannot tile), all T.
Plan plan_fixed(const ModelGraph& graph, Scheme scheme, int node_count);
Plan plan_layerwise(const ModelGraph& graph, const TestbedSpec& testbed, const Estimator& estimator);
Plan plan_fused_fixed(const ModelGraph& graph, const TestbedSpec& testbed,
                      const Estimator& estimator, Scheme scheme);

std::vector<double> performance_scores(std::span<const double> times);

std::string plan_to_json(const Plan& plan, const std::string& estimator_kind,
                         double predicted_cost_s, double simulated_cost_s);
Plan parse_plan(std::string_view text);
Plan load_plan_file(const std::string& path);

}  // namespace edgeplan
