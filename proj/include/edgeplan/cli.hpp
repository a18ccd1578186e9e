#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "edgeplan/estimator.hpp"
#include "edgeplan/planner.hpp"

namespace edgeplan {

enum ExitCode : int { kExitOk = 0, kExitInput = 1, kExitPlanner = 2, kExitMismatch = 3 };

/// A file path, or builtin:NAME[:SCALE].
ModelGraph load_model_arg(const std::string& arg);
std::string model_label(const std::string& arg);

struct MatrixCell {
  Topology topology = Topology::kRing;
  double bandwidth_bps = 5e9;
  int node_count = 4;
  double rate = 1e10;
  double per_layer_overhead_s = 0.0;

  TestbedSpec testbed() const;
};

/// {ring, ps} x {5e9, 1e9, 5e8} x {3, 4} at 1e10 flop/s per node.
std::vector<MatrixCell> default_matrix();
std::vector<MatrixCell> parse_matrix(std::string_view text);

struct StrategyResult {
  std::string name;
  Plan plan;
  double simulated_s = 0.0;
  double score = 0.0;
};

struct CellReport {
  std::string model;
  MatrixCell cell;
  std::vector<StrategyResult> strategies;  // dpp last
  Scheme fused_scheme = Scheme::kInH;
  double dpp_predicted_s = 0.0;
  double speedup_vs_best_fixed = 0.0;
  double speedup_vs_best_baseline = 0.0;

  const StrategyResult& dpp() const { return strategies.back(); }
};

/// Runs the four fixed schemes, layerwise, the best fused-fixed scheme and dpp on one cell.
CellReport compare_cell(const ModelGraph& graph, const std::string& model_name,
                        const MatrixCell& cell, const Estimator& estimator);

struct ComparisonReport {
  std::string estimator;
  std::vector<CellReport> cells;
};

std::string comparison_to_json(const ComparisonReport& report);

struct VerifyOptions {
  int max_layers = 7;
  int instances = 200;
  std::uint64_t seed = 42;
  bool inject_fault = false;
};

struct VerifyInstanceResult {
  int index = 0;
  std::uint64_t instance_seed = 0;
  int layers = 0;
  bool dp_matches_bruteforce = false;
  bool pruning_sound = false;
  std::int64_t pruned_evaluations = 0;
  std::int64_t unpruned_evaluations = 0;
  std::int64_t bruteforce_evaluations = 0;
  std::int64_t plans_enumerated = 0;
};

struct VerifySummary {
  std::vector<VerifyInstanceResult> instances;
  bool passed = true;
  double mean_pruning_reduction = 0.0;
};

/// DP against brute force, and pruned against unpruned DP, on seeded random instances.
VerifySummary run_verify(const VerifyOptions& options);

std::unique_ptr<Estimator> make_estimator(const std::string& kind, const std::string& i_model,
                                          const std::string& s_model);

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace edgeplan
