#pragma once

#include <string>
#include <vector>

#include "edgeplan/geometry.hpp"
#include "edgeplan/model_graph.hpp"
#include "edgeplan/testbed.hpp"

namespace edgeplan {

/// Layers [first, last] run with one scheme as NT...NT,T after a T anchor at first - 1
/// (anchor -1 is the pre-distributed model input).
struct Segment {
  int first = 0;
  int last = 0;
  Scheme scheme = Scheme::kInH;

  int anchor() const { return first - 1; }
  int length() const { return last - first + 1; }
  bool operator==(const Segment&) const = default;
};

using WorkloadTable = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Geometry of one segment under a given anchor scheme. Non-owning; the pointees must
/// outlive the layout.
struct SegmentLayout {
  const ModelGraph* graph = nullptr;
  Segment segment;
  Scheme anchor_scheme = Scheme::kInH;  // ignored when segment.anchor() < 0
  const TileMap* producer = nullptr;    // anchor tiles, null for the model input
  const ChainGeometry* chain = nullptr;
};

struct SegmentCost {
  double entry_sync_s = 0.0;
  double compute_s = 0.0;

  double total() const { return entry_sync_s + compute_s; }
  bool operator==(const SegmentCost&) const = default;
};

/// Rows: chain layers in order; columns: nodes. Flops each node computes, halo included.
WorkloadTable chain_workloads(const ModelGraph& graph, const ChainGeometry& chain);

ByteMatrix entry_volumes(const SegmentLayout& layout);
/// Max over nodes of the node's summed flops over its rate, plus the per-layer overhead.
double chain_compute_time(const WorkloadTable& workloads, const TestbedSpec& testbed);

SegmentCost segment_cost(const SegmentLayout& layout, const TestbedSpec& testbed);
SegmentCost segment_cost(const ModelGraph& graph, const Segment& segment, Scheme producer_scheme,
                         const TestbedSpec& testbed);

/// Bytes moved when every node sends its tile of the last layer's output to node 0.
ByteMatrix final_gather_volumes(const ModelGraph& graph, Scheme last_scheme, int node_count);
double final_sync_time(const ModelGraph& graph, Scheme last_scheme, const TestbedSpec& testbed);

/// Splits a plan at its T entries.
std::vector<Segment> split_segments(const Plan& plan);

/// Sum of segment totals and the final gather, folded from the last segment backwards.
/// The planner accumulates costs in the same order, so both agree bit for bit.
double fold_plan_cost(const std::vector<double>& segment_totals, double final_sync_s);

struct SegmentReport {
  Segment segment;
  SegmentCost cost;
  ByteMatrix transfers;
};

struct CostReport {
  std::vector<SegmentReport> segments;
  double final_sync_s = 0.0;
  double total_s = 0.0;
  WorkloadTable workloads;  // layers x nodes
};

CostReport simulate(const ModelGraph& graph, const Plan& plan, const TestbedSpec& testbed);
std::string cost_report_to_json(const CostReport& report);

}  // namespace edgeplan
