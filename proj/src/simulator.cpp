#include "edgeplan/simulator.hpp"

#include <algorithm>

#include "edgeplan/errors.hpp"
#include "json.hpp"

namespace edgeplan {

WorkloadTable chain_workloads(const ModelGraph& graph, const ChainGeometry& chain) {
  const int length = chain.last - chain.first + 1;
  WorkloadTable table(length, chain.node_count);
  for (int k = 0; k < length; ++k) {
    const LayerSpec& layer = graph.layers[chain.first + k];
    for (int u = 0; u < chain.node_count; ++u) {
      table(k, u) = node_workload(layer, chain.computed[k][u]);
    }
  }
  return table;
}

ByteMatrix entry_volumes(const SegmentLayout& layout) {
  const int n = layout.chain->node_count;
  if (layout.segment.anchor() < 0) return ByteMatrix::Zero(n, n);
  return transfer_volumes(*layout.producer, layout.chain->entry, layout.graph->element_size);
}

double chain_compute_time(const WorkloadTable& workloads, const TestbedSpec& testbed) {
  double slowest = 0.0;
  for (int u = 0; u < workloads.cols(); ++u) {
    const std::int64_t flops = workloads.col(u).sum();
    slowest = std::max(slowest, static_cast<double>(flops) / testbed.rates[u]);
  }
  return slowest + testbed.per_layer_overhead_s * static_cast<double>(workloads.rows());
}

SegmentCost segment_cost(const SegmentLayout& layout, const TestbedSpec& testbed) {
  SegmentCost cost;
  cost.entry_sync_s = comm_time(entry_volumes(layout), testbed);
  cost.compute_s = chain_compute_time(chain_workloads(*layout.graph, *layout.chain), testbed);
  return cost;
}

SegmentCost segment_cost(const ModelGraph& graph, const Segment& segment, Scheme producer_scheme,
                         const TestbedSpec& testbed) {
  const int n = testbed.node_count;
  for (int k = segment.first; k <= segment.last; ++k) {
    const bool last = k == segment.last;
    if (!can_tile(graph.layers[k], segment.scheme, n) ||
        !feasible(segment.scheme, last ? Mode::kT : Mode::kNT, graph.layers[k],
                  last ? nullptr : &graph.layers[k + 1],
                  last ? std::nullopt : std::optional<Scheme>(segment.scheme))) {
      throw ValidationError("infeasible segment at layer " + std::to_string(k));
    }
  }
  const ChainGeometry chain = chain_geometry(graph.layers, segment.first, segment.last,
                                             segment.scheme, n);
  std::optional<TileMap> producer;
  if (segment.anchor() >= 0) producer = assign_tiles(graph.layers[segment.anchor()], producer_scheme, n);
  SegmentLayout layout{&graph, segment, producer_scheme, producer ? &*producer : nullptr, &chain};
  return segment_cost(layout, testbed);
}

ByteMatrix final_gather_volumes(const ModelGraph& graph, Scheme last_scheme, int node_count) {
  const TileMap tiles = assign_tiles(graph.layers.back(), last_scheme, node_count);
  ByteMatrix volumes = ByteMatrix::Zero(node_count, node_count);
  for (int u = 1; u < node_count; ++u) {
    volumes(u, 0) = union_elements(tiles.tiles[u]) * graph.element_size;
  }
  return volumes;
}

double final_sync_time(const ModelGraph& graph, Scheme last_scheme, const TestbedSpec& testbed) {
  return comm_time(final_gather_volumes(graph, last_scheme, testbed.node_count), testbed);
}

std::vector<Segment> split_segments(const Plan& plan) {
  std::vector<Segment> segments;
  int first = 0;
  for (int i = 0; i < static_cast<int>(plan.size()); ++i) {
    if (plan[i].mode == Mode::kT) {
      segments.push_back({first, i, plan[i].scheme});
      first = i + 1;
    }
  }
  return segments;
}

double fold_plan_cost(const std::vector<double>& segment_totals, double final_sync_s) {
  double acc = final_sync_s;
  for (auto it = segment_totals.rbegin(); it != segment_totals.rend(); ++it) acc = *it + acc;
  return acc;
}

CostReport simulate(const ModelGraph& graph, const Plan& plan, const TestbedSpec& testbed) {
  validate_plan(graph, plan, testbed.node_count);
  const int n = testbed.node_count;
  CostReport report;
  report.workloads = WorkloadTable::Zero(static_cast<int>(graph.size()), n);
  std::vector<double> totals;
  for (const Segment& seg : split_segments(plan)) {
    const ChainGeometry chain = chain_geometry(graph.layers, seg.first, seg.last, seg.scheme, n);
    std::optional<TileMap> producer;
    Scheme producer_scheme = Scheme::kInH;
    if (seg.anchor() >= 0) {
      producer_scheme = plan[seg.anchor()].scheme;
      producer = assign_tiles(graph.layers[seg.anchor()], producer_scheme, n);
    }
    const SegmentLayout layout{&graph, seg, producer_scheme, producer ? &*producer : nullptr,
                               &chain};
    SegmentReport entry{seg, segment_cost(layout, testbed), entry_volumes(layout)};
    report.workloads.middleRows(seg.first, seg.length()) = chain_workloads(graph, chain);
    totals.push_back(entry.cost.total());
    report.segments.push_back(std::move(entry));
  }
  report.final_sync_s = final_sync_time(graph, plan.back().scheme, testbed);
  report.total_s = fold_plan_cost(totals, report.final_sync_s);
  return report;
}

std::string cost_report_to_json(const CostReport& report) {
  nlohmann::ordered_json doc;
  doc["total_s"] = report.total_s;
  doc["final_sync_s"] = report.final_sync_s;
  auto segments = nlohmann::ordered_json::array();
  for (const SegmentReport& s : report.segments) {
    nlohmann::ordered_json item;
    item["first_layer"] = s.segment.first;
    item["last_layer"] = s.segment.last;
    item["scheme"] = std::string(to_string(s.segment.scheme));
    item["entry_sync_s"] = s.cost.entry_sync_s;
    item["compute_s"] = s.cost.compute_s;
    auto rows = nlohmann::ordered_json::array();
    for (int u = 0; u < s.transfers.rows(); ++u) {
      std::vector<std::int64_t> row(s.transfers.cols());
      for (int v = 0; v < s.transfers.cols(); ++v) row[v] = s.transfers(u, v);
      rows.push_back(row);
    }
    item["transfer_bytes"] = std::move(rows);
    segments.push_back(std::move(item));
  }
  doc["segments"] = std::move(segments);
  auto work = nlohmann::ordered_json::array();
  for (int k = 0; k < report.workloads.rows(); ++k) {
    std::vector<std::int64_t> row(report.workloads.cols());
    for (int u = 0; u < report.workloads.cols(); ++u) row[u] = report.workloads(k, u);
    work.push_back(row);
  }
  doc["layer_node_flops"] = std::move(work);
  return doc.dump(2) + "\n";
}

}  // namespace edgeplan
