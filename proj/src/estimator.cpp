#include "edgeplan/estimator.hpp"

#include <utility>

#include "edgeplan/errors.hpp"

namespace edgeplan {

double Estimator::estimate_final_sync(const ModelGraph& graph, Scheme last_scheme,
                                      const TestbedSpec& testbed) const {
  return final_sync_time(graph, last_scheme, testbed);
}

SegmentCost OracleEstimator::estimate_segment(const SegmentLayout& layout,
                                              const TestbedSpec& testbed) const {
  return segment_cost(layout, testbed);
}

LearnedEstimator::LearnedEstimator(GbdtModel inference, GbdtModel sync)
    : inference_(std::move(inference)), sync_(std::move(sync)) {
  if (inference_.label_kind != LabelKind::kInference) {
    throw ValidationError("i-model was trained on sync labels");
  }
  if (sync_.label_kind != LabelKind::kSync) {
    throw ValidationError("s-model was trained on inference labels");
  }
  for (const GbdtModel* m : {&inference_, &sync_}) {
    if (m->schema_version != kFeatureSchemaVersion) {
      throw ValidationError("model schema version does not match the feature schema");
    }
  }
}

double LearnedEstimator::cached_predict(const GbdtModel& model, const FeatureVector& f) const {
  const FeatureArray a = f.to_array();
  std::pair<int, std::array<double, kFeatureCount>> key;
  key.first = static_cast<int>(model.label_kind);
  std::copy(a.data(), a.data() + kFeatureCount, key.second.begin());
  {
    std::lock_guard lock(mutex_);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
  }
  const double value = predict(model, f);
  std::lock_guard lock(mutex_);
  memo_.emplace(key, value);
  return value;
}

double LearnedEstimator::estimate_inference(const LayerSpec& effective, const TestbedSpec& testbed,
                                            Scheme scheme) const {
  return cached_predict(inference_, extract_features(effective, testbed, scheme));
}

double LearnedEstimator::estimate_sync(const LayerSpec& producer, Scheme producer_scheme,
                                       std::span<const LayerSpec> chain, Scheme chain_scheme,
                                       const TestbedSpec& testbed) const {
  return cached_predict(sync_,
                        extract_sync_features(producer, producer_scheme, chain, chain_scheme, testbed));
}

SegmentCost LearnedEstimator::estimate_segment(const SegmentLayout& layout,
                                               const TestbedSpec& testbed) const {
  const ModelGraph& graph = *layout.graph;
  const Segment& seg = layout.segment;
  const ChainGeometry& chain = *layout.chain;
  SegmentCost cost;
  for (int k = seg.first; k <= seg.last; ++k) {
    const LayerSpec& layer = graph.layers[k];
    const auto& per_node = chain.computed[k - seg.first];
    int slowest = -1;
    double slowest_time = -1.0;
    for (int u = 0; u < chain.node_count; ++u) {
      const double t = static_cast<double>(node_workload(layer, per_node[u])) / testbed.rates[u];
      if (t > slowest_time) {
        slowest_time = t;
        slowest = u;
      }
    }
    if (slowest_time > 0.0) {
      cost.compute_s += estimate_inference(effective_layer(layer, per_node[slowest]), testbed,
                                           seg.scheme);
    }
  }
  cost.compute_s += testbed.per_layer_overhead_s * static_cast<double>(seg.length());
  if (seg.anchor() >= 0) {
    const std::span<const LayerSpec> layers(graph.layers.data() + seg.first,
                                            static_cast<std::size_t>(seg.length()));
    cost.entry_sync_s = estimate_sync(graph.layers[seg.anchor()], layout.anchor_scheme, layers,
                                      seg.scheme, testbed);
  }
  return cost;
}

}  // namespace edgeplan
