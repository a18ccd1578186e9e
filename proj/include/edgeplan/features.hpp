#pragma once

#include <Eigen/Core>
#include <span>
#include <string_view>

#include "edgeplan/geometry.hpp"
#include "edgeplan/model_graph.hpp"
#include "edgeplan/testbed.hpp"

namespace edgeplan {

inline constexpr int kFeatureCount = 14;
inline constexpr int kFeatureSchemaVersion = 1;

using FeatureArray = Eigen::Matrix<double, kFeatureCount, 1>;

enum class LabelKind : int { kInference = 0, kSync = 1 };

std::string_view to_string(LabelKind kind);
LabelKind label_kind_from_string(std::string_view name);

/// Estimator input. The first twelve fields describe the layer shape, link bandwidth and
/// topology; node_count and scheme extend them. For sync samples `scheme` holds
/// sync_pair_ordinal(producer, consumer).
struct FeatureVector {
  double in_h = 0, in_w = 0, in_c = 0;
  double out_h = 0, out_w = 0, out_c = 0;
  double kernel = 0, stride = 0, padding = 0;
  double conv_type = 0;
  double bandwidth_bps = 0;
  double topology = 0;
  double node_count = 0;
  double scheme = 0;

  FeatureArray to_array() const;
  static FeatureVector from_array(const FeatureArray& values);
  bool operator==(const FeatureVector&) const = default;
};

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "in_h",   "in_w",   "in_c",    "out_h",     "out_w",         "out_c",    "kernel",
    "stride", "padding", "conv_type", "bandwidth_bps", "topology", "node_count", "scheme"};

/// Shape of the work one node does for `layer` when it computes `out_boxes` (halo included).
/// Multi-box shares are folded into an element-preserving rows x cols x channels shape.
LayerSpec effective_layer(const LayerSpec& layer, const BoxSet& out_boxes);

FeatureVector extract_features(const LayerSpec& effective, const TestbedSpec& testbed,
                               Scheme scheme);

/// Window parameters of a chain of layers collapsed into one equivalent window.
struct ComposedWindow {
  std::int64_t kernel = 1;
  std::int64_t stride = 1;
  std::int64_t padding = 0;
};
ComposedWindow compose_windows(std::span<const LayerSpec> chain);

/// Scheme feature of a sync sample. Pairs are ordered from halo-only exchanges (same spatial
/// scheme) through partial reshuffles to all-fetch redistributions into OutC.
int sync_pair_ordinal(Scheme producer, Scheme consumer);

FeatureVector extract_sync_features(const LayerSpec& producer, Scheme producer_scheme,
                                    std::span<const LayerSpec> chain, Scheme chain_scheme,
                                    const TestbedSpec& testbed);

}  // namespace edgeplan
