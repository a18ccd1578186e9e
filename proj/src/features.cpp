#include "edgeplan/features.hpp"

#include <algorithm>
#include <string>

#include "edgeplan/errors.hpp"

namespace edgeplan {

namespace {

struct FoldedShape {
  std::int64_t rows = 0, cols = 0, channels = 0;
};

// rows x cols x channels with cols and channels taken from the widest box and rows chosen so
// the product covers the union.
FoldedShape fold_boxes(const BoxSet& boxes) {
  FoldedShape s;
  if (boxes.empty()) return s;
  for (const Region& r : boxes) {
    s.cols = std::max(s.cols, r.cols());
    s.channels = std::max(s.channels, r.channels());
  }
  const std::int64_t plane = s.cols * s.channels;
  s.rows = (union_elements(boxes) + plane - 1) / plane;
  return s;
}

// Rows are producer schemes, columns consumer schemes, both in InH, InW, OutC, Grid2D order.
constexpr int kSyncPairOrdinal[kSchemeCount][kSchemeCount] = {
    {0, 9, 13, 11},
    {10, 1, 14, 3},
    {6, 7, 5, 8},
    {12, 4, 15, 2},
};

}  // namespace

int sync_pair_ordinal(Scheme producer, Scheme consumer) {
  return kSyncPairOrdinal[ordinal(producer)][ordinal(consumer)];
}

std::string_view to_string(LabelKind kind) {
  return kind == LabelKind::kInference ? "inference" : "sync";
}

LabelKind label_kind_from_string(std::string_view name) {
  if (name == "inference") return LabelKind::kInference;
  if (name == "sync") return LabelKind::kSync;
  throw ParseError("unknown label kind '" + std::string(name) + "'");
}

FeatureArray FeatureVector::to_array() const {
  FeatureArray a;
  a << in_h, in_w, in_c, out_h, out_w, out_c, kernel, stride, padding, conv_type, bandwidth_bps,
      topology, node_count, scheme;
  return a;
}

FeatureVector FeatureVector::from_array(const FeatureArray& a) {
  return {a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], a[8], a[9], a[10], a[11], a[12], a[13]};
}

LayerSpec effective_layer(const LayerSpec& layer, const BoxSet& out_boxes) {
  LayerSpec eff = layer;
  const FoldedShape out = fold_boxes(out_boxes);
  const FoldedShape in = fold_boxes(input_regions(layer, out_boxes));
  eff.out_h = out.rows;
  eff.out_w = out.cols;
  eff.out_c = out.channels;
  eff.in_h = in.rows;
  eff.in_w = in.cols;
  eff.in_c = preserves_channels(layer.kind) ? in.channels : layer.in_c;
  return eff;
}

FeatureVector extract_features(const LayerSpec& e, const TestbedSpec& testbed, Scheme scheme) {
  FeatureVector f;
  f.in_h = static_cast<double>(e.in_h);
  f.in_w = static_cast<double>(e.in_w);
  f.in_c = static_cast<double>(e.in_c);
  f.out_h = static_cast<double>(e.out_h);
  f.out_w = static_cast<double>(e.out_w);
  f.out_c = static_cast<double>(e.out_c);
  f.kernel = static_cast<double>(e.kernel);
  f.stride = static_cast<double>(e.stride);
  f.padding = static_cast<double>(e.padding);
  f.conv_type = static_cast<double>(static_cast<int>(e.kind));
  f.bandwidth_bps = testbed.bandwidth_bps;
  f.topology = static_cast<double>(static_cast<int>(testbed.topology));
  f.node_count = static_cast<double>(testbed.node_count);
  f.scheme = static_cast<double>(ordinal(scheme));
  return f;
}

ComposedWindow compose_windows(std::span<const LayerSpec> chain) {
  ComposedWindow w;
  bool first = true;
  for (const LayerSpec& l : chain) {
    if (first) {
      w = {l.kernel, l.stride, l.padding};
      first = false;
      continue;
    }
    w.kernel += (l.kernel - 1) * w.stride;
    w.padding += l.padding * w.stride;
    w.stride *= l.stride;
  }
  return w;
}

FeatureVector extract_sync_features(const LayerSpec& producer, Scheme producer_scheme,
                                    std::span<const LayerSpec> chain, Scheme chain_scheme,
                                    const TestbedSpec& testbed) {
  if (chain.empty()) throw ValidationError("sync features need a non-empty consumer chain");
  const ComposedWindow w = compose_windows(chain);
  FeatureVector f;
  f.in_h = static_cast<double>(producer.out_h);
  f.in_w = static_cast<double>(producer.out_w);
  f.in_c = static_cast<double>(producer.out_c);
  f.out_h = static_cast<double>(chain.back().out_h);
  f.out_w = static_cast<double>(chain.back().out_w);
  f.out_c = static_cast<double>(chain.back().out_c);
  f.kernel = static_cast<double>(w.kernel);
  f.stride = static_cast<double>(w.stride);
  f.padding = static_cast<double>(w.padding);
  f.conv_type = static_cast<double>(static_cast<int>(chain.front().kind));
  f.bandwidth_bps = testbed.bandwidth_bps;
  f.topology = static_cast<double>(static_cast<int>(testbed.topology));
  f.node_count = static_cast<double>(testbed.node_count);
  f.scheme = static_cast<double>(sync_pair_ordinal(producer_scheme, chain_scheme));
  return f;
}

}  // namespace edgeplan
