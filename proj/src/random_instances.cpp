#include "edgeplan/random_instances.hpp"

#include <algorithm>
#include <cmath>

#include "edgeplan/errors.hpp"

namespace edgeplan {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr LayerKind kKinds[] = {LayerKind::kStandardConv, LayerKind::kDepthwiseConv,
                                LayerKind::kPointwiseConv, LayerKind::kPool, LayerKind::kMatmul};
constexpr Topology kTopologies[] = {Topology::kRing, Topology::kPs, Topology::kMesh};

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index + 1));
}

std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw ValidationError("empty integer range");
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(rng() % span);
}

double uniform_real(Rng& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

double log_uniform(Rng& rng, double lo, double hi) {
  return std::exp(uniform_real(rng, std::log(lo), std::log(hi)));
}

LayerSpec random_layer(Rng& rng, int id, std::int64_t in_h, std::int64_t in_w, std::int64_t in_c,
                       const LayerRanges& ranges) {
  LayerSpec l;
  l.id = id;
  l.kind = pick<LayerKind>(rng, kKinds);
  l.in_h = in_h;
  l.in_w = in_w;
  l.in_c = in_c;
  switch (l.kind) {
    case LayerKind::kStandardConv:
    case LayerKind::kDepthwiseConv:
      l.kernel = pick<std::int64_t>(rng, ranges.kernels);
      l.stride = pick<std::int64_t>(rng, ranges.strides);
      l.padding = uniform_int(rng, 0, l.kernel / 2);
      break;
    case LayerKind::kPool:
      l.kernel = pick<std::int64_t>(rng, ranges.pool_kernels);
      l.stride = pick<std::int64_t>(rng, ranges.strides);
      l.padding = uniform_int(rng, 0, l.kernel / 2);
      break;
    case LayerKind::kPointwiseConv:
      l.stride = pick<std::int64_t>(rng, ranges.strides);
      break;
    case LayerKind::kMatmul:
      break;
  }
  l.out_c = preserves_channels(l.kind) ? in_c : pick<std::int64_t>(rng, ranges.channels);

  const auto fits = [&] {
    return conv_out_extent(in_h, l.kernel, l.stride, l.padding) >= ranges.min_out &&
           conv_out_extent(in_w, l.kernel, l.stride, l.padding) >= ranges.min_out;
  };
  if (!fits()) l.stride = 1;
  if (!fits()) {
    l.kernel = l.kind == LayerKind::kPool ? 2 : 1;
    l.padding = l.kernel / 2;
  }
  if (!fits()) {
    l.kernel = 1;
    l.padding = 0;
  }
  l.out_h = conv_out_extent(in_h, l.kernel, l.stride, l.padding);
  l.out_w = conv_out_extent(in_w, l.kernel, l.stride, l.padding);
  return l;
}

ModelGraph random_graph(Rng& rng, int layer_count, const GraphRanges& ranges) {
  if (layer_count < 1) throw ValidationError("random graph needs at least one layer");
  ModelGraph g;
  std::int64_t h = uniform_int(rng, ranges.min_spatial, ranges.max_spatial);
  std::int64_t w = uniform_int(rng, ranges.min_spatial, ranges.max_spatial);
  std::int64_t c = pick<std::int64_t>(rng, ranges.layer.channels);
  for (int i = 0; i < layer_count; ++i) {
    LayerSpec l = random_layer(rng, i, h, w, c, ranges.layer);
    h = l.out_h;
    w = l.out_w;
    c = l.out_c;
    g.layers.push_back(l);
  }
  validate_graph(g);
  return g;
}

TestbedSpec random_testbed(Rng& rng, const TestbedRanges& r) {
  TestbedSpec t;
  t.node_count = static_cast<int>(uniform_int(rng, r.min_nodes, r.max_nodes));
  t.topology = pick<Topology>(rng, kTopologies);
  t.bandwidth_bps = log_uniform(rng, r.min_bandwidth, r.max_bandwidth);
  const double base = log_uniform(rng, r.min_rate, r.max_rate);
  for (int u = 0; u < t.node_count; ++u) {
    t.rates.push_back(r.heterogeneous ? log_uniform(rng, r.min_rate, r.max_rate) : base);
  }
  validate_testbed(t);
  return t;
}

VerifyInstance verify_instance(std::uint64_t seed, int index, int max_layers) {
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(index)));
  const int layers = static_cast<int>(uniform_int(rng, std::max(1, max_layers - 2), max_layers));
  VerifyInstance inst;
  inst.graph = random_graph(rng, layers, GraphRanges{});
  inst.testbed = random_testbed(rng, TestbedRanges{});
  return inst;
}

}  // namespace edgeplan
