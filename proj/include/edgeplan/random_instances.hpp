#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "edgeplan/model_graph.hpp"
#include "edgeplan/testbed.hpp"

namespace edgeplan {

using Rng = std::mt19937_64;

/// Seed for item `index` of a run seeded with `seed`; independent of generation order.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi);
double uniform_real(Rng& rng, double lo, double hi);
double log_uniform(Rng& rng, double lo, double hi);

template <typename T>
const T& pick(Rng& rng, std::span<const T> values) {
  return values[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(values.size()) - 1))];
}

struct LayerRanges {
  std::vector<std::int64_t> kernels = {1, 3, 5};
  std::vector<std::int64_t> pool_kernels = {2, 3};
  std::vector<std::int64_t> strides = {1, 2};
  std::vector<std::int64_t> channels = {1, 2, 3, 4, 6, 8};
  std::int64_t min_out = 4;  // smallest spatial output extent a draw may produce
};

/// A random layer of any kind reading an in_h x in_w x in_c map. Falls back to stride 1 or a
/// smaller kernel when the drawn window would shrink the map below `min_out`.
LayerSpec random_layer(Rng& rng, int id, std::int64_t in_h, std::int64_t in_w, std::int64_t in_c,
                       const LayerRanges& ranges);

struct GraphRanges {
  std::int64_t min_spatial = 4;
  std::int64_t max_spatial = 16;
  LayerRanges layer;
};

ModelGraph random_graph(Rng& rng, int layer_count, const GraphRanges& ranges);

struct TestbedRanges {
  int min_nodes = 2;
  int max_nodes = 4;
  double min_bandwidth = 1e8;
  double max_bandwidth = 1e10;
  double min_rate = 1e9;
  double max_rate = 1e10;
  bool heterogeneous = true;
};

TestbedSpec random_testbed(Rng& rng, const TestbedRanges& ranges);

struct VerifyInstance {
  ModelGraph graph;
  TestbedSpec testbed;
};

/// Instance `index` of the verification corpus for `seed`. Layer counts lie in
/// [max(1, max_layers - 2), max_layers].
VerifyInstance verify_instance(std::uint64_t seed, int index, int max_layers);

}  // namespace edgeplan
