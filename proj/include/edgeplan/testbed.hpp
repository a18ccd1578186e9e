#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "edgeplan/geometry.hpp"

namespace edgeplan {

enum class Topology : int { kRing = 0, kPs = 1, kMesh = 2 };

std::string_view to_string(Topology topology);
Topology topology_from_string(std::string_view name);

struct TestbedSpec {
  int node_count = 4;
  std::vector<double> rates;  // flops per second, one per node
  Topology topology = Topology::kRing;
  double bandwidth_bps = 5e9;
  double per_layer_overhead_s = 0.0;

  bool operator==(const TestbedSpec&) const = default;
};

/// Homogeneous testbed helper.
TestbedSpec make_testbed(int node_count, double rate, Topology topology, double bandwidth_bps,
                         double per_layer_overhead_s = 0.0);

void validate_testbed(const TestbedSpec& testbed);
TestbedSpec parse_testbed(std::string_view text);
std::string serialize_testbed(const TestbedSpec& testbed);
TestbedSpec load_testbed_file(const std::string& path);

/// Per-link loads in bits for a transfer matrix under the testbed's routing rule.
/// Mesh: one entry per ordered pair. PS: per node max(sent, received) through the hub.
/// Ring: clockwise links 0..n-1 followed by counter-clockwise links 0..n-1.
std::vector<std::int64_t> link_loads_bits(const ByteMatrix& volumes, const TestbedSpec& testbed);

/// Seconds to complete the exchange: the busiest link's bits over the link bandwidth.
double comm_time(const ByteMatrix& volumes, const TestbedSpec& testbed);

}  // namespace edgeplan
