#include "edgeplan/testbed.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "edgeplan/errors.hpp"
#include "json.hpp"

namespace edgeplan {

namespace {

using Json = nlohmann::ordered_json;

double read_number(const Json& doc, const char* key) {
  const auto it = doc.find(key);
  if (it == doc.end()) throw ParseError(std::string("testbed: missing field '") + key + "'");
  if (!it->is_number()) throw ParseError(std::string("testbed: '") + key + "' must be a number");
  return it->get<double>();
}

}  // namespace

std::string_view to_string(Topology topology) {
  switch (topology) {
    case Topology::kRing: return "ring";
    case Topology::kPs: return "ps";
    case Topology::kMesh: return "mesh";
  }
  return "";
}

Topology topology_from_string(std::string_view name) {
  if (name == "ring") return Topology::kRing;
  if (name == "ps") return Topology::kPs;
  if (name == "mesh") return Topology::kMesh;
  throw ParseError("unknown topology '" + std::string(name) + "'");
}

TestbedSpec make_testbed(int node_count, double rate, Topology topology, double bandwidth_bps,
                         double per_layer_overhead_s) {
  TestbedSpec t;
  t.node_count = node_count;
  t.rates.assign(std::max(node_count, 0), rate);
  t.topology = topology;
  t.bandwidth_bps = bandwidth_bps;
  t.per_layer_overhead_s = per_layer_overhead_s;
  validate_testbed(t);
  return t;
}

void validate_testbed(const TestbedSpec& t) {
  if (t.node_count < 2) {
    throw ValidationError("testbed: node_count must be >= 2 for distributed inference");
  }
  if (static_cast<int>(t.rates.size()) != t.node_count) {
    throw ValidationError("testbed: rates must list one value per node");
  }
  for (double r : t.rates) {
    if (!(r > 0.0) || !std::isfinite(r)) throw ValidationError("testbed: rates must be > 0");
  }
  if (!(t.bandwidth_bps > 0.0) || !std::isfinite(t.bandwidth_bps)) {
    throw ValidationError("testbed: bandwidth_bps must be > 0");
  }
  if (!(t.per_layer_overhead_s >= 0.0) || !std::isfinite(t.per_layer_overhead_s)) {
    throw ValidationError("testbed: per_layer_overhead_s must be >= 0");
  }
}

TestbedSpec parse_testbed(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("testbed document: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("testbed document must be an object");
  for (const auto& [key, _] : doc.items()) {
    if (key != "node_count" && key != "rates" && key != "topology" && key != "bandwidth_bps" &&
        key != "per_layer_overhead_s") {
      throw ParseError("testbed: unknown field '" + key + "'");
    }
  }
  TestbedSpec t;
  const auto nodes = doc.find("node_count");
  if (nodes == doc.end() || !nodes->is_number_integer()) {
    throw ParseError("testbed: 'node_count' must be an integer");
  }
  t.node_count = nodes->get<int>();
  const auto rates = doc.find("rates");
  if (rates == doc.end()) throw ParseError("testbed: missing field 'rates'");
  if (rates->is_number()) {
    t.rates.assign(std::max(t.node_count, 0), rates->get<double>());
  } else if (rates->is_array()) {
    for (const Json& r : *rates) {
      if (!r.is_number()) throw ParseError("testbed: 'rates' entries must be numbers");
      t.rates.push_back(r.get<double>());
    }
  } else {
    throw ParseError("testbed: 'rates' must be a number or a list");
  }
  const auto topo = doc.find("topology");
  if (topo == doc.end() || !topo->is_string()) throw ParseError("testbed: 'topology' must be a string");
  t.topology = topology_from_string(topo->get<std::string>());
  t.bandwidth_bps = read_number(doc, "bandwidth_bps");
  if (doc.contains("per_layer_overhead_s")) {
    t.per_layer_overhead_s = read_number(doc, "per_layer_overhead_s");
  }
  validate_testbed(t);
  return t;
}

std::string serialize_testbed(const TestbedSpec& t) {
  Json doc;
  doc["node_count"] = t.node_count;
  const bool uniform = std::all_of(t.rates.begin(), t.rates.end(),
                                   [&](double r) { return r == t.rates.front(); });
  if (uniform && !t.rates.empty()) {
    doc["rates"] = t.rates.front();
  } else {
    doc["rates"] = t.rates;
  }
  doc["topology"] = std::string(to_string(t.topology));
  doc["bandwidth_bps"] = t.bandwidth_bps;
  doc["per_layer_overhead_s"] = t.per_layer_overhead_s;
  return doc.dump(2) + "\n";
}

TestbedSpec load_testbed_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open testbed file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_testbed(buf.str());
}

std::vector<std::int64_t> link_loads_bits(const ByteMatrix& volumes, const TestbedSpec& testbed) {
  const int n = testbed.node_count;
  if (volumes.rows() != n || volumes.cols() != n) {
    throw ValidationError("transfer matrix is " + std::to_string(volumes.rows()) + "x" +
                          std::to_string(volumes.cols()) + ", testbed has " + std::to_string(n) +
                          " nodes");
  }
  const ByteMatrix bits = volumes * 8;
  std::vector<std::int64_t> loads;
  switch (testbed.topology) {
    case Topology::kMesh: {
      loads.reserve(n * n);
      for (int u = 0; u < n; ++u) {
        for (int v = 0; v < n; ++v) {
          if (u != v) loads.push_back(bits(u, v));
        }
      }
      break;
    }
    case Topology::kPs: {
      for (int u = 0; u < n; ++u) {
        const std::int64_t sent = bits.row(u).sum() - bits(u, u);
        const std::int64_t received = bits.col(u).sum() - bits(u, u);
        loads.push_back(std::max(sent, received));
      }
      break;
    }
    case Topology::kRing: {
      // loads[i]: link i -> i+1; loads[n + i]: link i -> i-1.
      loads.assign(2 * n, 0);
      for (int u = 0; u < n; ++u) {
        for (int v = 0; v < n; ++v) {
          if (u == v || bits(u, v) == 0) continue;
          const int clockwise = ((v - u) % n + n) % n;
          if (clockwise <= n - clockwise) {
            for (int step = 0; step < clockwise; ++step) loads[(u + step) % n] += bits(u, v);
          } else {
            for (int step = 0; step < n - clockwise; ++step) {
              loads[n + ((u - step) % n + n) % n] += bits(u, v);
            }
          }
        }
      }
      break;
    }
  }
  return loads;
}

double comm_time(const ByteMatrix& volumes, const TestbedSpec& testbed) {
  const auto loads = link_loads_bits(volumes, testbed);
  const std::int64_t busiest = loads.empty() ? 0 : *std::max_element(loads.begin(), loads.end());
  return static_cast<double>(busiest) / testbed.bandwidth_bps;
}

}  // namespace edgeplan
