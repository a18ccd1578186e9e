#include "edgeplan/planner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>

#include "edgeplan/errors.hpp"
#include "json.hpp"

namespace edgeplan {

namespace {

using Json = nlohmann::ordered_json;

constexpr double kInf = std::numeric_limits<double>::infinity();

// Producer tiles per (layer, scheme), built on first use.
class TileCache {
 public:
  TileCache(const ModelGraph& graph, int node_count)
      : graph_(graph), node_count_(node_count), tiles_(graph.size()) {}

  const TileMap& get(int layer, Scheme scheme) {
    auto& slot = tiles_[layer][ordinal(scheme)];
    if (!slot) slot = assign_tiles(graph_.layers[layer], scheme, node_count_);
    return *slot;
  }

 private:
  const ModelGraph& graph_;
  int node_count_;
  std::vector<std::array<std::optional<TileMap>, kSchemeCount>> tiles_;
};

SegmentCost evaluate(const ModelGraph& graph, const TestbedSpec& testbed,
                     const Estimator& estimator, TileCache& tiles, const ChainGeometry& chain,
                     const Segment& seg, Scheme anchor_scheme) {
  const TileMap* producer = seg.anchor() >= 0 ? &tiles.get(seg.anchor(), anchor_scheme) : nullptr;
  const SegmentLayout layout{&graph, seg, anchor_scheme, producer, &chain};
  return estimator.estimate_segment(layout, testbed);
}

void check_inputs(const ModelGraph& graph, const TestbedSpec& testbed) {
  validate_graph(graph);
  validate_testbed(testbed);
}

void check_mask(const ModelGraph& graph, const SchemeMask& allowed, int node_count) {
  if (allowed.size() != graph.size()) throw PlannerError("scheme mask does not match the graph");
  for (std::size_t i = 0; i < allowed.size(); ++i) {
    bool any = false;
    for (Scheme s : kAllSchemes) {
      if (!allowed[i][ordinal(s)]) continue;
      if (!can_tile(graph.layers[i], s, node_count)) {
        throw PlannerError("layer " + std::to_string(i) + ": scheme " +
                           std::string(to_string(s)) + " cannot tile it");
      }
      any = true;
    }
    if (!any) {
      throw PlannerError("layer " + std::to_string(i) + " cannot be tiled across " +
                         std::to_string(node_count) + " nodes by any allowed scheme");
    }
  }
}

struct Choice {
  double cost = kInf;
  int length = 0;
  int scheme = 0;
};

bool improves(double cost, int length, int scheme, const Choice& best) {
  if (cost != best.cost) return cost < best.cost;
  if (length != best.length) return length < best.length;
  return scheme < best.scheme;
}

}  // namespace

SchemeMask tileable_mask(const ModelGraph& graph, int node_count) {
  SchemeMask mask(graph.size());
  for (std::size_t i = 0; i < graph.size(); ++i) {
    for (Scheme s : kAllSchemes) mask[i][ordinal(s)] = can_tile(graph.layers[i], s, node_count);
  }
  return mask;
}

PlanResult plan_dpp(const ModelGraph& graph, const TestbedSpec& testbed, const Estimator& estimator,
                    const PlannerOptions& options) {
  check_inputs(graph, testbed);
  return plan_dpp(graph, testbed, estimator, tileable_mask(graph, testbed.node_count), options);
}

PlanResult plan_dpp(const ModelGraph& graph, const TestbedSpec& testbed, const Estimator& estimator,
                    const SchemeMask& allowed, const PlannerOptions& options) {
  check_inputs(graph, testbed);
  const int n = testbed.node_count;
  check_mask(graph, allowed, n);
  const int layers = static_cast<int>(graph.size());
  const bool prune = options.prune && estimator.exact_compute();

  // nests[b][s]: the tiles of layer b sit inside what layer b + 1's tiles read.
  std::vector<std::array<bool, kSchemeCount>> nests(layers, {false, false, false, false});
  if (prune) {
    for (int b = 0; b + 1 < layers; ++b) {
      for (Scheme s : kAllSchemes) {
        nests[b][ordinal(s)] = is_spatial(s) && allowed[b][ordinal(s)] &&
                               allowed[b + 1][ordinal(s)] &&
                               tiles_nest(graph.layers[b], graph.layers[b + 1], s, n);
      }
    }
  }

  // value[j + 1][s]: cost of everything after a T exchange at layer j under scheme s.
  std::vector<std::array<Choice, kSchemeCount>> value(layers + 1);
  for (Scheme s : kAllSchemes) {
    if (allowed[layers - 1][ordinal(s)]) {
      value[layers][ordinal(s)].cost = estimator.estimate_final_sync(graph, s, testbed);
    }
  }

  TileCache tiles(graph, n);
  // Compute of a chain closing at layer b is at least that of the closing layer's own tiles.
  const auto closing_bound = [&](int b, Scheme s, int length) {
    WorkloadTable work = WorkloadTable::Zero(length, n);
    const TileMap& own = tiles.get(b, s);
    for (int u = 0; u < n; ++u) work(0, u) = node_workload(graph.layers[b], own.tiles[u]);
    return chain_compute_time(work, testbed);
  };
  PlanResult result;
  for (int j = layers - 2; j >= -1; --j) {
    std::vector<int> anchors;
    if (j < 0) {
      anchors.push_back(0);
    } else {
      for (Scheme s : kAllSchemes) {
        if (allowed[j][ordinal(s)]) anchors.push_back(ordinal(s));
      }
    }
    std::array<Choice, kSchemeCount>& best = value[j + 1];
    for (Scheme chain_scheme : kAllSchemes) {
      const int cs = ordinal(chain_scheme);
      // Lower bound on the compute of any longer chain, valid while tiles keep nesting.
      double nested_bound = 0.0;
      for (int m = 1; j + m < layers; ++m) {
        const int b = j + m;
        if (!allowed[b][cs]) break;
        if (m >= 2 && !is_spatial(chain_scheme)) break;
        const double tail = value[b + 1][cs].cost;
        const Segment seg{j + 1, b, chain_scheme};
        double compute_bound = 0.0;
        if (prune) {
          compute_bound = std::max(closing_bound(b, chain_scheme, m), nested_bound);
        }
        std::optional<ChainGeometry> chain;
        bool exact_bound = false;
        for (int a : anchors) {
          if (tail == kInf) break;
          if (prune && compute_bound + tail > best[a].cost) continue;
          if (!chain) chain = chain_geometry(graph.layers, seg.first, seg.last, chain_scheme, n);
          if (prune && !exact_bound) {
            compute_bound = chain_compute_time(chain_workloads(graph, *chain), testbed);
            nested_bound = compute_bound;
            exact_bound = true;
            if (compute_bound + tail > best[a].cost) continue;
          }
          const SegmentCost cost =
              evaluate(graph, testbed, estimator, tiles, *chain, seg, static_cast<Scheme>(a));
          ++result.evaluations;
          const double candidate = cost.total() + tail;
          if (improves(candidate, m, cs, best[a])) best[a] = {candidate, m, cs};
        }
        if (!(b + 1 < layers && nests[b][cs])) nested_bound = 0.0;
      }
    }
  }

  const Choice& root = value[0][0];
  if (root.cost == kInf) throw PlannerError("no feasible plan exists for this graph and testbed");
  result.predicted_cost_s = root.cost;
  result.plan.resize(layers);
  int j = -1;
  int s = 0;
  while (j < layers - 1) {
    const Choice& c = value[j + 1][s];
    for (int k = j + 1; k <= j + c.length; ++k) {
      result.plan[k] = {static_cast<Scheme>(c.scheme), k == j + c.length ? Mode::kT : Mode::kNT};
    }
    j += c.length;
    s = c.scheme;
  }
  result.simulated_cost_s = simulate(graph, result.plan, testbed).total_s;
  return result;
}

PlanResult plan_bruteforce(const ModelGraph& graph, const TestbedSpec& testbed,
                           const Estimator& estimator, int layer_cap) {
  check_inputs(graph, testbed);
  const int layers = static_cast<int>(graph.size());
  if (layers > layer_cap) {
    throw PlannerError("brute force is capped at " + std::to_string(layer_cap) + " layers, graph has " +
                       std::to_string(layers));
  }
  const int n = testbed.node_count;
  const SchemeMask allowed = tileable_mask(graph, n);
  TileCache tiles(graph, n);

  // cache[first][last][scheme][anchor scheme]
  std::vector<std::optional<double>> cache(static_cast<std::size_t>(layers * layers * kSchemeCount * kSchemeCount));
  std::array<std::optional<double>, kSchemeCount> final_cache;
  PlanResult result;
  const auto segment_total = [&](const Segment& seg, Scheme anchor_scheme) {
    const int a = seg.anchor() >= 0 ? ordinal(anchor_scheme) : 0;
    auto& slot = cache[((seg.first * layers + seg.last) * kSchemeCount + ordinal(seg.scheme)) *
                           kSchemeCount + a];
    if (!slot) {
      const ChainGeometry chain = chain_geometry(graph.layers, seg.first, seg.last, seg.scheme, n);
      slot = evaluate(graph, testbed, estimator, tiles, chain, seg, static_cast<Scheme>(a)).total();
      ++result.evaluations;
    }
    return *slot;
  };

  Plan plan(layers);
  double best_cost = kInf;
  std::vector<std::pair<int, int>> best_key;
  Plan best_plan;
  std::vector<double> totals;
  std::vector<std::pair<int, int>> key;

  const auto finish = [&] {
    ++result.plans_enumerated;
    const std::vector<Segment> segments = split_segments(plan);
    totals.clear();
    key.clear();
    for (std::size_t i = 0; i < segments.size(); ++i) {
      const Segment& seg = segments[i];
      const Scheme anchor = i > 0 ? segments[i - 1].scheme : Scheme::kInH;
      totals.push_back(segment_total(seg, anchor));
      key.emplace_back(seg.length(), ordinal(seg.scheme));
    }
    auto& fin = final_cache[ordinal(plan.back().scheme)];
    if (!fin) fin = estimator.estimate_final_sync(graph, plan.back().scheme, testbed);
    const double cost = fold_plan_cost(totals, *fin);
    if (cost < best_cost || (cost == best_cost && key < best_key)) {
      best_cost = cost;
      best_key = key;
      best_plan = plan;
    }
  };

  const auto recurse = [&](const auto& self, int i) -> void {
    if (i == layers) {
      finish();
      return;
    }
    for (Scheme s : kAllSchemes) {
      if (!allowed[i][ordinal(s)]) continue;
      if (i > 0 && plan[i - 1].mode == Mode::kNT && plan[i - 1].scheme != s) continue;
      for (Mode mode : {Mode::kT, Mode::kNT}) {
        if (mode == Mode::kNT && (i + 1 == layers || !is_spatial(s))) continue;
        plan[i] = {s, mode};
        self(self, i + 1);
      }
    }
  };
  recurse(recurse, 0);

  if (best_cost == kInf) throw PlannerError("no feasible plan exists for this graph and testbed");
  result.plan = best_plan;
  result.predicted_cost_s = best_cost;
  result.simulated_cost_s = simulate(graph, result.plan, testbed).total_s;
  return result;
}

boost::multiprecision::cpp_int count_search_space(int layer_count, int scheme_count) {
  if (layer_count < 1) throw ValidationError("layer count must be >= 1");
  if (scheme_count < 1) throw ValidationError("scheme count must be >= 1");
  using boost::multiprecision::cpp_int;
  return boost::multiprecision::pow(cpp_int(scheme_count), layer_count) *
         boost::multiprecision::pow(cpp_int(2), layer_count - 1);
}

Scheme fallback_scheme(const LayerSpec& layer, int node_count) {
  for (Scheme s : kAllSchemes) {
    if (can_tile(layer, s, node_count)) return s;
  }
  throw PlannerError("layer " + std::to_string(layer.id) + " cannot be tiled across " +
                     std::to_string(node_count) + " nodes by any scheme");
}

Plan plan_fixed(const ModelGraph& graph, Scheme scheme, int node_count) {
  validate_graph(graph);
  Plan plan;
  for (const LayerSpec& l : graph.layers) {
    plan.push_back({can_tile(l, scheme, node_count) ? scheme : fallback_scheme(l, node_count), Mode::kT});
  }
  return plan;
}

Plan plan_layerwise(const ModelGraph& graph, const TestbedSpec& testbed, const Estimator& estimator) {
  check_inputs(graph, testbed);
  const int n = testbed.node_count;
  TileCache tiles(graph, n);
  Plan plan;
  for (int i = 0; i < static_cast<int>(graph.size()); ++i) {
    const Scheme previous = i > 0 ? plan.back().scheme : Scheme::kInH;
    std::optional<Scheme> chosen;
    double chosen_cost = kInf;
    for (Scheme s : kAllSchemes) {
      if (!can_tile(graph.layers[i], s, n)) continue;
      const Segment seg{i, i, s};
      const ChainGeometry chain = chain_geometry(graph.layers, i, i, s, n);
      const double cost = evaluate(graph, testbed, estimator, tiles, chain, seg, previous).total();
      if (!chosen || cost < chosen_cost) {
        chosen = s;
        chosen_cost = cost;
      }
    }
    if (!chosen) chosen = fallback_scheme(graph.layers[i], n);
    plan.push_back({*chosen, Mode::kT});
  }
  return plan;
}

Plan plan_fused_fixed(const ModelGraph& graph, const TestbedSpec& testbed,
                      const Estimator& estimator, Scheme scheme) {
  check_inputs(graph, testbed);
  const int n = testbed.node_count;
  SchemeMask mask(graph.size(), {false, false, false, false});
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const LayerSpec& l = graph.layers[i];
    mask[i][ordinal(can_tile(l, scheme, n) ? scheme : fallback_scheme(l, n))] = true;
  }
  return plan_dpp(graph, testbed, estimator, mask, PlannerOptions{}).plan;
}

std::vector<double> performance_scores(std::span<const double> times) {
  if (times.empty()) throw ValidationError("no times to score");
  for (double t : times) {
    if (!(t > 0.0) || !std::isfinite(t)) throw ValidationError("times must be finite and > 0");
  }
  const double best = *std::min_element(times.begin(), times.end());
  std::vector<double> scores;
  for (double t : times) scores.push_back(best / t);
  return scores;
}

std::string plan_to_json(const Plan& plan, const std::string& estimator_kind,
                         double predicted_cost_s, double simulated_cost_s) {
  Json doc;
  doc["estimator"] = estimator_kind;
  doc["predicted_cost_s"] = predicted_cost_s;
  doc["simulated_cost_s"] = simulated_cost_s;
  auto entries = Json::array();
  for (std::size_t i = 0; i < plan.size(); ++i) {
    Json e;
    e["layer_id"] = i;
    e["scheme"] = std::string(to_string(plan[i].scheme));
    e["mode"] = std::string(to_string(plan[i].mode));
    entries.push_back(std::move(e));
  }
  doc["layers"] = std::move(entries);
  return doc.dump(2) + "\n";
}

Plan parse_plan(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("plan document: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("layers") || !doc["layers"].is_array()) {
    throw ParseError("plan document: missing 'layers' array");
  }
  Plan plan;
  for (const Json& e : doc["layers"]) {
    if (!e.is_object() || !e.contains("layer_id") || !e.contains("scheme") || !e.contains("mode") ||
        !e["layer_id"].is_number_integer() || !e["scheme"].is_string() || !e["mode"].is_string()) {
      throw ParseError("plan entry " + std::to_string(plan.size()) +
                       ": needs integer 'layer_id' and string 'scheme' and 'mode'");
    }
    if (e["layer_id"].get<std::int64_t>() != static_cast<std::int64_t>(plan.size())) {
      throw ParseError("plan entry " + std::to_string(plan.size()) + ": layer ids must be 0, 1, 2, ...");
    }
    plan.push_back({scheme_from_string(e["scheme"].get<std::string>()),
                    mode_from_string(e["mode"].get<std::string>())});
  }
  return plan;
}

Plan load_plan_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open plan file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_plan(buf.str());
}

}  // namespace edgeplan
