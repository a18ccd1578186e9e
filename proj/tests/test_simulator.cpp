#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "edgeplan/errors.hpp"
#include "edgeplan/simulator.hpp"
#include "oracles.hpp"

using namespace edgeplan;

namespace {

LayerSpec layer(std::int64_t h, std::int64_t w, std::int64_t c, std::int64_t oc, std::int64_t k,
                std::int64_t s, std::int64_t p, LayerKind kind = LayerKind::kStandardConv) {
  LayerSpec l;
  l.kind = kind;
  l.in_h = h;
  l.in_w = w;
  l.in_c = c;
  l.out_c = oc;
  l.kernel = k;
  l.stride = s;
  l.padding = p;
  l.out_h = conv_out_extent(h, k, s, p);
  l.out_w = conv_out_extent(w, k, s, p);
  return l;
}

ModelGraph chain_of(std::vector<LayerSpec> layers) {
  ModelGraph g;
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].id = static_cast<int>(i);
  g.layers = std::move(layers);
  validate_graph(g);
  return g;
}

Plan all_t(const ModelGraph& g, Scheme s) { return Plan(g.size(), PlanEntry{s, Mode::kT}); }

}  // namespace

TEST_CASE("testbed documents") {
  const TestbedSpec t = parse_testbed(
      R"({"node_count": 4, "rates": 1e10, "topology": "ring", "bandwidth_bps": 5e9})");
  CHECK(t.node_count == 4);
  CHECK(t.rates == std::vector<double>(4, 1e10));
  CHECK(t.topology == Topology::kRing);
  CHECK(parse_testbed(serialize_testbed(t)) == t);

  const TestbedSpec het = parse_testbed(
      R"({"node_count": 3, "rates": [1e9, 2e9, 3e9], "topology": "mesh", "bandwidth_bps": 1e9,
          "per_layer_overhead_s": 1e-5})");
  CHECK(het.rates[2] == 3e9);
  CHECK(parse_testbed(serialize_testbed(het)) == het);

  CHECK_THROWS_AS(parse_testbed(
      R"({"node_count": 4, "rates": 1e10, "topology": "ring", "bandwidth_bps": 0})"),
                  ValidationError);
  CHECK_THROWS_AS(parse_testbed(
      R"({"node_count": 1, "rates": 1e10, "topology": "ring", "bandwidth_bps": 5e9})"),
                  ValidationError);
  CHECK_THROWS_AS(parse_testbed(
      R"({"node_count": 4, "rates": 1e10, "topology": "torus", "bandwidth_bps": 5e9})"),
                  ParseError);
  CHECK_THROWS_AS(parse_testbed(
      R"({"node_count": 4, "rates": 1e10, "topology": "ring", "bandwidth_bps": 5e9, "x": 1})"),
                  ParseError);
}

TEST_CASE("ring neighbor transfer") {
  const TestbedSpec t = make_testbed(4, 1e10, Topology::kRing, 5e8);
  ByteMatrix v = ByteMatrix::Zero(4, 4);
  v(1, 2) = 28672;
  CHECK(comm_time(v, t) == doctest::Approx(4.58752e-4).epsilon(1e-12));
  CHECK(comm_time(ByteMatrix::Zero(4, 4), t) == 0.0);
  CHECK_THROWS_AS(comm_time(ByteMatrix::Zero(3, 3), t), ValidationError);
}

TEST_CASE("ring routes along the shorter arc, ties clockwise") {
  const TestbedSpec t = make_testbed(4, 1e10, Topology::kRing, 1e9);
  ByteMatrix v = ByteMatrix::Zero(4, 4);
  v(0, 2) = 10;  // tie: 0 -> 1 -> 2
  v(0, 3) = 7;   // counter-clockwise: 0 -> 3
  const auto loads = link_loads_bits(v, t);
  REQUIRE(loads.size() == 8);
  CHECK(loads[0] == 80);
  CHECK(loads[1] == 80);
  CHECK(loads[2] == 0);
  CHECK(loads[4 + 0] == 56);
  CHECK(comm_time(v, t) == 80.0 / 1e9);
}

TEST_CASE("ps aggregates per node and dominates mesh") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = static_cast<int>(uniform_int(rng, 2, 6));
    ByteMatrix v = ByteMatrix::Zero(n, n);
    for (int u = 0; u < n; ++u)
      for (int w = 0; w < n; ++w)
        if (u != w) v(u, w) = uniform_int(rng, 0, 1 << 20);
    const double mesh = comm_time(v, make_testbed(n, 1e10, Topology::kMesh, 1e9));
    const double ps = comm_time(v, make_testbed(n, 1e10, Topology::kPs, 1e9));
    CHECK(ps >= mesh);
    std::int64_t busiest = 0;
    for (int u = 0; u < n; ++u) {
      busiest = std::max({busiest, v.row(u).sum(), v.col(u).sum()});
    }
    CHECK(ps == static_cast<double>(busiest * 8) / 1e9);
  }
}

TEST_CASE("unit-kernel segment from the input splits perfectly") {
  const ModelGraph g = chain_of({layer(16, 16, 8, 32, 1, 1, 0, LayerKind::kPointwiseConv)});
  const TestbedSpec t = make_testbed(4, 1e10, Topology::kRing, 5e9);
  for (Scheme s : kAllSchemes) {
    const SegmentCost c = segment_cost(g, Segment{0, 0, s}, Scheme::kInH, t);
    CHECK(c.entry_sync_s == 0.0);
    CHECK(c.compute_s == doctest::Approx(static_cast<double>(layer_flops(g[0])) / (4 * 1e10))
                             .epsilon(1e-15));
  }
}

TEST_CASE("fusing two 3x3 layers trades compute for sync") {
  const ModelGraph g = chain_of({layer(14, 14, 64, 64, 3, 1, 1), layer(14, 14, 64, 64, 3, 1, 1)});
  const TestbedSpec t = make_testbed(4, 1e10, Topology::kRing, 5e8);
  const SegmentCost fused = segment_cost(g, Segment{0, 1, Scheme::kInH}, Scheme::kInH, t);
  const SegmentCost first = segment_cost(g, Segment{0, 0, Scheme::kInH}, Scheme::kInH, t);
  const SegmentCost second = segment_cost(g, Segment{1, 1, Scheme::kInH}, Scheme::kInH, t);
  CHECK(fused.compute_s > first.compute_s + second.compute_s);
  CHECK(fused.entry_sync_s < first.entry_sync_s + second.entry_sync_s);
}

TEST_CASE("segment after an outc producer pays the all-fetch matrix") {
  const ModelGraph g = chain_of({layer(14, 14, 512, 512, 3, 1, 1),
                                 layer(14, 14, 512, 512, 1, 1, 0, LayerKind::kPointwiseConv)});
  const TestbedSpec t = make_testbed(4, 1e10, Topology::kPs, 1e9);
  const SegmentCost c = segment_cost(g, Segment{1, 1, Scheme::kInH}, Scheme::kOutC, t);
  const TileMap producer = assign_tiles(g[0], Scheme::kOutC, 4);
  const auto needs = chain_entry_regions(std::span(&g.layers[1], 1), Scheme::kInH, 4);
  const ByteMatrix v = transfer_volumes(producer, needs, g.element_size);
  CHECK(v.col(0).sum() == 86016);
  CHECK(c.entry_sync_s == comm_time(v, t));
  CHECK_THROWS_AS(segment_cost(g, Segment{0, 1, Scheme::kOutC}, Scheme::kInH, t), ValidationError);
}

TEST_CASE("one-layer plan by hand") {
  const ModelGraph g = chain_of({layer(12, 12, 4, 8, 3, 1, 1)});
  const TestbedSpec t = make_testbed(3, 2e9, Topology::kMesh, 1e9);
  const CostReport r = simulate(g, all_t(g, Scheme::kInH), t);
  // Rows split 4/4/4: every node computes a third; nodes 1 and 2 each ship 4x12x8 floats.
  const double compute = static_cast<double>(layer_flops(g[0]) / 3) / 2e9;
  const double gather = static_cast<double>(4 * 12 * 8 * 4 * 8) / 1e9;
  CHECK(r.segments.size() == 1);
  CHECK(r.segments[0].cost.compute_s == compute);
  CHECK(r.segments[0].cost.entry_sync_s == 0.0);
  CHECK(r.final_sync_s == gather);
  CHECK(r.total_s == compute + gather);
  CHECK(final_gather_volumes(g, Scheme::kInH, 3).row(0).isZero());
}

TEST_CASE("identical plans give identical reports") {
  const ModelGraph g = builtin_model("mobilenet-like", 0.25);
  const TestbedSpec t = make_testbed(4, 1e10, Topology::kRing, 5e8);
  Rng rng(2);
  const Plan plan = oracle::random_plan(rng, g, 4);
  CHECK(cost_report_to_json(simulate(g, plan, t)) == cost_report_to_json(simulate(g, plan, t)));
}

TEST_CASE("toggling T to NT changes the total by the segment deltas") {
  const ModelGraph g = chain_of({layer(16, 16, 8, 8, 3, 1, 1), layer(16, 16, 8, 8, 3, 1, 1),
                                 layer(16, 16, 8, 8, 3, 1, 1)});
  const TestbedSpec t = make_testbed(4, 1e10, Topology::kRing, 1e9);
  Plan plan = all_t(g, Scheme::kInH);
  const double before = simulate(g, plan, t).total_s;
  plan[1].mode = Mode::kNT;
  const double after = simulate(g, plan, t).total_s;
  const SegmentCost s1 = segment_cost(g, Segment{1, 1, Scheme::kInH}, Scheme::kInH, t);
  const SegmentCost s2 = segment_cost(g, Segment{2, 2, Scheme::kInH}, Scheme::kInH, t);
  const SegmentCost fused = segment_cost(g, Segment{1, 2, Scheme::kInH}, Scheme::kInH, t);
  const double d_compute = fused.compute_s - (s1.compute_s + s2.compute_s);
  const double d_sync = (s1.entry_sync_s + s2.entry_sync_s) - fused.entry_sync_s;
  CHECK(after - before == doctest::Approx(d_compute - d_sync).epsilon(1e-12));
}

TEST_CASE("additivity over random plans") {
  Rng rng(17);
  int checked = 0;
  while (checked < 300) {
    const VerifyInstance inst = verify_instance(99, checked, 7);
    const Plan plan = oracle::random_plan(rng, inst.graph, inst.testbed.node_count);
    const CostReport r = simulate(inst.graph, plan, inst.testbed);
    std::vector<double> totals;
    double naive = r.final_sync_s;
    for (const Segment& seg : split_segments(plan)) {
      const Scheme producer = seg.anchor() >= 0 ? plan[seg.anchor()].scheme : Scheme::kInH;
      const SegmentCost c = segment_cost(inst.graph, seg, producer, inst.testbed);
      totals.push_back(c.total());
      naive += c.total();
    }
    CHECK(r.total_s == fold_plan_cost(totals, final_sync_time(inst.graph, plan.back().scheme,
                                                              inst.testbed)));
    CHECK(r.total_s == doctest::Approx(naive).epsilon(1e-12));
    ++checked;
  }
}

TEST_CASE("more bandwidth or faster nodes never slow a plan down") {
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    const VerifyInstance inst = verify_instance(5, i, 6);
    const Plan plan = oracle::random_plan(rng, inst.graph, inst.testbed.node_count);
    const double base = simulate(inst.graph, plan, inst.testbed).total_s;
    TestbedSpec wide = inst.testbed;
    wide.bandwidth_bps *= 2;
    TestbedSpec fast = inst.testbed;
    for (double& r : fast.rates) r *= 2;
    CHECK(simulate(inst.graph, plan, wide).total_s <= base);
    CHECK(simulate(inst.graph, plan, fast).total_s <= base);
  }
}

TEST_CASE("unit-kernel models: spatial schemes tie on compute with no inter-layer sync") {
  const ModelGraph g = builtin_model("bert-like", 0.25);
  const TestbedSpec t = make_testbed(4, 1e10, Topology::kRing, 1e9);
  std::optional<double> compute;
  for (Scheme s : {Scheme::kInH, Scheme::kInW, Scheme::kGrid2D}) {
    const CostReport r = simulate(g, all_t(g, s), t);
    double total_compute = 0.0;
    for (const SegmentReport& seg : r.segments) {
      total_compute += seg.cost.compute_s;
      CHECK(seg.cost.entry_sync_s == 0.0);
      CHECK(seg.transfers.isZero());
    }
    if (!compute) compute = total_compute;
    CHECK(total_compute == *compute);
  }
}

TEST_CASE("invalid plans are rejected") {
  const ModelGraph g = chain_of({layer(8, 8, 4, 4, 3, 1, 1), layer(8, 8, 4, 4, 3, 1, 1)});
  const TestbedSpec t = make_testbed(4, 1e10, Topology::kRing, 1e9);
  CHECK_THROWS_AS(simulate(g, {{Scheme::kOutC, Mode::kNT}, {Scheme::kOutC, Mode::kT}}, t),
                  ValidationError);
  CHECK_THROWS_AS(simulate(g, {{Scheme::kInH, Mode::kT}}, t), ValidationError);
}
