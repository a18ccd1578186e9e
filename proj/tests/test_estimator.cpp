#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "edgeplan/errors.hpp"
#include "edgeplan/estimator.hpp"
#include "edgeplan/traces.hpp"

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

FeatureMatrix rows_of(const std::vector<FeatureArray>& xs) {
  FeatureMatrix m(static_cast<Eigen::Index>(xs.size()), kFeatureCount);
  for (std::size_t i = 0; i < xs.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = xs[i].transpose();
  return m;
}

FeatureArray constant_features() {
  FeatureVector f;
  f.in_h = f.in_w = 14;
  f.in_c = f.out_c = 64;
  f.out_h = f.out_w = 14;
  f.kernel = 3;
  f.stride = 1;
  f.padding = 1;
  f.bandwidth_bps = 1e9;
  f.node_count = 4;
  return f.to_array();
}

GbdtParams params(int trees, int depth, double lr, int min_leaf) {
  GbdtParams p;
  p.trees = trees;
  p.max_depth = depth;
  p.learning_rate = lr;
  p.min_samples_leaf = min_leaf;
  return p;
}

struct Clusters {
  FeatureMatrix x;
  Eigen::VectorXd y;
};

// Three samples at 1 Gbps and three at 5 Gbps; labels vary within each cluster.
Clusters bandwidth_clusters() {
  std::vector<FeatureArray> xs;
  Eigen::VectorXd y(6);
  const double labels[6] = {1.0, 2.0, 3.0, 10.0, 12.0, 14.0};
  for (int i = 0; i < 6; ++i) {
    FeatureArray a = constant_features();
    a[10] = i < 3 ? 1e9 : 5e9;
    xs.push_back(a);
    y[i] = labels[i];
  }
  return {rows_of(xs), y};
}

}  // namespace

TEST_CASE("interior inh node features include its halo rows") {
  ModelGraph g;
  g.layers = {layer(16, 16, 8, 8, 3, 1, 1), layer(16, 16, 8, 8, 3, 1, 1)};
  g.layers[1].id = 1;
  const ChainGeometry chain = chain_geometry(g.layers, 0, 1, Scheme::kInH, 4);
  const BoxSet& node1 = chain.computed[0][1];
  REQUIRE(node1.size() == 1);
  // Node 1 owns rows 4..7 of layer 1, so layer 0 must produce rows 3..8 and read rows 2..9.
  CHECK(node1[0].row_lo == 3);
  CHECK(node1[0].row_hi == 8);
  const LayerSpec eff = effective_layer(g[0], node1);
  const FeatureVector f = extract_features(eff, make_testbed(4, 1e10, Topology::kRing, 1e9),
                                           Scheme::kInH);
  CHECK(f.out_h == 6);
  CHECK(f.in_h == 8);
  CHECK(f.out_w == 16);
  CHECK(f.in_w == 16);
  CHECK(f.kernel == 3);
  CHECK(f.scheme == 0);
}

TEST_CASE("unit-kernel layers have no halo between T and NT") {
  ModelGraph g;
  g.layers = {layer(16, 16, 8, 8, 1, 1, 0, LayerKind::kPointwiseConv),
              layer(16, 16, 8, 8, 1, 1, 0, LayerKind::kPointwiseConv)};
  g.layers[1].id = 1;
  const TestbedSpec t = make_testbed(4, 1e10, Topology::kRing, 1e9);
  for (Scheme s : {Scheme::kInH, Scheme::kInW, Scheme::kGrid2D}) {
    const ChainGeometry fused = chain_geometry(g.layers, 0, 1, s, 4);
    const ChainGeometry alone = chain_geometry(g.layers, 0, 0, s, 4);
    for (int u = 0; u < 4; ++u) {
      CHECK(extract_features(effective_layer(g[0], fused.computed[0][u]), t, s) ==
            extract_features(effective_layer(g[0], alone.computed[0][u]), t, s));
    }
  }
}

TEST_CASE("bandwidth alone changes only the bandwidth feature") {
  const LayerSpec l = layer(14, 14, 32, 32, 3, 1, 1);
  FeatureVector a = extract_features(l, make_testbed(4, 1e10, Topology::kPs, 1e9), Scheme::kInW);
  const FeatureVector b =
      extract_features(l, make_testbed(4, 1e10, Topology::kPs, 5e8), Scheme::kInW);
  CHECK(a.bandwidth_bps != b.bandwidth_bps);
  a.bandwidth_bps = b.bandwidth_bps;
  CHECK(a == b);
  CHECK(FeatureVector::from_array(b.to_array()) == b);
}

TEST_CASE("sync pair ordinals are a permutation of 0..15") {
  std::vector<int> seen(16, 0);
  for (Scheme p : kAllSchemes)
    for (Scheme c : kAllSchemes) ++seen[static_cast<std::size_t>(sync_pair_ordinal(p, c))];
  for (int count : seen) CHECK(count == 1);
  for (Scheme s : {Scheme::kInH, Scheme::kInW, Scheme::kGrid2D}) {
    CHECK(sync_pair_ordinal(s, s) < sync_pair_ordinal(s, Scheme::kOutC));
  }
}

TEST_CASE("zero trees predict the label mean") {
  const FeatureMatrix x = rows_of({constant_features(), constant_features()});
  Eigen::VectorXd y(2);
  y << 1.0, 3.0;
  const GbdtModel m = fit_gbdt(x, y, LabelKind::kInference, params(0, 3, 0.1, 1));
  CHECK(m.trees.empty());
  FeatureVector probe = FeatureVector::from_array(constant_features());
  CHECK(predict(m, probe) == 2.0);
  probe.in_h = 1000;
  CHECK(predict(m, probe) == 2.0);
}

TEST_CASE("constant features never split") {
  std::vector<FeatureArray> xs(10, constant_features());
  Eigen::VectorXd y(10);
  for (int i = 0; i < 10; ++i) y[i] = 0.5 * i;
  const GbdtModel m = fit_gbdt(rows_of(xs), y, LabelKind::kSync, params(20, 4, 0.3, 1));
  for (const RegressionTree& t : m.trees) CHECK(t.nodes.size() == 1);
  CHECK(predict(m, FeatureVector::from_array(constant_features())) ==
        doctest::Approx(y.mean()).epsilon(1e-12));
}

TEST_CASE("one stump separates two bandwidth clusters") {
  const Clusters c = bandwidth_clusters();
  const GbdtModel m = fit_gbdt(c.x, c.y, LabelKind::kSync, params(1, 1, 1.0, 1));
  REQUIRE(m.trees.size() == 1);
  REQUIRE(m.trees[0].nodes.size() == 3);
  CHECK(m.trees[0].nodes[0].feature == 10);
  FeatureVector slow = FeatureVector::from_array(constant_features());
  slow.bandwidth_bps = 1e9;
  FeatureVector fast = slow;
  fast.bandwidth_bps = 5e9;
  // Cluster means 2 and 12 by hand.
  CHECK(predict(m, slow) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(predict(m, fast) == doctest::Approx(12.0).epsilon(1e-12));
}

TEST_CASE("distinct single feature is memorized") {
  std::vector<FeatureArray> xs;
  std::vector<FeatureVector> fs;
  std::vector<double> labels;
  Eigen::VectorXd y(8);
  for (int i = 0; i < 8; ++i) {
    FeatureArray a = constant_features();
    a[0] = 10 + i;
    xs.push_back(a);
    fs.push_back(FeatureVector::from_array(a));
    y[i] = 1.0 + (i * 5 % 8);
    labels.push_back(y[i]);
  }
  const GbdtModel m = fit_gbdt(rows_of(xs), y, LabelKind::kInference, params(200, 3, 1.0, 1));
  const EvalReport r = evaluate(m, fs, labels);
  CHECK(r.samples == 8);
  CHECK(r.median_relative_error == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.max_absolute_error < 1e-9);
}

TEST_CASE("training loss is non-increasing and the model fits its training set best") {
  TraceConfig cfg;
  cfg.samples = 3000;
  const TraceSet all = filter_kind(gen_traces(cfg, 5), LabelKind::kInference);
  const TraceSet train(all.begin(), all.begin() + 2400);
  const TraceSet holdout(all.begin() + 2400, all.end());
  GbdtParams p = params(60, 6, 0.2, 5);
  p.target = TargetTransform::kLog;
  std::vector<double> loss;
  const GbdtModel m = train_gbdt(train, p, &loss);
  REQUIRE(loss.size() == 60);
  for (std::size_t i = 1; i < loss.size(); ++i) CHECK(loss[i] <= loss[i - 1]);
  CHECK(evaluate(m, train).median_relative_error < evaluate(m, holdout).median_relative_error);

  for (const GbdtModel& probe : {m, fit_gbdt(bandwidth_clusters().x, bandwidth_clusters().y,
                                             LabelKind::kSync, params(1, 1, 1.0, 1))}) {
    for (const RegressionTree& t : probe.trees) {
      for (const TreeNode& n : t.nodes) {
        CHECK(n.feature < kFeatureCount);
        CHECK(std::isfinite(n.value));
      }
    }
  }
}

TEST_CASE("model documents round-trip bit-exactly") {
  TraceConfig cfg;
  cfg.samples = 600;
  const TraceSet traces = gen_traces(cfg, 9);
  GbdtParams p = params(25, 4, 0.1, 3);
  p.target = TargetTransform::kLog;
  const GbdtModel m = train_gbdt(filter_kind(traces, LabelKind::kSync), p);
  const GbdtModel back = parse_gbdt(serialize_gbdt(m));
  CHECK(back == m);
  for (const TraceSample& s : traces) {
    CHECK(predict(back, s.features) == predict(m, s.features));
  }
  CHECK(serialize_gbdt(back) == serialize_gbdt(m));

  p.target = TargetTransform::kLogRatio;
  const GbdtModel ratio = train_gbdt(filter_kind(traces, LabelKind::kSync), p);
  const GbdtModel ratio_back = parse_gbdt(serialize_gbdt(ratio));
  CHECK(ratio_back.target == TargetTransform::kLogRatio);
  for (const TraceSample& s : filter_kind(traces, LabelKind::kSync)) {
    CHECK(predict(ratio_back, s.features) == predict(ratio, s.features));
    CHECK(predict(ratio, s.features) >= 0.0);
  }

  std::string doc = serialize_gbdt(m);
  const std::string key = "\"schema_version\":1";
  const auto at = doc.find(key);
  REQUIRE(at != std::string::npos);
  doc.replace(at, key.size(), "\"schema_version\":2");
  CHECK_THROWS_AS(parse_gbdt(doc), ParseError);
  CHECK_THROWS_AS(parse_gbdt("{\"trees\": ["), ParseError);
}

TEST_CASE("training and evaluation reject bad inputs") {
  CHECK_THROWS_AS(train_gbdt({}, params(1, 1, 0.1, 1)), ValidationError);
  TraceConfig cfg;
  cfg.samples = 4;
  const TraceSet mixed = gen_traces(cfg, 1);
  CHECK_THROWS_AS(train_gbdt(mixed, params(1, 1, 0.1, 1)), ValidationError);
  const GbdtModel m = train_gbdt(filter_kind(mixed, LabelKind::kInference), params(1, 1, 0.1, 1));
  CHECK_THROWS_AS(evaluate(m, TraceSet{}), ValidationError);
  CHECK_THROWS_AS(evaluate(m, filter_kind(mixed, LabelKind::kSync)), ValidationError);
  CHECK(percentile({3.0, 1.0, 2.0, 4.0}, 0.5) == 2.0);
  CHECK(percentile({3.0, 1.0, 2.0, 4.0}, 0.9) == 4.0);
}

TEST_CASE("trace generation is reproducible") {
  TraceConfig cfg;
  cfg.samples = 10;
  const TraceSet a = gen_traces(cfg, 7);
  const TraceSet b = gen_traces(cfg, 7);
  CHECK(a.size() == 20);
  CHECK(traces_to_csv(a) == traces_to_csv(b));
  CHECK(traces_to_csv(gen_traces(cfg, 8)) != traces_to_csv(a));
  CHECK(parse_traces_csv(traces_to_csv(a)) == a);
  CHECK(traces_to_csv(a).rfind(std::string(kTraceHeader), 0) == 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].label_kind == (i % 2 == 0 ? LabelKind::kInference : LabelKind::kSync));
    CHECK(a[i].label_seconds >= 0.0);
  }
  cfg.samples = 0;
  CHECK_THROWS_AS(gen_traces(cfg, 7), ValidationError);
}

TEST_CASE("inference labels are the bottleneck node's flops over its rate") {
  // One-box shares give exact effective dims; folded multi-box grid shares round rows up.
  TraceConfig cfg;
  cfg.samples = 300;
  for (const TraceSample& s : filter_kind(gen_traces(cfg, 3), LabelKind::kInference)) {
    const FeatureVector& f = s.features;
    LayerSpec eff;
    eff.kind = static_cast<LayerKind>(static_cast<int>(f.conv_type));
    eff.in_h = static_cast<std::int64_t>(f.in_h);
    eff.in_w = static_cast<std::int64_t>(f.in_w);
    eff.in_c = static_cast<std::int64_t>(f.in_c);
    eff.out_h = static_cast<std::int64_t>(f.out_h);
    eff.out_w = static_cast<std::int64_t>(f.out_w);
    eff.out_c = static_cast<std::int64_t>(f.out_c);
    eff.kernel = static_cast<std::int64_t>(f.kernel);
    const double flops_time = static_cast<double>(layer_flops(eff)) / cfg.rate;
    if (static_cast<Scheme>(static_cast<int>(f.scheme)) == Scheme::kGrid2D) {
      CHECK(s.label_seconds <= flops_time * (1 + 1e-12));
    } else {
      CHECK(s.label_seconds == doctest::Approx(flops_time).epsilon(1e-12));
    }
  }
}

TEST_CASE("oracle estimator is the simulator") {
  const ModelGraph g = builtin_model("resnet18-like", 0.25);
  const TestbedSpec t = make_testbed(4, 1e10, Topology::kRing, 1e9);
  const OracleEstimator oracle;
  for (int first = 0; first + 1 < static_cast<int>(g.size()); first += 3) {
    for (Scheme s : {Scheme::kInH, Scheme::kGrid2D}) {
      const Segment seg{first, first + 1, s};
      const ChainGeometry chain = chain_geometry(g.layers, seg.first, seg.last, s, 4);
      std::optional<TileMap> producer;
      if (first > 0) producer = assign_tiles(g[first - 1], Scheme::kOutC, 4);
      const SegmentLayout layout{&g, seg, Scheme::kOutC, producer ? &*producer : nullptr, &chain};
      CHECK(oracle.estimate_segment(layout, t) == segment_cost(g, seg, Scheme::kOutC, t));
    }
  }
  CHECK(oracle.estimate_final_sync(g, Scheme::kInW, t) == final_sync_time(g, Scheme::kInW, t));
}

TEST_CASE("learned estimator checks its two models") {
  TraceConfig cfg;
  cfg.samples = 200;
  const TraceSet traces = gen_traces(cfg, 2);
  const GbdtModel inf = train_gbdt(filter_kind(traces, LabelKind::kInference), params(5, 3, 0.3, 2));
  const GbdtModel syn = train_gbdt(filter_kind(traces, LabelKind::kSync), params(5, 3, 0.3, 2));
  CHECK_THROWS_AS(LearnedEstimator(syn, inf), ValidationError);
  const LearnedEstimator est(inf, syn);

  const ModelGraph g = builtin_model("mobilenet-like", 0.25);
  const TestbedSpec t = make_testbed(3, 1e10, Topology::kPs, 5e8);
  const Segment seg{2, 3, Scheme::kInH};
  const ChainGeometry chain = chain_geometry(g.layers, 2, 3, Scheme::kInH, 3);
  const TileMap producer = assign_tiles(g[1], Scheme::kInW, 3);
  const SegmentLayout layout{&g, seg, Scheme::kInW, &producer, &chain};
  const SegmentCost c = est.estimate_segment(layout, t);
  CHECK(c.compute_s >= 0.0);
  CHECK(c.entry_sync_s >= 0.0);
  CHECK(est.estimate_segment(layout, t) == c);
  CHECK(c.entry_sync_s == est.estimate_sync(g[1], Scheme::kInW, std::span(&g.layers[2], 2),
                                            Scheme::kInH, t));
}
