#include "edgeplan/traces.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "edgeplan/errors.hpp"
#include "edgeplan/simulator.hpp"

namespace edgeplan {

namespace {

void check_config(const TraceConfig& c) {
  if (c.samples < 1) throw ValidationError("trace sample count must be >= 1");
  if (c.models.empty() || c.width_scales.empty() || c.bandwidths.empty()) {
    throw ValidationError("trace sampling choices must be non-empty");
  }
  for (double s : c.width_scales) {
    if (!(s > 0.0)) throw ValidationError("trace width scales must be > 0");
  }
  if (c.max_chain < 1) throw ValidationError("trace max chain must be >= 1");
  if (c.min_nodes < 2 || c.max_nodes < c.min_nodes) throw ValidationError("trace node range is empty");
  if (!(c.rate > 0.0)) throw ValidationError("trace rate must be > 0");
}

ModelGraph random_source(Rng& rng, const TraceConfig& c) {
  const BuiltinModel model = pick<BuiltinModel>(rng, c.models);
  return builtin_model(model, pick<double>(rng, c.width_scales));
}

std::vector<Scheme> tileable_schemes(std::span<const LayerSpec> layers, int n) {
  std::vector<Scheme> out;
  for (Scheme s : kAllSchemes) {
    if (!is_spatial(s) && layers.size() > 1) continue;
    if (std::all_of(layers.begin(), layers.end(),
                    [&](const LayerSpec& l) { return can_tile(l, s, n); })) {
      out.push_back(s);
    }
  }
  return out;
}

constexpr Topology kTopologies[] = {Topology::kRing, Topology::kPs, Topology::kMesh};

TestbedSpec trace_testbed(Rng& rng, const TraceConfig& c) {
  const int n = static_cast<int>(uniform_int(rng, c.min_nodes, c.max_nodes));
  const Topology topology = pick<Topology>(rng, kTopologies);
  return make_testbed(n, c.rate, topology, pick<double>(rng, c.bandwidths), 0.0);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(std::string_view field, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw ParseError("trace file line " + std::to_string(line) + ": bad number '" +
                     std::string(field) + "'");
  }
  return v;
}

}  // namespace

TraceSample inference_sample(const TraceConfig& c, std::uint64_t sample_seed) {
  Rng rng(sample_seed);
  const TestbedSpec tb = trace_testbed(rng, c);
  for (;;) {
    const ModelGraph source = random_source(rng, c);
    LayerSpec layer = source.layers[static_cast<std::size_t>(
        uniform_int(rng, 0, static_cast<std::int64_t>(source.size()) - 1))];
    layer.id = 0;
    const std::vector<Scheme> schemes = tileable_schemes(std::span(&layer, 1), tb.node_count);
    if (schemes.empty()) continue;
    const Scheme s = pick<Scheme>(rng, schemes);
    ModelGraph g;
    g.element_size = source.element_size;
    g.layers = {layer};
    const ChainGeometry chain = chain_geometry(g.layers, 0, 0, s, tb.node_count);
    const WorkloadTable work = chain_workloads(g, chain);
    int bottleneck = 0;
    for (int u = 1; u < tb.node_count; ++u) {
      if (work(0, u) > work(0, bottleneck)) bottleneck = u;
    }
    TraceSample sample;
    sample.label_kind = LabelKind::kInference;
    sample.features = extract_features(effective_layer(layer, chain.computed[0][bottleneck]), tb, s);
    sample.label_seconds = segment_cost(g, Segment{0, 0, s}, Scheme::kInH, tb).compute_s;
    return sample;
  }
}

TraceSample sync_sample(const TraceConfig& c, std::uint64_t sample_seed) {
  Rng rng(sample_seed);
  const TestbedSpec tb = trace_testbed(rng, c);
  for (;;) {
    const ModelGraph source = random_source(rng, c);
    const auto size = static_cast<std::int64_t>(source.size());
    if (size < 2) continue;
    const std::int64_t p = uniform_int(rng, 0, size - 2);
    const int m = static_cast<int>(uniform_int(rng, 1, std::min<std::int64_t>(c.max_chain, size - 1 - p)));
    ModelGraph g;
    g.element_size = source.element_size;
    for (int k = 0; k <= m; ++k) {
      g.layers.push_back(source.layers[static_cast<std::size_t>(p + k)]);
      g.layers.back().id = k;
    }
    const std::vector<Scheme> producer_schemes =
        tileable_schemes(std::span(g.layers.data(), 1), tb.node_count);
    const std::span<const LayerSpec> chain(g.layers.data() + 1, m);
    const std::vector<Scheme> chain_schemes = tileable_schemes(chain, tb.node_count);
    if (producer_schemes.empty() || chain_schemes.empty()) continue;
    const Scheme producer = pick<Scheme>(rng, producer_schemes);
    const Scheme consumer = pick<Scheme>(rng, chain_schemes);
    TraceSample sample;
    sample.label_kind = LabelKind::kSync;
    sample.features = extract_sync_features(g.layers[0], producer, chain, consumer, tb);
    sample.label_seconds = segment_cost(g, Segment{1, m, consumer}, producer, tb).entry_sync_s;
    return sample;
  }
}

TraceSet gen_traces(const TraceConfig& config, std::uint64_t seed) {
  check_config(config);
  TraceSet out;
  out.reserve(2 * static_cast<std::size_t>(config.samples));
  for (int i = 0; i < config.samples; ++i) {
    const auto idx = static_cast<std::uint64_t>(i);
    out.push_back(inference_sample(config, mix_seed(seed, 2 * idx)));
    out.push_back(sync_sample(config, mix_seed(seed, 2 * idx + 1)));
  }
  return out;
}

std::string traces_to_csv(const TraceSet& traces) {
  std::string out(kTraceHeader);
  out += '\n';
  for (const TraceSample& s : traces) {
    const FeatureArray a = s.features.to_array();
    for (int f = 0; f < kFeatureCount; ++f) {
      out += format_double(a[f]);
      out += ',';
    }
    out += to_string(s.label_kind);
    out += ',';
    out += format_double(s.label_seconds);
    out += '\n';
  }
  return out;
}

TraceSet parse_traces_csv(std::string_view text) {
  TraceSet out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no == 1) {
      if (line != kTraceHeader) throw ParseError("trace file: unexpected header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (fields.size() != kFeatureCount + 2) {
      throw ParseError("trace file line " + std::to_string(line_no) + ": expected " +
                       std::to_string(kFeatureCount + 2) + " columns");
    }
    FeatureArray a;
    for (int f = 0; f < kFeatureCount; ++f) a[f] = parse_double(fields[f], line_no);
    TraceSample s;
    s.features = FeatureVector::from_array(a);
    s.label_kind = label_kind_from_string(fields[kFeatureCount]);
    s.label_seconds = parse_double(fields[kFeatureCount + 1], line_no);
    if (!(s.label_seconds >= 0.0) || !std::isfinite(s.label_seconds)) {
      throw ParseError("trace file line " + std::to_string(line_no) + ": label must be finite and >= 0");
    }
    out.push_back(s);
  }
  if (line_no == 0) throw ParseError("trace file: missing header");
  return out;
}

TraceSet load_traces_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open trace file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_traces_csv(buf.str());
}

void save_traces_file(const TraceSet& traces, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write trace file '" + path + "'");
  out << traces_to_csv(traces);
}

TraceSet filter_kind(const TraceSet& traces, LabelKind kind) {
  TraceSet out;
  std::copy_if(traces.begin(), traces.end(), std::back_inserter(out),
               [&](const TraceSample& s) { return s.label_kind == kind; });
  return out;
}

GbdtModel train_gbdt(const TraceSet& traces, const GbdtParams& params,
                     std::vector<double>* loss_history) {
  if (traces.empty()) throw ValidationError("cannot train on an empty trace set");
  const LabelKind kind = traces.front().label_kind;
  FeatureMatrix x(static_cast<Eigen::Index>(traces.size()), kFeatureCount);
  Eigen::VectorXd y(static_cast<Eigen::Index>(traces.size()));
  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (traces[i].label_kind != kind) throw ValidationError("trace set mixes label kinds");
    x.row(static_cast<Eigen::Index>(i)) = traces[i].features.to_array().transpose();
    y[static_cast<Eigen::Index>(i)] = traces[i].label_seconds;
  }
  return fit_gbdt(x, y, kind, params, loss_history);
}

EvalReport evaluate(const GbdtModel& model, const TraceSet& holdout) {
  if (holdout.empty()) throw ValidationError("holdout set is empty");
  std::vector<FeatureVector> features;
  std::vector<double> labels;
  for (const TraceSample& s : holdout) {
    if (s.label_kind != model.label_kind) {
      throw ValidationError("holdout label kind does not match the model");
    }
    features.push_back(s.features);
    labels.push_back(s.label_seconds);
  }
  return evaluate(model, features, labels);
}

}  // namespace edgeplan
