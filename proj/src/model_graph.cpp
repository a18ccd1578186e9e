#include "edgeplan/model_graph.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

#include "edgeplan/errors.hpp"
#include "json.hpp"

namespace edgeplan {

namespace {

using Json = nlohmann::ordered_json;

constexpr std::array<std::string_view, 5> kKindNames = {
    "standard-conv", "depthwise-conv", "pointwise-conv", "pool", "matmul"};

constexpr std::array<std::string_view, 10> kLayerFields = {
    "kind", "in_h", "in_w", "in_c", "out_h", "out_w", "out_c", "kernel", "stride", "padding"};

std::string layer_prefix(const LayerSpec& layer) {
  return "layer " + std::to_string(layer.id) + ": ";
}

std::int64_t read_int(const Json& obj, std::string_view key, const std::string& where) {
  const auto it = obj.find(std::string(key));
  if (it == obj.end()) throw ParseError(where + "missing field '" + std::string(key) + "'");
  if (!it->is_number_integer()) {
    throw ParseError(where + "field '" + std::string(key) + "' must be an integer");
  }
  return it->get<std::int64_t>();
}

}  // namespace

std::string_view to_string(LayerKind kind) { return kKindNames.at(static_cast<int>(kind)); }

LayerKind layer_kind_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return static_cast<LayerKind>(i);
  }
  throw ParseError("unknown layer kind '" + std::string(name) + "'");
}

std::int64_t conv_out_extent(std::int64_t in, std::int64_t kernel, std::int64_t stride,
                             std::int64_t padding) {
  const std::int64_t span = in + 2 * padding - kernel;
  if (span < 0) return 0;
  return span / stride + 1;
}

void validate_layer(const LayerSpec& l) {
  const std::string at = layer_prefix(l);
  if (l.in_h < 1 || l.in_w < 1 || l.in_c < 1 || l.out_h < 1 || l.out_w < 1 || l.out_c < 1) {
    throw ValidationError(at + "all dimensions must be >= 1");
  }
  if (l.kernel < 1) throw ValidationError(at + "kernel must be >= 1");
  if (l.stride < 1) throw ValidationError(at + "stride must be >= 1");
  if (l.padding < 0) throw ValidationError(at + "padding must be >= 0");
  if (l.out_h != conv_out_extent(l.in_h, l.kernel, l.stride, l.padding)) {
    throw ValidationError(at + "out_h inconsistent with in_h, kernel, stride, padding");
  }
  if (l.out_w != conv_out_extent(l.in_w, l.kernel, l.stride, l.padding)) {
    throw ValidationError(at + "out_w inconsistent with in_w, kernel, stride, padding");
  }
  if (preserves_channels(l.kind) && l.out_c != l.in_c) {
    throw ValidationError(at + std::string(to_string(l.kind)) + " requires out_c == in_c");
  }
  if ((l.kind == LayerKind::kPointwiseConv || l.kind == LayerKind::kMatmul) &&
      (l.kernel != 1 || l.padding != 0)) {
    throw ValidationError(at + std::string(to_string(l.kind)) +
                          " requires kernel == 1 and padding == 0");
  }
}

void validate_graph(const ModelGraph& graph) {
  if (graph.layers.empty()) throw ValidationError("model has no layers");
  if (graph.element_size < 1) throw ValidationError("element_size must be >= 1");
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    const LayerSpec& l = graph.layers[i];
    if (l.id != static_cast<int>(i)) {
      throw ValidationError(layer_prefix(l) + "ids must follow topological order");
    }
    validate_layer(l);
    if (i + 1 < graph.layers.size()) {
      const LayerSpec& next = graph.layers[i + 1];
      if (l.out_h != next.in_h || l.out_w != next.in_w || l.out_c != next.in_c) {
        throw ValidationError(layer_prefix(next) +
                              "input dims do not match the previous layer's output "
                              "(chain-consistency)");
      }
    }
  }
}

ModelGraph parse_model(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model document: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("model document must be an object");
  for (const auto& [key, _] : doc.items()) {
    if (key != "element_size" && key != "layers") {
      throw ParseError("model document: unknown field '" + key + "'");
    }
  }
  ModelGraph graph;
  if (doc.contains("element_size")) graph.element_size = read_int(doc, "element_size", "");
  const auto layers = doc.find("layers");
  if (layers == doc.end() || !layers->is_array()) {
    throw ParseError("model document: 'layers' must be an array");
  }
  int id = 0;
  for (const Json& item : *layers) {
    const std::string where = "layer " + std::to_string(id) + ": ";
    if (!item.is_object()) throw ParseError(where + "must be an object");
    for (const auto& [key, _] : item.items()) {
      if (std::find(kLayerFields.begin(), kLayerFields.end(), key) == kLayerFields.end()) {
        throw ParseError(where + "unknown field '" + key + "'");
      }
    }
    const auto kind = item.find("kind");
    if (kind == item.end() || !kind->is_string()) throw ParseError(where + "'kind' must be a string");
    LayerSpec l;
    l.id = id++;
    l.kind = layer_kind_from_string(kind->get<std::string>());
    l.in_h = read_int(item, "in_h", where);
    l.in_w = read_int(item, "in_w", where);
    l.in_c = read_int(item, "in_c", where);
    l.out_h = read_int(item, "out_h", where);
    l.out_w = read_int(item, "out_w", where);
    l.out_c = read_int(item, "out_c", where);
    l.kernel = read_int(item, "kernel", where);
    l.stride = read_int(item, "stride", where);
    l.padding = read_int(item, "padding", where);
    graph.layers.push_back(l);
  }
  validate_graph(graph);
  return graph;
}

std::string serialize_model(const ModelGraph& graph) {
  Json doc;
  doc["element_size"] = graph.element_size;
  Json layers = Json::array();
  for (const LayerSpec& l : graph.layers) {
    Json item;
    item["kind"] = std::string(to_string(l.kind));
    item["in_h"] = l.in_h;
    item["in_w"] = l.in_w;
    item["in_c"] = l.in_c;
    item["out_h"] = l.out_h;
    item["out_w"] = l.out_w;
    item["out_c"] = l.out_c;
    item["kernel"] = l.kernel;
    item["stride"] = l.stride;
    item["padding"] = l.padding;
    layers.push_back(std::move(item));
  }
  doc["layers"] = std::move(layers);
  return doc.dump(2) + "\n";
}

ModelGraph load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open model file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str());
}

std::int64_t flops_per_output_element(const LayerSpec& l) {
  const std::int64_t k2 = l.kernel * l.kernel;
  switch (l.kind) {
    case LayerKind::kStandardConv: return 2 * l.in_c * k2;
    case LayerKind::kDepthwiseConv: return 2 * k2;
    case LayerKind::kPointwiseConv:
    case LayerKind::kMatmul: return 2 * l.in_c;
    case LayerKind::kPool: return k2;
  }
  return 0;
}

std::int64_t layer_flops(const LayerSpec& layer) {
  return flops_per_output_element(layer) * layer.out_elements();
}

}  // namespace edgeplan
