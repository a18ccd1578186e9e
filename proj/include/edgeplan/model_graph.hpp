#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace edgeplan {

enum class LayerKind : int {
  kStandardConv = 0,
  kDepthwiseConv = 1,
  kPointwiseConv = 2,
  kPool = 3,
  kMatmul = 4,
};

std::string_view to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view name);

/// Shape record of one layer. Spatial dims are rows x cols, channels last.
struct LayerSpec {
  int id = 0;
  LayerKind kind = LayerKind::kStandardConv;
  std::int64_t in_h = 1, in_w = 1, in_c = 1;
  std::int64_t out_h = 1, out_w = 1, out_c = 1;
  std::int64_t kernel = 1;
  std::int64_t stride = 1;
  std::int64_t padding = 0;

  std::int64_t out_elements() const { return out_h * out_w * out_c; }
  bool operator==(const LayerSpec&) const = default;
};

// True for kinds whose output channel c reads only input channel c.
inline bool preserves_channels(LayerKind kind) {
  return kind == LayerKind::kDepthwiseConv || kind == LayerKind::kPool;
}

/// A chain of layers L_0 .. L_n.
struct ModelGraph {
  std::vector<LayerSpec> layers;
  std::int64_t element_size = 4;

  std::size_t size() const { return layers.size(); }
  const LayerSpec& operator[](std::size_t i) const { return layers[i]; }
  bool operator==(const ModelGraph&) const = default;
};

// Output extent along one spatial axis for a conv/pool window.
std::int64_t conv_out_extent(std::int64_t in, std::int64_t kernel, std::int64_t stride,
                             std::int64_t padding);

// Throws ValidationError naming the layer id and the first violated invariant.
void validate_layer(const LayerSpec& layer);
void validate_graph(const ModelGraph& graph);

ModelGraph parse_model(std::string_view text);
std::string serialize_model(const ModelGraph& graph);
ModelGraph load_model_file(const std::string& path);

/// Flops needed to produce one output element of `layer`.
std::int64_t flops_per_output_element(const LayerSpec& layer);
/// Total flops of the layer; a MAC counts as two flops, pooling one op per window element.
std::int64_t layer_flops(const LayerSpec& layer);

enum class BuiltinModel { kMobilenet, kResnet18, kResnet101, kBert };

BuiltinModel builtin_model_from_string(std::string_view name);
std::string_view to_string(BuiltinModel model);
const std::vector<BuiltinModel>& all_builtin_models();

/// Desk-scale analog of a benchmark family. Channel dims are multiplied by `scale`
/// (floored); the 3-channel image input is left as is.
ModelGraph builtin_model(BuiltinModel model, double scale = 1.0);
ModelGraph builtin_model(std::string_view name, double scale = 1.0);

}  // namespace edgeplan
