// Reference shapes of the built-in benchmark analogs.
//
// All convolutional families take a 224x224x3 image. Residual adds and the
// 1x1 projection shortcuts of the ResNets are folded away, so each family is a
// plain chain:
//   mobilenet-like   conv 3x3/2, 13 depthwise-separable blocks (dw + pw), 7x7 avg pool = 28
//   resnet18-like    conv 7x7/2, max pool 3x3/2, 8 basic blocks of two 3x3 convs     = 18
//   resnet101-like   conv 7x7/2, max pool 3x3/2, 33 bottlenecks (1x1, 3x3, 1x1)      = 101
//   bert-like        12 token-wise matmuls over 512 tokens laid out as a 16x32 grid,
//                    alternating 768->3072 and 3072->768 hidden sizes
#include <cmath>

#include "edgeplan/errors.hpp"
#include "edgeplan/model_graph.hpp"

namespace edgeplan {

namespace {

constexpr std::int64_t kImageSize = 224;
constexpr std::int64_t kImageChannels = 3;
constexpr std::int64_t kBertRows = 16;
constexpr std::int64_t kBertCols = 32;
constexpr std::int64_t kBertHidden = 768;
constexpr std::int64_t kBertFfn = 3072;

class ChainBuilder {
 public:
  ChainBuilder(std::int64_t h, std::int64_t w, std::int64_t c, double scale)
      : h_(h), w_(w), c_(c), scale_(scale) {}

  void conv(std::int64_t ref_out_c, std::int64_t k, std::int64_t s, std::int64_t p) {
    push(LayerKind::kStandardConv, scaled(ref_out_c), k, s, p);
  }
  void depthwise(std::int64_t k, std::int64_t s, std::int64_t p) {
    push(LayerKind::kDepthwiseConv, c_, k, s, p);
  }
  void pointwise(std::int64_t ref_out_c) { push(LayerKind::kPointwiseConv, scaled(ref_out_c), 1, 1, 0); }
  void matmul(std::int64_t ref_out_c) { push(LayerKind::kMatmul, scaled(ref_out_c), 1, 1, 0); }
  void pool(std::int64_t k, std::int64_t s, std::int64_t p) { push(LayerKind::kPool, c_, k, s, p); }

  ModelGraph finish() {
    validate_graph(graph_);
    return std::move(graph_);
  }

 private:
  std::int64_t scaled(std::int64_t ref) const {
    const auto c = static_cast<std::int64_t>(std::floor(static_cast<double>(ref) * scale_));
    if (c < 1) {
      throw ValidationError("scale " + std::to_string(scale_) + " produces a zero-channel layer");
    }
    return c;
  }

  void push(LayerKind kind, std::int64_t out_c, std::int64_t k, std::int64_t s, std::int64_t p) {
    LayerSpec l;
    l.id = static_cast<int>(graph_.layers.size());
    l.kind = kind;
    l.in_h = h_;
    l.in_w = w_;
    l.in_c = c_;
    l.kernel = k;
    l.stride = s;
    l.padding = p;
    l.out_h = conv_out_extent(h_, k, s, p);
    l.out_w = conv_out_extent(w_, k, s, p);
    l.out_c = out_c;
    graph_.layers.push_back(l);
    h_ = l.out_h;
    w_ = l.out_w;
    c_ = l.out_c;
  }

  std::int64_t h_, w_, c_;
  double scale_;
  ModelGraph graph_;
};

ModelGraph mobilenet(double scale) {
  ChainBuilder b(kImageSize, kImageSize, kImageChannels, scale);
  b.conv(32, 3, 2, 1);
  struct Block {
    std::int64_t stride, out_c;
  };
  constexpr Block kBlocks[] = {{1, 64},  {2, 128}, {1, 128}, {2, 256}, {1, 256},
                               {2, 512}, {1, 512}, {1, 512}, {1, 512}, {1, 512},
                               {1, 512}, {2, 1024}, {1, 1024}};
  for (const Block& blk : kBlocks) {
    b.depthwise(3, blk.stride, 1);
    b.pointwise(blk.out_c);
  }
  b.pool(7, 7, 0);
  return b.finish();
}

ModelGraph resnet18(double scale) {
  ChainBuilder b(kImageSize, kImageSize, kImageChannels, scale);
  b.conv(64, 7, 2, 3);
  b.pool(3, 2, 1);
  constexpr std::int64_t kWidths[] = {64, 128, 256, 512};
  for (int stage = 0; stage < 4; ++stage) {
    for (int conv = 0; conv < 4; ++conv) {
      const std::int64_t stride = (stage > 0 && conv == 0) ? 2 : 1;
      b.conv(kWidths[stage], 3, stride, 1);
    }
  }
  return b.finish();
}

ModelGraph resnet101(double scale) {
  ChainBuilder b(kImageSize, kImageSize, kImageChannels, scale);
  b.conv(64, 7, 2, 3);
  b.pool(3, 2, 1);
  constexpr std::int64_t kWidths[] = {64, 128, 256, 512};
  constexpr int kBlocks[] = {3, 4, 23, 3};
  for (int stage = 0; stage < 4; ++stage) {
    for (int blk = 0; blk < kBlocks[stage]; ++blk) {
      const std::int64_t stride = (stage > 0 && blk == 0) ? 2 : 1;
      b.pointwise(kWidths[stage]);
      b.conv(kWidths[stage], 3, stride, 1);
      b.pointwise(4 * kWidths[stage]);
    }
  }
  return b.finish();
}

ModelGraph bert(double scale) {
  ChainBuilder b(kBertRows, kBertCols, static_cast<std::int64_t>(std::floor(kBertHidden * scale)),
                 scale);
  for (int i = 0; i < 6; ++i) {
    b.matmul(kBertFfn);
    b.matmul(kBertHidden);
  }
  return b.finish();
}

}  // namespace

BuiltinModel builtin_model_from_string(std::string_view name) {
  if (name == "mobilenet-like") return BuiltinModel::kMobilenet;
  if (name == "resnet18-like") return BuiltinModel::kResnet18;
  if (name == "resnet101-like") return BuiltinModel::kResnet101;
  if (name == "bert-like") return BuiltinModel::kBert;
  throw ValidationError("unknown builtin model '" + std::string(name) + "'");
}

std::string_view to_string(BuiltinModel model) {
  switch (model) {
    case BuiltinModel::kMobilenet: return "mobilenet-like";
    case BuiltinModel::kResnet18: return "resnet18-like";
    case BuiltinModel::kResnet101: return "resnet101-like";
    case BuiltinModel::kBert: return "bert-like";
  }
  return "";
}

const std::vector<BuiltinModel>& all_builtin_models() {
  static const std::vector<BuiltinModel> kAll = {BuiltinModel::kMobilenet, BuiltinModel::kResnet18,
                                                 BuiltinModel::kResnet101, BuiltinModel::kBert};
  return kAll;
}

ModelGraph builtin_model(BuiltinModel model, double scale) {
  if (!(scale > 0.0 && scale <= 1.0)) {
    throw ValidationError("scale must lie in (0, 1]");
  }
  switch (model) {
    case BuiltinModel::kMobilenet: return mobilenet(scale);
    case BuiltinModel::kResnet18: return resnet18(scale);
    case BuiltinModel::kResnet101: return resnet101(scale);
    case BuiltinModel::kBert: {
      if (std::floor(kBertHidden * scale) < 1) {
        throw ValidationError("scale produces a zero-channel layer");
      }
      return bert(scale);
    }
  }
  throw ValidationError("unknown builtin model");
}

ModelGraph builtin_model(std::string_view name, double scale) {
  return builtin_model(builtin_model_from_string(name), scale);
}

}  // namespace edgeplan
