#include "edgeplan/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "edgeplan/errors.hpp"
#include "json.hpp"

namespace edgeplan {

namespace {

using Json = nlohmann::ordered_json;

constexpr double kLogOffset = 1e-9;

// Scale the log-ratio target is taken against: layer flops for inference samples, producer
// tensor bits over link bandwidth for sync samples.
double reference_scale(const FeatureArray& x, LabelKind kind) {
  const FeatureVector f = FeatureVector::from_array(x);
  if (kind == LabelKind::kSync) {
    return std::max(f.in_h * f.in_w * f.in_c * 8.0 / std::max(f.bandwidth_bps, 1.0), 1e-300);
  }
  LayerSpec l;
  l.kind = static_cast<LayerKind>(static_cast<int>(f.conv_type));
  l.in_c = static_cast<std::int64_t>(f.in_c);
  l.out_h = static_cast<std::int64_t>(f.out_h);
  l.out_w = static_cast<std::int64_t>(f.out_w);
  l.out_c = static_cast<std::int64_t>(f.out_c);
  l.kernel = static_cast<std::int64_t>(f.kernel);
  return std::max(static_cast<double>(layer_flops(l)), 1.0);
}

double to_target(double seconds, TargetTransform t, const FeatureArray& x, LabelKind kind) {
  switch (t) {
    case TargetTransform::kIdentity:
      return seconds;
    case TargetTransform::kLog:
      return std::log(seconds + kLogOffset);
    case TargetTransform::kLogRatio:
      return std::log(seconds + kLogOffset) - std::log(reference_scale(x, kind));
  }
  return seconds;
}

double from_target(double raw, TargetTransform t, const FeatureArray& x, LabelKind kind) {
  switch (t) {
    case TargetTransform::kIdentity:
      return raw;
    case TargetTransform::kLog:
      return std::exp(raw) - kLogOffset;
    case TargetTransform::kLogRatio:
      return std::exp(raw + std::log(reference_scale(x, kind))) - kLogOffset;
  }
  return raw;
}

struct NodeStats {
  std::int64_t count = 0;
  double sum = 0.0;
};

// Best split found so far for one open node during a level scan.
struct SplitScan {
  NodeStats total;
  NodeStats left;
  double last_value = 0.0;
  bool seen = false;
  double best_gain = 0.0;
  int best_feature = -1;
  double best_threshold = 0.0;
};

double split_gain(const NodeStats& left, const NodeStats& total) {
  const double right_sum = total.sum - left.sum;
  const auto right_count = static_cast<double>(total.count - left.count);
  const auto left_count = static_cast<double>(left.count);
  return left.sum * left.sum / left_count + right_sum * right_sum / right_count -
         total.sum * total.sum / static_cast<double>(total.count);
}

RegressionTree grow_tree(const FeatureMatrix& x, const Eigen::VectorXd& residual,
                         const std::vector<std::vector<int>>& sorted, const GbdtParams& params,
                         std::vector<int>& leaf_of) {
  const auto n = static_cast<int>(x.rows());
  RegressionTree tree;
  tree.nodes.emplace_back();
  std::vector<int> node_of(n, 0);
  std::vector<int> open = {0};

  for (int depth = 0; depth < params.max_depth && !open.empty(); ++depth) {
    std::vector<int> slot(tree.nodes.size(), -1);
    for (std::size_t i = 0; i < open.size(); ++i) slot[open[i]] = static_cast<int>(i);
    std::vector<SplitScan> scans(open.size());
    for (int i = 0; i < n; ++i) {
      const int s = slot[node_of[i]];
      if (s < 0) continue;
      scans[s].total.count += 1;
      scans[s].total.sum += residual[i];
    }
    for (int f = 0; f < kFeatureCount; ++f) {
      for (SplitScan& sc : scans) {
        sc.left = {};
        sc.seen = false;
      }
      for (int i : sorted[f]) {
        const int s = slot[node_of[i]];
        if (s < 0) continue;
        SplitScan& sc = scans[s];
        const double v = x(i, f);
        if (sc.seen && v != sc.last_value && sc.left.count >= params.min_samples_leaf &&
            sc.total.count - sc.left.count >= params.min_samples_leaf) {
          const double gain = split_gain(sc.left, sc.total);
          if (gain > sc.best_gain) {
            double mid = sc.last_value + (v - sc.last_value) / 2.0;
            if (!(mid < v)) mid = sc.last_value;
            sc.best_gain = gain;
            sc.best_feature = f;
            sc.best_threshold = mid;
          }
        }
        sc.left.count += 1;
        sc.left.sum += residual[i];
        sc.last_value = v;
        sc.seen = true;
      }
    }

    std::vector<int> next_open;
    for (std::size_t s = 0; s < open.size(); ++s) {
      const int id = open[s];
      const SplitScan& sc = scans[s];
      tree.nodes[id].value = sc.total.count ? sc.total.sum / static_cast<double>(sc.total.count) : 0.0;
      if (sc.best_feature < 0) continue;
      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      tree.nodes[id].feature = sc.best_feature;
      tree.nodes[id].threshold = sc.best_threshold;
      tree.nodes[id].left = left;
      tree.nodes[id].right = left + 1;
      next_open.push_back(left);
      next_open.push_back(left + 1);
    }
    for (int i = 0; i < n; ++i) {
      const TreeNode& node = tree.nodes[node_of[i]];
      if (node.is_leaf() || slot[node_of[i]] < 0) continue;
      node_of[i] = x(i, node.feature) <= node.threshold ? node.left : node.right;
    }
    open = std::move(next_open);
  }

  if (!open.empty()) {
    std::vector<NodeStats> stats(tree.nodes.size());
    for (int i = 0; i < n; ++i) {
      stats[node_of[i]].count += 1;
      stats[node_of[i]].sum += residual[i];
    }
    for (int id : open) {
      tree.nodes[id].value =
          stats[id].count ? stats[id].sum / static_cast<double>(stats[id].count) : 0.0;
    }
  }
  leaf_of = std::move(node_of);
  return tree;
}

double read_double(const Json& doc, const char* key) {
  const auto it = doc.find(key);
  if (it == doc.end() || !it->is_number()) {
    throw ParseError(std::string("model file: missing numeric field '") + key + "'");
  }
  return it->get<double>();
}

int read_int(const Json& doc, const char* key) {
  const auto it = doc.find(key);
  if (it == doc.end() || !it->is_number_integer()) {
    throw ParseError(std::string("model file: missing integer field '") + key + "'");
  }
  return it->get<int>();
}

}  // namespace

std::string_view to_string(TargetTransform target) {
  switch (target) {
    case TargetTransform::kIdentity:
      return "identity";
    case TargetTransform::kLog:
      return "log";
    case TargetTransform::kLogRatio:
      return "log-ratio";
  }
  return "identity";
}

TargetTransform target_from_string(std::string_view name) {
  if (name == "identity") return TargetTransform::kIdentity;
  if (name == "log") return TargetTransform::kLog;
  if (name == "log-ratio") return TargetTransform::kLogRatio;
  throw ParseError("unknown target transform '" + std::string(name) + "'");
}

double RegressionTree::predict(const FeatureArray& x) const {
  int id = 0;
  while (!nodes[id].is_leaf()) {
    id = x[nodes[id].feature] <= nodes[id].threshold ? nodes[id].left : nodes[id].right;
  }
  return nodes[id].value;
}

GbdtModel fit_gbdt(const FeatureMatrix& x, const Eigen::VectorXd& y, LabelKind kind,
                   const GbdtParams& params, std::vector<double>* loss_history) {
  const auto n = static_cast<int>(x.rows());
  if (n == 0) throw ValidationError("cannot train on an empty sample set");
  if (y.size() != n) throw ValidationError("feature and label counts differ");
  if (params.trees < 0) throw ValidationError("tree count must be >= 0");
  if (params.max_depth < 1) throw ValidationError("max depth must be >= 1");
  if (params.min_samples_leaf < 1) throw ValidationError("min samples per leaf must be >= 1");
  if (!(params.learning_rate > 0.0 && params.learning_rate <= 1.0)) {
    throw ValidationError("learning rate must lie in (0, 1]");
  }
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(y[i]) || y[i] < 0.0) throw ValidationError("labels must be finite and >= 0");
  }

  GbdtModel model;
  model.label_kind = kind;
  model.target = params.target;
  model.learning_rate = params.learning_rate;
  model.max_depth = params.max_depth;

  Eigen::VectorXd target(n);
  for (int i = 0; i < n; ++i) {
    target[i] = to_target(y[i], params.target, x.row(i).transpose(), kind);
  }
  model.base_prediction = target.mean();

  std::vector<std::vector<int>> sorted(kFeatureCount, std::vector<int>(n));
  for (int f = 0; f < kFeatureCount; ++f) {
    std::iota(sorted[f].begin(), sorted[f].end(), 0);
    std::stable_sort(sorted[f].begin(), sorted[f].end(),
                     [&](int a, int b) { return x(a, f) < x(b, f); });
  }

  Eigen::VectorXd fitted = Eigen::VectorXd::Constant(n, model.base_prediction);
  std::vector<int> leaf_of;
  for (int t = 0; t < params.trees; ++t) {
    const Eigen::VectorXd residual = target - fitted;
    RegressionTree tree = grow_tree(x, residual, sorted, params, leaf_of);
    for (int i = 0; i < n; ++i) fitted[i] += params.learning_rate * tree.nodes[leaf_of[i]].value;
    model.trees.push_back(std::move(tree));
    if (loss_history) loss_history->push_back((target - fitted).squaredNorm() / n);
  }
  return model;
}

double predict_raw(const GbdtModel& model, const FeatureArray& x) {
  double sum = 0.0;
  for (const RegressionTree& tree : model.trees) sum += tree.predict(x);
  return model.base_prediction + model.learning_rate * sum;
}

double predict(const GbdtModel& model, const FeatureVector& features) {
  if (model.schema_version != kFeatureSchemaVersion) {
    throw ValidationError("model schema version " + std::to_string(model.schema_version) +
                          " does not match feature schema " +
                          std::to_string(kFeatureSchemaVersion));
  }
  const FeatureArray x = features.to_array();
  return std::max(0.0, from_target(predict_raw(model, x), model.target, x, model.label_kind));
}

std::string serialize_gbdt(const GbdtModel& model) {
  Json doc;
  doc["schema_version"] = model.schema_version;
  doc["label_kind"] = std::string(to_string(model.label_kind));
  doc["target"] = std::string(to_string(model.target));
  doc["features"] = std::vector<std::string>(kFeatureNames.begin(), kFeatureNames.end());
  doc["base_prediction"] = model.base_prediction;
  doc["learning_rate"] = model.learning_rate;
  doc["max_depth"] = model.max_depth;
  auto trees = Json::array();
  for (const RegressionTree& tree : model.trees) {
    auto nodes = Json::array();
    for (const TreeNode& node : tree.nodes) {
      Json item;
      item["feature"] = node.feature;
      item["threshold"] = node.threshold;
      item["left"] = node.left;
      item["right"] = node.right;
      item["value"] = node.value;
      nodes.push_back(std::move(item));
    }
    trees.push_back(std::move(nodes));
  }
  doc["trees"] = std::move(trees);
  return doc.dump() + "\n";
}

GbdtModel parse_gbdt(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model file: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("model file must hold an object");
  GbdtModel model;
  model.schema_version = read_int(doc, "schema_version");
  if (model.schema_version != kFeatureSchemaVersion) {
    throw ParseError("model file: unsupported schema_version " +
                     std::to_string(model.schema_version));
  }
  if (!doc.contains("label_kind") || !doc["label_kind"].is_string()) {
    throw ParseError("model file: missing 'label_kind'");
  }
  model.label_kind = label_kind_from_string(doc["label_kind"].get<std::string>());
  if (doc.contains("target")) model.target = target_from_string(doc["target"].get<std::string>());
  model.base_prediction = read_double(doc, "base_prediction");
  model.learning_rate = read_double(doc, "learning_rate");
  model.max_depth = read_int(doc, "max_depth");
  if (!doc.contains("trees") || !doc["trees"].is_array()) throw ParseError("model file: missing 'trees'");
  for (const Json& nodes : doc["trees"]) {
    if (!nodes.is_array() || nodes.empty()) throw ParseError("model file: empty tree");
    RegressionTree tree;
    for (const Json& item : nodes) {
      TreeNode node;
      node.feature = read_int(item, "feature");
      node.threshold = read_double(item, "threshold");
      node.left = read_int(item, "left");
      node.right = read_int(item, "right");
      node.value = read_double(item, "value");
      tree.nodes.push_back(node);
    }
    const auto size = static_cast<int>(tree.nodes.size());
    for (int id = 0; id < size; ++id) {
      const TreeNode& node = tree.nodes[id];
      if (node.is_leaf()) continue;
      if (node.feature >= kFeatureCount || node.left <= id || node.right <= id ||
          node.left >= size || node.right >= size) {
        throw ParseError("model file: malformed tree node " + std::to_string(id));
      }
    }
    model.trees.push_back(std::move(tree));
  }
  return model;
}

GbdtModel load_gbdt_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open model file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_gbdt(buf.str());
}

void save_gbdt_file(const GbdtModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write model file '" + path + "'");
  out << serialize_gbdt(model);
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(q * n));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

EvalReport evaluate(const GbdtModel& model, const std::vector<FeatureVector>& features,
                    const std::vector<double>& labels) {
  if (features.size() != labels.size()) throw ValidationError("feature and label counts differ");
  EvalReport report;
  report.samples = labels.size();
  std::vector<double> relative;
  relative.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double error = std::abs(predict(model, features[i]) - labels[i]);
    relative.push_back(error / std::max(labels[i], 1e-9));
    report.max_absolute_error = std::max(report.max_absolute_error, error);
  }
  report.median_relative_error = percentile(relative, 0.5);
  report.p90_relative_error = percentile(relative, 0.9);
  return report;
}

}  // namespace edgeplan
