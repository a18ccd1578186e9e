#pragma once

#include <Eigen/Core>
#include <string>
#include <string_view>
#include <vector>

#include "edgeplan/features.hpp"

namespace edgeplan {

/// Space the trees are fitted in. kLog fits log(seconds + 1e-9); kLogRatio subtracts the log of
/// a scale read off the features (layer flops for inference, producer tensor bits over
/// bandwidth for sync).
enum class TargetTransform : int { kIdentity = 0, kLog = 1, kLogRatio = 2 };

std::string_view to_string(TargetTransform target);
TargetTransform target_from_string(std::string_view name);

/// Flat tree node; `feature < 0` marks a leaf. Samples with x[feature] <= threshold go left.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;

  double predict(const FeatureArray& x) const;
  bool operator==(const RegressionTree&) const = default;
};

struct GbdtParams {
  int trees = 200;
  int max_depth = 6;
  double learning_rate = 0.1;
  int min_samples_leaf = 20;
  TargetTransform target = TargetTransform::kIdentity;
};

struct GbdtModel {
  int schema_version = kFeatureSchemaVersion;
  LabelKind label_kind = LabelKind::kInference;
  TargetTransform target = TargetTransform::kIdentity;
  double base_prediction = 0.0;
  double learning_rate = 0.1;
  int max_depth = 6;
  std::vector<RegressionTree> trees;

  bool operator==(const GbdtModel&) const = default;
};

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, kFeatureCount>;

/// Least-squares gradient boosting with exact greedy splits. `loss_history`, when given,
/// receives the training mean squared error (in target space) after every tree.
GbdtModel fit_gbdt(const FeatureMatrix& x, const Eigen::VectorXd& y, LabelKind kind,
                   const GbdtParams& params, std::vector<double>* loss_history = nullptr);

/// Raw ensemble output in target space.
double predict_raw(const GbdtModel& model, const FeatureArray& x);
/// Seconds, never negative.
double predict(const GbdtModel& model, const FeatureVector& features);

std::string serialize_gbdt(const GbdtModel& model);
GbdtModel parse_gbdt(std::string_view text);
GbdtModel load_gbdt_file(const std::string& path);
void save_gbdt_file(const GbdtModel& model, const std::string& path);

struct EvalReport {
  std::size_t samples = 0;
  double median_relative_error = 0.0;
  double p90_relative_error = 0.0;
  double max_absolute_error = 0.0;
};

/// Nearest-rank percentile (q in (0, 1]) of an unsorted sample.
double percentile(std::vector<double> values, double q);

EvalReport evaluate(const GbdtModel& model, const std::vector<FeatureVector>& features,
                    const std::vector<double>& labels);

}  // namespace edgeplan
