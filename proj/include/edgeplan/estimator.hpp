#pragma once

#include <array>
#include <map>
#include <mutex>
#include <span>
#include <string>

#include "edgeplan/features.hpp"
#include "edgeplan/gbdt.hpp"
#include "edgeplan/simulator.hpp"

namespace edgeplan {

/// Segment cost model consumed by the planners.
class Estimator {
 public:
  virtual ~Estimator() = default;

  virtual std::string kind() const = 0;
  virtual SegmentCost estimate_segment(const SegmentLayout& layout,
                                       const TestbedSpec& testbed) const = 0;
  virtual double estimate_final_sync(const ModelGraph& graph, Scheme last_scheme,
                                     const TestbedSpec& testbed) const;
  /// True when compute estimates follow the simulator's chain arithmetic exactly, so
  /// planner-side compute bounds are admissible. The planner prunes only then.
  virtual bool exact_compute() const { return false; }
};

/// Exact costs from the timing simulator.
class OracleEstimator final : public Estimator {
 public:
  std::string kind() const override { return "oracle"; }
  SegmentCost estimate_segment(const SegmentLayout& layout,
                               const TestbedSpec& testbed) const override;
  bool exact_compute() const override { return true; }
};

/// Two boosted-tree models: per-layer compute of the slowest node, and segment entry sync.
class LearnedEstimator final : public Estimator {
 public:
  LearnedEstimator(GbdtModel inference, GbdtModel sync);

  std::string kind() const override { return "learned"; }
  SegmentCost estimate_segment(const SegmentLayout& layout,
                               const TestbedSpec& testbed) const override;

  double estimate_inference(const LayerSpec& effective, const TestbedSpec& testbed,
                            Scheme scheme) const;
  double estimate_sync(const LayerSpec& producer, Scheme producer_scheme,
                       std::span<const LayerSpec> chain, Scheme chain_scheme,
                       const TestbedSpec& testbed) const;

 private:
  double cached_predict(const GbdtModel& model, const FeatureVector& f) const;

  GbdtModel inference_;
  GbdtModel sync_;
  mutable std::mutex mutex_;
  mutable std::map<std::pair<int, std::array<double, kFeatureCount>>, double> memo_;
};

}  // namespace edgeplan
