#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "edgeplan/features.hpp"
#include "edgeplan/gbdt.hpp"
#include "edgeplan/model_graph.hpp"
#include "edgeplan/random_instances.hpp"

namespace edgeplan {

struct TraceSample {
  FeatureVector features;
  LabelKind label_kind = LabelKind::kInference;
  double label_seconds = 0.0;

  bool operator==(const TraceSample&) const = default;
};

using TraceSet = std::vector<TraceSample>;

/// Sampling choices for trace generation. Layers and chains are cut from the builtin model
/// families at several channel widths; testbeds vary node count, topology and link bandwidth.
struct TraceConfig {
  int samples = 50000;  // per label kind
  std::vector<BuiltinModel> models = all_builtin_models();
  std::vector<double> width_scales = {0.25, 0.5, 1.0};
  std::vector<double> bandwidths = {2.5e8, 5e8, 1e9, 2.5e9, 5e9, 1e10};
  int min_nodes = 2;
  int max_nodes = 6;
  double rate = 1e10;
  int max_chain = 4;  // consumer chain length for sync samples
};

/// Simulator-labelled samples: row 2i is inference sample i, row 2i + 1 is sync sample i.
/// Each sample draws from its own seed, so any subset can be regenerated independently.
TraceSet gen_traces(const TraceConfig& config, std::uint64_t seed);

TraceSample inference_sample(const TraceConfig& config, std::uint64_t sample_seed);
TraceSample sync_sample(const TraceConfig& config, std::uint64_t sample_seed);

inline constexpr std::string_view kTraceHeader =
    "in_h,in_w,in_c,out_h,out_w,out_c,kernel,stride,padding,conv_type,bandwidth_bps,topology,"
    "node_count,scheme,label_kind,label_seconds";

std::string traces_to_csv(const TraceSet& traces);
TraceSet parse_traces_csv(std::string_view text);
TraceSet load_traces_file(const std::string& path);
void save_traces_file(const TraceSet& traces, const std::string& path);

TraceSet filter_kind(const TraceSet& traces, LabelKind kind);

/// Trains on a single-kind trace set; mixed kinds and empty sets are rejected.
GbdtModel train_gbdt(const TraceSet& traces, const GbdtParams& params,
                     std::vector<double>* loss_history = nullptr);
EvalReport evaluate(const GbdtModel& model, const TraceSet& holdout);

}  // namespace edgeplan
