#include "edgeplan/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "edgeplan/errors.hpp"
#include "edgeplan/random_instances.hpp"
#include "edgeplan/traces.hpp"
#include "json.hpp"

namespace edgeplan {

namespace {

using Json = nlohmann::ordered_json;

constexpr std::string_view kBuiltinPrefix = "builtin:";

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << text;
  if (!out) throw ParseError("failed writing '" + path + "'");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

Json plan_layers_json(const Plan& plan) {
  auto entries = Json::array();
  for (std::size_t i = 0; i < plan.size(); ++i) {
    Json e;
    e["layer_id"] = i;
    e["scheme"] = std::string(to_string(plan[i].scheme));
    e["mode"] = std::string(to_string(plan[i].mode));
    entries.push_back(std::move(e));
  }
  return entries;
}

// Oracle costs with every chain's compute nudged upward; drives the verifier's self-check.
class PerturbedOracle final : public Estimator {
 public:
  std::string kind() const override { return "perturbed-oracle"; }
  SegmentCost estimate_segment(const SegmentLayout& layout,
                               const TestbedSpec& testbed) const override {
    SegmentCost c = segment_cost(layout, testbed);
    c.compute_s *= 1.0 + 1e-6 * static_cast<double>(layout.segment.length());
    return c;
  }
};

struct EstimatorFlags {
  std::string kind = "oracle";
  std::string i_model;
  std::string s_model;
};

void add_estimator_flags(CLI::App* cmd, EstimatorFlags& flags) {
  cmd->add_option("--estimator", flags.kind, "oracle or learned")
      ->check(CLI::IsMember({"oracle", "learned"}));
  cmd->add_option("--i-model", flags.i_model, "inference model file (learned mode)");
  cmd->add_option("--s-model", flags.s_model, "sync model file (learned mode)");
}

}  // namespace

ModelGraph load_model_arg(const std::string& arg) {
  if (arg.rfind(kBuiltinPrefix, 0) != 0) return load_model_file(arg);
  const std::string rest = arg.substr(kBuiltinPrefix.size());
  const auto colon = rest.find(':');
  if (colon == std::string::npos) return builtin_model(rest, 1.0);
  double scale = 0.0;
  try {
    std::size_t used = 0;
    scale = std::stod(rest.substr(colon + 1), &used);
    if (used != rest.size() - colon - 1) throw std::invalid_argument("trailing text");
  } catch (const std::exception&) {
    throw ParseError("bad builtin scale in '" + arg + "'");
  }
  return builtin_model(rest.substr(0, colon), scale);
}

std::string model_label(const std::string& arg) {
  if (arg.rfind(kBuiltinPrefix, 0) == 0) return arg.substr(kBuiltinPrefix.size());
  return arg;
}

TestbedSpec MatrixCell::testbed() const {
  return make_testbed(node_count, rate, topology, bandwidth_bps, per_layer_overhead_s);
}

std::vector<MatrixCell> default_matrix() {
  std::vector<MatrixCell> cells;
  for (Topology t : {Topology::kRing, Topology::kPs}) {
    for (double bw : {5e9, 1e9, 5e8}) {
      for (int n : {3, 4}) cells.push_back({t, bw, n, 1e10, 0.0});
    }
  }
  return cells;
}

std::vector<MatrixCell> parse_matrix(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("testbed matrix: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("testbed matrix must be an object");
  for (const auto& [key, _] : doc.items()) {
    if (key != "topologies" && key != "bandwidths_bps" && key != "node_counts" && key != "rate" &&
        key != "per_layer_overhead_s") {
      throw ParseError("testbed matrix: unknown field '" + key + "'");
    }
  }
  const auto list = [&](const char* key) {
    if (!doc.contains(key) || !doc[key].is_array() || doc[key].empty()) {
      throw ParseError(std::string("testbed matrix: '") + key + "' must be a non-empty list");
    }
    return doc[key];
  };
  double rate = 1e10;
  double overhead = 0.0;
  try {
    if (doc.contains("rate")) rate = doc["rate"].get<double>();
    if (doc.contains("per_layer_overhead_s")) overhead = doc["per_layer_overhead_s"].get<double>();
    std::vector<MatrixCell> cells;
    for (const Json& t : list("topologies")) {
      for (const Json& bw : list("bandwidths_bps")) {
        for (const Json& n : list("node_counts")) {
          MatrixCell c{topology_from_string(t.get<std::string>()), bw.get<double>(), n.get<int>(),
                       rate, overhead};
          validate_testbed(c.testbed());
          cells.push_back(c);
        }
      }
    }
    return cells;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("testbed matrix: ") + e.what());
  }
}

CellReport compare_cell(const ModelGraph& graph, const std::string& model_name,
                        const MatrixCell& cell, const Estimator& estimator) {
  const TestbedSpec tb = cell.testbed();
  const int n = tb.node_count;
  CellReport report;
  report.model = model_name;
  report.cell = cell;
  const auto add = [&](std::string name, Plan plan) {
    const double t = simulate(graph, plan, tb).total_s;
    report.strategies.push_back({std::move(name), std::move(plan), t, 0.0});
  };
  for (Scheme s : kAllSchemes) add("fixed-" + std::string(to_string(s)), plan_fixed(graph, s, n));
  add("layerwise", plan_layerwise(graph, tb, estimator));

  std::optional<StrategyResult> fused;
  for (Scheme s : kAllSchemes) {
    Plan plan = plan_fused_fixed(graph, tb, estimator, s);
    const double t = simulate(graph, plan, tb).total_s;
    if (!fused || t < fused->simulated_s) {
      fused = StrategyResult{"fused-fixed", std::move(plan), t, 0.0};
      report.fused_scheme = s;
    }
  }
  report.strategies.push_back(*fused);

  const PlanResult dpp = plan_dpp(graph, tb, estimator);
  report.dpp_predicted_s = dpp.predicted_cost_s;
  report.strategies.push_back({"dpp", dpp.plan, dpp.simulated_cost_s, 0.0});

  std::vector<double> times;
  for (const StrategyResult& s : report.strategies) times.push_back(s.simulated_s);
  const std::vector<double> scores = performance_scores(times);
  for (std::size_t i = 0; i < scores.size(); ++i) report.strategies[i].score = scores[i];

  double best_fixed = times[0];
  for (int i = 1; i < kSchemeCount; ++i) best_fixed = std::min(best_fixed, times[i]);
  const double best_baseline = *std::min_element(times.begin(), times.end() - 1);
  report.speedup_vs_best_fixed = best_fixed / dpp.simulated_cost_s;
  report.speedup_vs_best_baseline = best_baseline / dpp.simulated_cost_s;
  return report;
}

std::string comparison_to_json(const ComparisonReport& report) {
  Json doc;
  doc["estimator"] = report.estimator;
  auto cells = Json::array();
  for (const CellReport& c : report.cells) {
    Json cell;
    cell["model"] = c.model;
    cell["topology"] = std::string(to_string(c.cell.topology));
    cell["bandwidth_bps"] = c.cell.bandwidth_bps;
    cell["node_count"] = c.cell.node_count;
    cell["rate"] = c.cell.rate;
    auto strategies = Json::array();
    for (const StrategyResult& s : c.strategies) {
      Json item;
      item["name"] = s.name;
      item["simulated_seconds"] = s.simulated_s;
      item["performance_score"] = s.score;
      strategies.push_back(std::move(item));
    }
    cell["strategies"] = std::move(strategies);
    cell["fused_scheme"] = std::string(to_string(c.fused_scheme));
    cell["dpp_predicted_seconds"] = c.dpp_predicted_s;
    cell["speedup_vs_best_fixed"] = c.speedup_vs_best_fixed;
    cell["speedup_vs_best_baseline"] = c.speedup_vs_best_baseline;
    cell["dpp_plan"] = plan_layers_json(c.dpp().plan);
    cells.push_back(std::move(cell));
  }
  doc["cells"] = std::move(cells);
  return doc.dump(2) + "\n";
}

VerifySummary run_verify(const VerifyOptions& options) {
  if (options.max_layers < 1 || options.max_layers > kBruteForceLayerCap) {
    throw ValidationError("--max-layers must lie in [1, " + std::to_string(kBruteForceLayerCap) + "]");
  }
  if (options.instances < 1) throw ValidationError("--instances must be >= 1");
  const OracleEstimator oracle;
  const PerturbedOracle perturbed;
  const Estimator& dp_estimator = options.inject_fault ? static_cast<const Estimator&>(perturbed) : oracle;
  VerifySummary summary;
  double reduction_sum = 0.0;
  for (int i = 0; i < options.instances; ++i) {
    const VerifyInstance inst = verify_instance(options.seed, i, options.max_layers);
    VerifyInstanceResult r;
    r.index = i;
    r.instance_seed = mix_seed(options.seed, static_cast<std::uint64_t>(i));
    r.layers = static_cast<int>(inst.graph.size());
    const PlanResult pruned = plan_dpp(inst.graph, inst.testbed, dp_estimator, PlannerOptions{true});
    const PlanResult full = plan_dpp(inst.graph, inst.testbed, dp_estimator, PlannerOptions{false});
    const PlanResult brute = plan_bruteforce(inst.graph, inst.testbed, oracle);
    r.pruned_evaluations = pruned.evaluations;
    r.unpruned_evaluations = full.evaluations;
    r.bruteforce_evaluations = brute.evaluations;
    r.plans_enumerated = brute.plans_enumerated;
    r.dp_matches_bruteforce = pruned.predicted_cost_s == brute.predicted_cost_s &&
                              pruned.simulated_cost_s == brute.simulated_cost_s;
    r.pruning_sound = pruned.plan == full.plan && pruned.predicted_cost_s == full.predicted_cost_s &&
                      pruned.evaluations <= full.evaluations;
    summary.passed = summary.passed && r.dp_matches_bruteforce && r.pruning_sound;
    reduction_sum += 1.0 - static_cast<double>(pruned.evaluations) /
                               static_cast<double>(std::max<std::int64_t>(full.evaluations, 1));
    summary.instances.push_back(r);
  }
  summary.mean_pruning_reduction = reduction_sum / options.instances;
  return summary;
}

std::unique_ptr<Estimator> make_estimator(const std::string& kind, const std::string& i_model,
                                          const std::string& s_model) {
  if (kind == "oracle") return std::make_unique<OracleEstimator>();
  if (kind != "learned") throw ParseError("unknown estimator '" + kind + "'");
  if (i_model.empty()) throw ParseError("learned estimator needs --i-model");
  if (s_model.empty()) throw ParseError("learned estimator needs --s-model");
  return std::make_unique<LearnedEstimator>(load_gbdt_file(i_model), load_gbdt_file(s_model));
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Partition planner for distributed DNN inference on edge clusters", "edgeplan"};
  app.require_subcommand(1);

  // plan
  std::string model_arg, testbed_path, out_path, plan_path, traces_path;
  EstimatorFlags est;
  bool no_prune = false;
  auto* plan_cmd = app.add_subcommand("plan", "search for the lowest-cost partition plan");
  plan_cmd->add_option("--model", model_arg, "model document or builtin:NAME[:SCALE]")->required();
  plan_cmd->add_option("--testbed", testbed_path, "testbed document")->required();
  add_estimator_flags(plan_cmd, est);
  plan_cmd->add_option("--out", out_path, "plan document path (stdout when absent)");
  plan_cmd->add_flag("--no-prune", no_prune, "disable chain pruning");

  // compare
  std::vector<std::string> compare_models;
  std::string matrix_path;
  auto* compare_cmd = app.add_subcommand("compare", "run baselines and dpp over a testbed matrix");
  compare_cmd->add_option("--model", compare_models, "model(s); all builtins when absent");
  compare_cmd->add_option("--testbed-matrix", matrix_path, "matrix document (default grid when absent)");
  add_estimator_flags(compare_cmd, est);
  compare_cmd->add_option("--out", out_path, "report path (stdout when absent)");

  // verify
  VerifyOptions verify;
  auto* verify_cmd = app.add_subcommand("verify", "check dpp against brute force on random instances");
  verify_cmd->add_option("--max-layers", verify.max_layers, "largest instance size");
  verify_cmd->add_option("--instances", verify.instances, "instance count");
  verify_cmd->add_option("--seed", verify.seed, "corpus seed");
  verify_cmd->add_flag("--inject-fault", verify.inject_fault)->group("");

  // gen-traces
  int samples = 50000;
  std::uint64_t trace_seed = 1;
  auto* gen_cmd = app.add_subcommand("gen-traces", "generate simulator-labelled training traces");
  gen_cmd->add_option("--samples", samples, "samples per label kind");
  gen_cmd->add_option("--seed", trace_seed, "seed");
  gen_cmd->add_option("--out", out_path, "trace file")->required();

  // train
  std::string kind_name = "inference";
  std::string target_name;
  GbdtParams params;
  double holdout = 0.2;
  auto* train_cmd = app.add_subcommand("train", "train a boosted-tree estimator");
  train_cmd->add_option("--traces", traces_path, "trace file")->required();
  train_cmd->add_option("--kind", kind_name, "inference or sync")
      ->check(CLI::IsMember({"inference", "sync"}));
  train_cmd->add_option("--trees", params.trees, "boosting rounds");
  train_cmd->add_option("--depth", params.max_depth, "max tree depth");
  train_cmd->add_option("--lr", params.learning_rate, "learning rate");
  train_cmd->add_option("--min-leaf", params.min_samples_leaf, "min samples per leaf");
  train_cmd->add_option("--holdout", holdout, "trailing fraction held out for evaluation");
  train_cmd->add_option("--target", target_name,
                        "identity, log or log-ratio (default log for inference, log-ratio for sync)")
      ->check(CLI::IsMember({"identity", "log", "log-ratio"}));
  train_cmd->add_option("--out", out_path, "model file")->required();

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "time a plan on a testbed");
  sim_cmd->add_option("--model", model_arg, "model document or builtin:NAME[:SCALE]")->required();
  sim_cmd->add_option("--testbed", testbed_path, "testbed document")->required();
  sim_cmd->add_option("--plan", plan_path, "plan document")->required();
  sim_cmd->add_option("--out", out_path, "report path (stdout when absent)");

  // export-model
  auto* export_cmd = app.add_subcommand("export-model", "write a model document");
  export_cmd->add_option("--model", model_arg, "builtin:NAME[:SCALE] or model document")->required();
  export_cmd->add_option("--out", out_path, "model document path (stdout when absent)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  const auto emit = [&](const std::string& text) {
    if (out_path.empty()) {
      out << text;
    } else {
      write_text(out_path, text);
    }
  };

  try {
    if (*plan_cmd) {
      const ModelGraph graph = load_model_arg(model_arg);
      const TestbedSpec tb = load_testbed_file(testbed_path);
      const auto estimator = make_estimator(est.kind, est.i_model, est.s_model);
      const PlanResult r = plan_dpp(graph, tb, *estimator, PlannerOptions{!no_prune});
      const std::string doc = plan_to_json(r.plan, estimator->kind(), r.predicted_cost_s,
                                           r.simulated_cost_s);
      std::ostream& summary = out_path.empty() ? err : out;
      emit(doc);
      summary << "layers=" << graph.size() << " predicted_cost_s=" << fmt(r.predicted_cost_s)
              << " simulated_cost_s=" << fmt(r.simulated_cost_s) << " evaluations=" << r.evaluations
              << " search_space=" << count_search_space(static_cast<int>(graph.size()), kSchemeCount)
              << "\n";
      return kExitOk;
    }
    if (*compare_cmd) {
      const auto estimator = make_estimator(est.kind, est.i_model, est.s_model);
      const std::vector<MatrixCell> cells =
          matrix_path.empty() ? default_matrix() : parse_matrix(read_text(matrix_path));
      if (compare_models.empty()) {
        for (BuiltinModel m : all_builtin_models()) {
          compare_models.push_back(std::string(kBuiltinPrefix) + std::string(to_string(m)));
        }
      }
      ComparisonReport report;
      report.estimator = estimator->kind();
      for (const std::string& arg : compare_models) {
        const ModelGraph graph = load_model_arg(arg);
        for (const MatrixCell& cell : cells) {
          report.cells.push_back(compare_cell(graph, model_label(arg), cell, *estimator));
        }
      }
      emit(comparison_to_json(report));
      if (!out_path.empty()) {
        for (const CellReport& c : report.cells) {
          out << c.model << " " << to_string(c.cell.topology) << " " << fmt(c.cell.bandwidth_bps)
              << " n=" << c.cell.node_count << " dpp=" << fmt(c.dpp().simulated_s)
              << " speedup_vs_best_fixed=" << fmt(c.speedup_vs_best_fixed) << "\n";
        }
      }
      return kExitOk;
    }
    if (*verify_cmd) {
      const VerifySummary s = run_verify(verify);
      std::int64_t pruned = 0, full = 0, brute = 0, plans = 0;
      for (const VerifyInstanceResult& r : s.instances) {
        pruned += r.pruned_evaluations;
        full += r.unpruned_evaluations;
        brute += r.bruteforce_evaluations;
        plans += r.plans_enumerated;
        if (!r.dp_matches_bruteforce) {
          err << "mismatch: instance " << r.index << " seed " << r.instance_seed
              << ": dp cost differs from brute force\n";
        }
        if (!r.pruning_sound) {
          err << "mismatch: instance " << r.index << " seed " << r.instance_seed
              << ": pruned and unpruned dp disagree\n";
        }
      }
      out << "instances=" << s.instances.size() << " max_layers=" << verify.max_layers
          << " seed=" << verify.seed << "\n"
          << "dp_evaluations pruned=" << pruned << " unpruned=" << full << "\n"
          << "bruteforce_evaluations=" << brute << " plans_enumerated=" << plans << "\n"
          << "mean_pruning_reduction=" << std::fixed << std::setprecision(4)
          << s.mean_pruning_reduction << "\n"
          << (s.passed ? "PASS" : "FAIL") << "\n";
      return s.passed ? kExitOk : kExitMismatch;
    }
    if (*gen_cmd) {
      TraceConfig config;
      config.samples = samples;
      const TraceSet traces = gen_traces(config, trace_seed);
      save_traces_file(traces, out_path);
      out << "rows=" << traces.size() << "\n";
      return kExitOk;
    }
    if (*train_cmd) {
      if (!(holdout >= 0.0 && holdout < 1.0)) {
        throw ValidationError("--holdout must lie in [0, 1); nothing would be left to train on");
      }
      if (target_name.empty()) target_name = kind_name == "sync" ? "log-ratio" : "log";
      params.target = target_from_string(target_name);
      const TraceSet all = filter_kind(load_traces_file(traces_path), label_kind_from_string(kind_name));
      const auto held = static_cast<std::size_t>(static_cast<double>(all.size()) * holdout);
      const TraceSet train(all.begin(), all.end() - static_cast<std::ptrdiff_t>(held));
      const TraceSet test(all.end() - static_cast<std::ptrdiff_t>(held), all.end());
      if (train.empty()) throw ValidationError("training set is empty");
      const GbdtModel model = train_gbdt(train, params);
      save_gbdt_file(model, out_path);
      out << "kind=" << kind_name << " train=" << train.size() << " holdout=" << test.size() << "\n";
      if (!test.empty()) {
        const EvalReport e = evaluate(model, test);
        out << "median_relative_error=" << fmt(e.median_relative_error)
            << " p90_relative_error=" << fmt(e.p90_relative_error)
            << " max_abs_error_s=" << fmt(e.max_absolute_error) << "\n";
      }
      return kExitOk;
    }
    if (*sim_cmd) {
      const ModelGraph graph = load_model_arg(model_arg);
      const TestbedSpec tb = load_testbed_file(testbed_path);
      const Plan plan = load_plan_file(plan_path);
      emit(cost_report_to_json(simulate(graph, plan, tb)));
      return kExitOk;
    }
    if (*export_cmd) {
      emit(serialize_model(load_model_arg(model_arg)));
      return kExitOk;
    }
  } catch (const PlannerError& e) {
    err << "error: " << e.what() << "\n";
    return kExitPlanner;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}

}  // namespace edgeplan
