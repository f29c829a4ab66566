// parex: node-level GNN explanations computed in parallel via graph
// partitioning, k-hop border reconstruction and independent-node batching.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "parex/cost_model.hpp"
#include "parex/explain.hpp"
#include "parex/metrics.hpp"
#include "parex/runner.hpp"
#include "parex/schedule.hpp"

namespace {

using namespace parex;

struct DatasetCli {
  std::string config_path;
  std::string content, cites;
  bool no_symmetrize = false;
  std::string synthetic;
  std::int64_t nodes = 0;
  int communities = 0;
  double p_intra = -1.0, p_inter = -1.0;
  int attach = 0;
  std::int64_t feature_dim = 0;
  std::int64_t data_seed = -1;

  void attach_options(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file; flags override it");
    cmd->add_option("--content", content, "content file (id, features..., label)");
    cmd->add_option("--cites", cites, "cites file (cited id, citing id)");
    cmd->add_flag("--no-symmetrize", no_symmetrize, "keep citation edges directed");
    cmd->add_option("--synthetic", synthetic, "community | preferential")
        ->check(CLI::IsMember({"community", "preferential"}));
    cmd->add_option("--nodes", nodes, "synthetic node count");
    cmd->add_option("--communities", communities, "planted community count");
    cmd->add_option("--p-intra", p_intra, "intra-community edge probability");
    cmd->add_option("--p-inter", p_inter, "inter-community edge probability");
    cmd->add_option("--attach", attach, "preferential attachment degree");
    cmd->add_option("--feature-dim", feature_dim, "synthetic feature dimension");
    cmd->add_option("--data-seed", data_seed, "synthetic generator seed");
  }

  RunConfig build() const {
    RunConfig cfg;
    if (!config_path.empty()) cfg = RunConfig::from_file(config_path);
    if (!content.empty()) {
      cfg.dataset.kind = DatasetSpec::Kind::planetoid;
      cfg.dataset.name = content;
      cfg.dataset.content_path = content;
      cfg.dataset.cites_path = cites;
    }
    if (no_symmetrize) cfg.dataset.symmetrize = false;
    if (!synthetic.empty()) {
      cfg.dataset.kind = synthetic == "community" ? DatasetSpec::Kind::community
                                                  : DatasetSpec::Kind::preferential;
      cfg.dataset.name = synthetic;
    }
    if (nodes > 0) cfg.dataset.nodes = static_cast<NodeId>(nodes);
    if (communities > 0) cfg.dataset.community.communities = communities;
    if (p_intra >= 0.0) cfg.dataset.community.p_intra = p_intra;
    if (p_inter >= 0.0) cfg.dataset.community.p_inter = p_inter;
    if (attach > 0) cfg.dataset.attach = attach;
    if (feature_dim > 0) {
      cfg.dataset.feature_dim = feature_dim;
      cfg.dataset.community.feature_dim = feature_dim;
    }
    if (data_seed >= 0) cfg.dataset.seed = static_cast<std::uint64_t>(data_seed);
    return cfg;
  }
};

struct ModelCli {
  int hidden = 0;
  int layers = 0;
  std::int64_t seed = -1;
  int train_epochs = -1;
  double learning_rate = 0.0;
  std::string weights;

  void attach_options(CLI::App* cmd) {
    cmd->add_option("--hidden", hidden, "hidden width");
    cmd->add_option("--layers", layers, "GNN layer count (= hops)");
    cmd->add_option("--model-seed", seed, "weight init / training seed");
    cmd->add_option("--train-epochs", train_epochs, "training epochs (0 = untrained)");
    cmd->add_option("--lr", learning_rate, "training learning rate");
    cmd->add_option("--weights", weights, "load weights from this file");
  }

  void apply(RunConfig& cfg) const {
    if (hidden > 0) cfg.model.hidden = hidden;
    if (layers > 0) cfg.model.layers = layers;
    if (seed >= 0) cfg.model.seed = static_cast<std::uint64_t>(seed);
    if (train_epochs >= 0) cfg.model.train_epochs = train_epochs;
    if (learning_rate > 0.0) cfg.model.learning_rate = learning_rate;
    if (!weights.empty()) cfg.model.weights_path = weights;
  }
};

void write_or_print(const std::string& path, const std::string& body) {
  if (path.empty() || path == "-") {
    std::cout << body;
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << body;
}

nlohmann::json explanations_to_json(const std::vector<Explanation>& explanations) {
  nlohmann::json out = nlohmann::json::array();
  for (const Explanation& e : explanations) {
    nlohmann::json scores = nlohmann::json::object();
    for (std::size_t i = 0; i < e.nodes.size(); ++i)
      scores[std::to_string(e.nodes[i])] = e.normalized[i];
    out.push_back({{"target", e.target},
                   {"class", e.class_explained},
                   {"method", to_string(e.method)},
                   {"scores", std::move(scores)}});
  }
  return out;
}

int run_partition(const DatasetCli& data, std::int32_t clusters, const std::string& strategy,
                  std::uint64_t seed, const std::string& out_path) {
  const RunConfig cfg = data.build();
  const Graph g = cfg.dataset.load();
  const Partition p = partition(g, clusters, partition_strategy_from_string(strategy), seed);
  nlohmann::json j = {
      {"cluster_of", p.cluster_of},
      {"stats",
       {{"clusters", p.cluster_count},
        {"cut", static_cast<std::int64_t>(p.cut_edges.size())},
        {"balance", balance(p)},
        {"cluster_sizes", p.cluster_sizes}}}};
  write_or_print(out_path, j.dump(2) + "\n");
  return 0;
}

int run_reconstruct(const DatasetCli& data, std::int32_t clusters,
                    const std::string& strategy, std::uint64_t partition_seed, int hops,
                    double dropout_rate, std::uint64_t seed, const std::string& out_path) {
  const RunConfig cfg = data.build();
  const Graph g = cfg.dataset.load();
  const Partition p =
      partition(g, clusters, partition_strategy_from_string(strategy), partition_seed);
  ReconstructionConfig rc;
  rc.k_hops = hops;
  rc.restore_prob = 1.0 - dropout_rate;
  rc.seed = seed;
  const ReconstructedGraph recon = dropout_reconstruct(g, p, rc);
  const DeltaMetrics delta = delta_metrics(g, recon);
  nlohmann::json j = {{"clusters", clusters},
                      {"dropout_rate", dropout_rate},
                      {"hops", hops},
                      {"delta_nodes_pct", delta.delta_nodes_pct},
                      {"delta_edges_pct", delta.delta_edges_pct},
                      {"added_nodes", recon.added_nodes},
                      {"added_edges", recon.added_edges},
                      {"cut_edges", recon.cut_edge_count},
                      {"union_nodes", recon.union_graph.node_count},
                      {"union_edges", recon.union_graph.edge_count}};
  write_or_print(out_path, j.dump(2) + "\n");
  return 0;
}

int run_train(const DatasetCli& data, const ModelCli& model_cli, const std::string& out_path,
              const std::string& report_path) {
  RunConfig cfg = data.build();
  model_cli.apply(cfg);
  LoadReport load_report;
  const Graph g = cfg.dataset.load(&load_report);
  const std::int64_t classes =
      g.has_labels() ? 1 + *std::max_element(g.labels.begin(), g.labels.end()) : 2;
  GcnModel model = GcnModel::init(g.feature_dim(), cfg.model.hidden, classes,
                                  cfg.model.layers, cfg.model.seed);
  TrainStats stats;
  if (cfg.model.train_epochs > 0) {
    TrainConfig tc;
    tc.epochs = cfg.model.train_epochs;
    tc.learning_rate = cfg.model.learning_rate;
    tc.seed = cfg.model.seed;
    model = train_minimal(model, g, tc, &stats);
  }
  model.save(out_path);
  nlohmann::json j = {{"weights", out_path},
                      {"final_loss", stats.final_loss},
                      {"train_accuracy", stats.train_accuracy},
                      {"labeled_nodes", stats.labeled_nodes},
                      {"load_report", load_report.to_json()}};
  write_or_print(report_path, j.dump(2) + "\n");
  return 0;
}

int run_explain(const DatasetCli& data, const ModelCli& model_cli, const std::string& method,
                const std::string& mode, std::int32_t clusters, double dropout_rate,
                const std::string& strategy, std::uint64_t seed, int workers,
                std::vector<std::int64_t> targets, bool sequential, bool whole_graph,
                const std::string& out_path, const std::string& schedule_path) {
  RunConfig cfg = data.build();
  model_cli.apply(cfg);
  const Graph g = cfg.dataset.load();
  const GcnModel model = cfg.model.realize(g);

  ExplainOptions opts;
  opts.method = explain_method_from_string(method);
  opts.seed = seed;
  std::vector<NodeId> target_ids(targets.begin(), targets.end());

  nlohmann::json report;
  if (sequential) {
    const SequentialResult r =
        explain_all_sequential(model, g, opts, target_ids, whole_graph);
    report = {{"mode", whole_graph ? "sequential-whole-graph" : "sequential"},
              {"explain_seconds", r.explain_seconds},
              {"invocations", r.invocations},
              {"explanations", explanations_to_json(r.explanations)}};
  } else {
    ParallelOptions popts;
    popts.clusters = clusters;
    popts.strategy = partition_strategy_from_string(strategy);
    popts.restore_prob = 1.0 - dropout_rate;
    popts.partition_seed = seed;
    popts.recon_seed = seed;
    popts.mode = explain_mode_from_string(mode);
    popts.workers = workers;
    popts.memory_cap_bytes = memory_cap_from_env();
    popts.targets = target_ids;
    popts.explain = opts;
    const ParallelResult r = explain_all_parallel(model, g, popts);
    report = {{"mode", mode},
              {"clusters", clusters},
              {"dropout_rate", dropout_rate},
              {"explain_seconds", r.explain_seconds},
              {"setup_seconds", r.setup_seconds},
              {"delta_nodes_pct", r.delta.delta_nodes_pct},
              {"delta_edges_pct", r.delta.delta_edges_pct},
              {"batch_count", r.batch_count},
              {"explanations", explanations_to_json(r.explanations)}};
    if (!schedule_path.empty()) {
      // The pipeline is deterministic: re-deriving reproduces its schedule.
      const Partition p = partition(g, clusters, popts.strategy, seed);
      ReconstructionConfig rc;
      rc.k_hops = model.layer_count;
      rc.restore_prob = popts.restore_prob;
      rc.seed = seed;
      const ReconstructedGraph recon = dropout_reconstruct(g, p, rc);
      const BatchSchedule schedule = build_batches(recon, p, target_ids);
      nlohmann::json batches = nlohmann::json::array();
      for (const auto& batch : schedule.batches) {
        nlohmann::json row = nlohmann::json::array();
        for (std::int64_t id : batch)
          row.push_back({{"union_id", id}, {"origin", recon.origin_of[id]}});
        batches.push_back(std::move(row));
      }
      write_or_print(schedule_path,
                     nlohmann::json{{"batch_count", schedule.batch_count},
                                    {"covered", schedule.covered},
                                    {"batches", std::move(batches)}}
                             .dump(2) +
                         "\n");
    }
  }
  write_or_print(out_path, report.dump(2) + "\n");
  return 0;
}

int run_predict(std::int64_t nodes, std::int64_t edges, std::int64_t features,
                std::int64_t layers, std::int64_t clusters, std::int64_t replicated) {
  CostInputs ci;
  ci.nodes = nodes;
  ci.edges = edges;
  ci.features = features;
  ci.layers = layers;
  ci.clusters = clusters;
  ci.replicated_edges = replicated;
  const double seq = sequential_cost(ci);
  const double par = parallel_cost(ci);
  const SpeedupCondition cond = speedup_condition(edges, replicated, clusters);
  nlohmann::json j = {{"sequential_cost", seq},
                      {"parallel_cost", par},
                      {"predicted_speedup", seq / par},
                      {"speedup_condition",
                       {{"holds", cond.holds},
                        {"min_clusters", cond.min_clusters},
                        {"edge_replication_ratio", static_cast<double>(replicated) /
                                                       static_cast<double>(edges)}}}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

int run_bench(const DatasetCli& data, const std::string& table_csv,
              const std::string& table_json, const std::string& table_md,
              const std::string& report_json) {
  RunConfig cfg = data.build();
  if (!table_csv.empty()) cfg.output.table_csv = table_csv;
  if (!table_json.empty()) cfg.output.table_json = table_json;
  if (!table_md.empty()) cfg.output.table_markdown = table_md;
  if (!report_json.empty()) cfg.output.report_json = report_json;
  const BenchResult result = run_benchmark(cfg);
  std::cout << "sequential: " << result.sequential_seconds << " s over "
            << result.sequential_invocations << " targets\n";
  if (!result.rows.empty()) std::cout << emit_table(result.rows, TableFormat::markdown);
  for (const auto& note : result.skipped) std::cout << "skipped " << note << "\n";
  return 0;
}

int run_verify(const DatasetCli& data, const std::string& fault) {
  const RunConfig cfg = data.build();
  const FaultInjection injection = fault == "drop-restored-edge"
                                       ? FaultInjection::drop_restored_edge
                                       : FaultInjection::none;
  const VerifyReport report = verify(cfg, injection);
  for (const auto& check : report.checks)
    std::cout << (check.passed ? "PASS" : "FAIL") << "  " << check.name << ": "
              << check.detail << "\n";
  return report.all_passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"node-level GNN explanations, parallelized via graph partitioning"};
  app.require_subcommand(1);

  auto* partition_cmd = app.add_subcommand("partition", "split a graph into clusters");
  DatasetCli partition_data;
  partition_data.attach_options(partition_cmd);
  std::int32_t clusters = 8;
  std::string strategy = "multilevel";
  std::int64_t seed = 1;
  std::string out_path;
  partition_cmd->add_option("--clusters", clusters, "cluster count")->required();
  partition_cmd->add_option("--strategy", strategy, "multilevel | greedy | random");
  partition_cmd->add_option("--seed", seed, "partitioner seed");
  partition_cmd->add_option("--out", out_path, "output JSON path (default stdout)");

  auto* reconstruct_cmd =
      app.add_subcommand("reconstruct", "rebuild k-hop borders and report deltas");
  DatasetCli reconstruct_data;
  reconstruct_data.attach_options(reconstruct_cmd);
  std::int32_t r_clusters = 8;
  std::string r_strategy = "multilevel";
  std::int64_t r_partition_seed = 1;
  int hops = 2;
  double dropout_rate = 0.0;
  std::int64_t r_seed = 1;
  std::string r_out;
  reconstruct_cmd->add_option("--clusters", r_clusters, "cluster count")->required();
  reconstruct_cmd->add_option("--strategy", r_strategy, "partition strategy");
  reconstruct_cmd->add_option("--partition-seed", r_partition_seed, "partitioner seed");
  reconstruct_cmd->add_option("--hops", hops, "hops to restore (= GNN layers)");
  reconstruct_cmd->add_option("--dropout-rate", dropout_rate,
                              "fraction of broken edges left out (d = 1 - p)");
  reconstruct_cmd->add_option("--seed", r_seed, "restoration draw seed");
  reconstruct_cmd->add_option("--out", r_out, "output JSON path (default stdout)");

  auto* train_cmd = app.add_subcommand("train", "train the minimal GCN and save weights");
  DatasetCli train_data;
  ModelCli train_model;
  train_data.attach_options(train_cmd);
  train_model.attach_options(train_cmd);
  std::string weights_out = "weights.json";
  std::string train_report;
  train_cmd->add_option("--out", weights_out, "weights output path");
  train_cmd->add_option("--report", train_report, "training report JSON (default stdout)");

  auto* explain_cmd = app.add_subcommand("explain", "compute node-level explanations");
  DatasetCli explain_data;
  ModelCli explain_model;
  explain_data.attach_options(explain_cmd);
  explain_model.attach_options(explain_cmd);
  std::string method = "saliency";
  std::string mode = "worker-pool";
  std::int32_t e_clusters = 8;
  double e_dropout = 0.0;
  std::string e_strategy = "multilevel";
  std::int64_t e_seed = 1;
  int workers = 0;
  std::vector<std::int64_t> targets;
  bool sequential = false;
  bool whole_graph = false;
  std::string explanations_out;
  std::string schedule_out;
  explain_cmd->add_option("--method", method,
                          "saliency | deconvnet | guided | gnnexplainer");
  explain_cmd->add_option("--mode", mode, "worker-pool | union-forward");
  explain_cmd->add_option("--clusters", e_clusters, "cluster count");
  explain_cmd->add_option("--dropout-rate", e_dropout, "reconstruction dropout rate");
  explain_cmd->add_option("--strategy", e_strategy, "partition strategy");
  explain_cmd->add_option("--seed", e_seed, "pipeline seed");
  explain_cmd->add_option("--workers", workers, "worker threads (0 = hardware)");
  explain_cmd->add_option("--targets", targets, "explain only these node ids");
  explain_cmd->add_flag("--sequential", sequential, "run the sequential baseline instead");
  explain_cmd->add_flag("--whole-graph", whole_graph,
                        "sequential baseline without subgraph extraction");
  explain_cmd->add_option("--out", explanations_out, "explanations JSON (default stdout)");
  explain_cmd->add_option("--emit-schedule", schedule_out, "dump the batch schedule JSON");

  auto* predict_cmd = app.add_subcommand("predict", "evaluate the cost model");
  std::int64_t p_nodes = 0, p_edges = 0, p_features = 1, p_layers = 2, p_clusters = 1,
               p_replicated = 0;
  predict_cmd->add_option("--nodes", p_nodes, "n")->required();
  predict_cmd->add_option("--edges", p_edges, "m")->required();
  predict_cmd->add_option("--features", p_features, "F");
  predict_cmd->add_option("--layers", p_layers, "L");
  predict_cmd->add_option("--clusters", p_clusters, "c")->required();
  predict_cmd->add_option("--replicated-edges", p_replicated, "r (net, may be negative)");

  auto* bench_cmd = app.add_subcommand("bench", "run the (clusters x dropout) grid");
  DatasetCli bench_data;
  bench_data.attach_options(bench_cmd);
  std::string b_csv, b_json, b_md, b_report;
  bench_cmd->add_option("--table-csv", b_csv, "write the table as CSV");
  bench_cmd->add_option("--table-json", b_json, "write the table as JSON");
  bench_cmd->add_option("--table-markdown", b_md, "write the table as markdown");
  bench_cmd->add_option("--report-json", b_report, "write the full report JSON");

  auto* verify_cmd = app.add_subcommand("verify", "run the invariant suites");
  DatasetCli verify_data;
  verify_data.attach_options(verify_cmd);
  std::string fault = "none";
  verify_cmd->add_option("--fault", fault, "none | drop-restored-edge (negative control)")
      ->check(CLI::IsMember({"none", "drop-restored-edge"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (partition_cmd->parsed())
      return run_partition(partition_data, clusters, strategy,
                           static_cast<std::uint64_t>(seed), out_path);
    if (reconstruct_cmd->parsed())
      return run_reconstruct(reconstruct_data, r_clusters, r_strategy,
                             static_cast<std::uint64_t>(r_partition_seed), hops,
                             dropout_rate, static_cast<std::uint64_t>(r_seed), r_out);
    if (train_cmd->parsed())
      return run_train(train_data, train_model, weights_out, train_report);
    if (explain_cmd->parsed())
      return run_explain(explain_data, explain_model, method, mode, e_clusters, e_dropout,
                         e_strategy, static_cast<std::uint64_t>(e_seed), workers, targets,
                         sequential, whole_graph, explanations_out, schedule_out);
    if (predict_cmd->parsed())
      return run_predict(p_nodes, p_edges, p_features, p_layers, p_clusters, p_replicated);
    if (bench_cmd->parsed()) return run_bench(bench_data, b_csv, b_json, b_md, b_report);
    if (verify_cmd->parsed()) return run_verify(verify_data, fault);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
