#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "parex/cost_model.hpp"
#include "parex/explain.hpp"
#include "parex/metrics.hpp"
#include "parex/planetoid.hpp"
#include "parex/synthetic.hpp"

namespace parex {

struct DatasetSpec {
  enum class Kind { planetoid, community, preferential };
  Kind kind = Kind::community;
  std::string name = "community";

  // planetoid
  std::string content_path;
  std::string cites_path;
  bool symmetrize = true;

  // synthetic
  NodeId nodes = 300;
  std::uint64_t seed = 7;
  CommunityParams community;
  int attach = 3;
  std::int64_t feature_dim = 16;

  Graph load(LoadReport* report = nullptr) const {
    switch (kind) {
      case Kind::planetoid: {
        PlanetoidData data = load_planetoid(content_path, cites_path, symmetrize);
        if (report) *report = data.report;
        return std::move(data.graph);
      }
      case Kind::community:
        return generate_community(nodes, community, seed);
      case Kind::preferential:
        return generate_preferential(nodes, attach, feature_dim, seed);
    }
    throw std::logic_error("unreachable dataset kind");
  }

  static Kind kind_from_string(const std::string& s) {
    if (s == "planetoid") return Kind::planetoid;
    if (s == "community") return Kind::community;
    if (s == "preferential") return Kind::preferential;
    throw std::invalid_argument("unknown dataset kind: " + s);
  }
};

struct ModelSpec {
  int hidden = 16;
  int layers = 2;
  std::uint64_t seed = 1;
  int train_epochs = 150;
  double learning_rate = 0.01;
  double train_dropout = 0.0;
  std::string weights_path;  // load instead of training when set

  GcnModel realize(const Graph& g) const {
    if (!weights_path.empty()) {
      GcnModel model = GcnModel::load(weights_path);
      model.check_compatible(g);
      return model;
    }
    const std::int64_t classes =
        g.has_labels()
            ? 1 + *std::max_element(g.labels.begin(), g.labels.end())
            : 2;
    GcnModel model = GcnModel::init(g.feature_dim(), hidden, classes, layers, seed);
    model.train_dropout = train_dropout;
    if (train_epochs > 0 && g.has_labels()) {
      TrainConfig cfg;
      cfg.epochs = train_epochs;
      cfg.learning_rate = learning_rate;
      cfg.seed = seed;
      model = train_minimal(model, g, cfg);
    }
    return model;
  }
};

struct PipelineSpec {
  std::vector<std::int32_t> clusters{1, 8, 16};
  std::vector<double> dropout_rates{0.0};
  PartitionStrategy strategy = PartitionStrategy::multilevel;
  ExplainMode mode = ExplainMode::worker_pool;
  ExplainMethod method = ExplainMethod::saliency;
  NodeAggregate aggregate = NodeAggregate::l2;
  GnnExplainerConfig gnnexplainer;
  int repeats = 3;
  std::uint64_t seed = 1;
  int workers = 0;
  std::int64_t memory_cap_bytes = 0;
  bool sequential_whole_graph = false;

  void validate() const {
    if (repeats < 1) throw std::invalid_argument("repeats must be >= 1");
    for (std::int32_t c : clusters)
      if (c < 1) throw std::invalid_argument("cluster counts must be >= 1");
    for (double d : dropout_rates)
      if (d < 0.0 || d > 1.0)
        throw std::invalid_argument("dropout rates must be in [0, 1]");
  }
};

struct OutputSpec {
  std::string table_csv;
  std::string table_json;
  std::string table_markdown;
  std::string report_json;
};

struct RunConfig {
  DatasetSpec dataset;
  ModelSpec model;
  PipelineSpec pipeline;
  OutputSpec output;

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }
};

inline RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig cfg;
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    if (d.contains("kind")) cfg.dataset.kind = DatasetSpec::kind_from_string(d.at("kind"));
    cfg.dataset.name = d.value("name", std::string(d.value("kind", "community")));
    cfg.dataset.content_path = d.value("content", cfg.dataset.content_path);
    cfg.dataset.cites_path = d.value("cites", cfg.dataset.cites_path);
    cfg.dataset.symmetrize = d.value("symmetrize", cfg.dataset.symmetrize);
    cfg.dataset.nodes = d.value("nodes", cfg.dataset.nodes);
    cfg.dataset.seed = d.value("seed", cfg.dataset.seed);
    cfg.dataset.attach = d.value("attach", cfg.dataset.attach);
    cfg.dataset.feature_dim = d.value("feature_dim", cfg.dataset.feature_dim);
    cfg.dataset.community.communities = d.value("communities", cfg.dataset.community.communities);
    cfg.dataset.community.p_intra = d.value("p_intra", cfg.dataset.community.p_intra);
    cfg.dataset.community.p_inter = d.value("p_inter", cfg.dataset.community.p_inter);
    cfg.dataset.community.feature_dim = d.value("feature_dim", cfg.dataset.community.feature_dim);
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    cfg.model.hidden = m.value("hidden", cfg.model.hidden);
    cfg.model.layers = m.value("layers", cfg.model.layers);
    cfg.model.seed = m.value("seed", cfg.model.seed);
    cfg.model.train_epochs = m.value("train_epochs", cfg.model.train_epochs);
    cfg.model.learning_rate = m.value("learning_rate", cfg.model.learning_rate);
    cfg.model.train_dropout = m.value("train_dropout", cfg.model.train_dropout);
    cfg.model.weights_path = m.value("weights", cfg.model.weights_path);
  }
  if (j.contains("pipeline")) {
    const auto& p = j.at("pipeline");
    if (p.contains("clusters"))
      cfg.pipeline.clusters = p.at("clusters").get<std::vector<std::int32_t>>();
    if (p.contains("dropout_rates"))
      cfg.pipeline.dropout_rates = p.at("dropout_rates").get<std::vector<double>>();
    if (p.contains("strategy"))
      cfg.pipeline.strategy = partition_strategy_from_string(p.at("strategy"));
    if (p.contains("mode")) cfg.pipeline.mode = explain_mode_from_string(p.at("mode"));
    if (p.contains("method")) cfg.pipeline.method = explain_method_from_string(p.at("method"));
    cfg.pipeline.repeats = p.value("repeats", cfg.pipeline.repeats);
    cfg.pipeline.seed = p.value("seed", cfg.pipeline.seed);
    cfg.pipeline.workers = p.value("workers", cfg.pipeline.workers);
    cfg.pipeline.memory_cap_bytes = p.value("memory_cap_bytes", cfg.pipeline.memory_cap_bytes);
    cfg.pipeline.sequential_whole_graph =
        p.value("sequential_whole_graph", cfg.pipeline.sequential_whole_graph);
    if (p.contains("gnnexplainer")) {
      const auto& ge = p.at("gnnexplainer");
      cfg.pipeline.gnnexplainer.epochs = ge.value("epochs", cfg.pipeline.gnnexplainer.epochs);
      cfg.pipeline.gnnexplainer.learning_rate =
          ge.value("learning_rate", cfg.pipeline.gnnexplainer.learning_rate);
      cfg.pipeline.gnnexplainer.size_coef =
          ge.value("size_coef", cfg.pipeline.gnnexplainer.size_coef);
      cfg.pipeline.gnnexplainer.entropy_coef =
          ge.value("entropy_coef", cfg.pipeline.gnnexplainer.entropy_coef);
    }
  }
  if (j.contains("output")) {
    const auto& o = j.at("output");
    cfg.output.table_csv = o.value("table_csv", "");
    cfg.output.table_json = o.value("table_json", "");
    cfg.output.table_markdown = o.value("table_markdown", "");
    cfg.output.report_json = o.value("report_json", "");
  }
  cfg.pipeline.validate();
  return cfg;
}

// Memory cap can also come from the environment (megabytes).
inline std::int64_t memory_cap_from_env() {
  const char* env = std::getenv("PAREX_MEMORY_CAP_MB");
  if (!env) return 0;
  return static_cast<std::int64_t>(std::strtoll(env, nullptr, 10)) * 1024 * 1024;
}

struct BenchResult {
  std::vector<FidelityReport> rows;
  double sequential_seconds = 0.0;
  std::int64_t sequential_invocations = 0;
  std::vector<std::string> skipped;  // "<c>/<d>: reason"
  std::string dataset;
  std::string method;

  nlohmann::json to_json() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& r : rows) rows_json.push_back(r.to_json());
    return {{"dataset", dataset},
            {"method", method},
            {"sequential_seconds", sequential_seconds},
            {"sequential_invocations", sequential_invocations},
            {"skipped", skipped},
            {"rows", rows_json}};
  }
};

namespace detail {

inline ParallelOptions make_parallel_options(const PipelineSpec& pipe, std::int32_t c,
                                             double dropout_rate) {
  ParallelOptions opts;
  opts.clusters = c;
  opts.strategy = pipe.strategy;
  opts.restore_prob = 1.0 - dropout_rate;
  opts.partition_seed = pipe.seed;
  opts.recon_seed = pipe.seed;
  opts.mode = pipe.mode;
  opts.workers = pipe.workers;
  opts.memory_cap_bytes =
      pipe.memory_cap_bytes > 0 ? pipe.memory_cap_bytes : memory_cap_from_env();
  opts.explain.method = pipe.method;
  opts.explain.aggregate = pipe.aggregate;
  opts.explain.gnnexplainer = pipe.gnnexplainer;
  opts.explain.seed = pipe.seed;
  return opts;
}

}  // namespace detail

// Runs the (clusters x dropout rate) grid. Every cell's fidelity metrics are
// computed against the full-reconstruction run at the same cluster count;
// execution times average over `repeats` runs. Cells that blow the memory
// cap are skipped and noted, and the sweep continues.
inline BenchResult run_benchmark(const RunConfig& cfg) {
  cfg.pipeline.validate();
  const Graph g = cfg.dataset.load();
  const GcnModel model = cfg.model.realize(g);

  BenchResult result;
  result.dataset = cfg.dataset.name;
  result.method = to_string(cfg.pipeline.method);

  ExplainOptions seq_opts;
  seq_opts.method = cfg.pipeline.method;
  seq_opts.aggregate = cfg.pipeline.aggregate;
  seq_opts.gnnexplainer = cfg.pipeline.gnnexplainer;
  seq_opts.seed = cfg.pipeline.seed;
  const SequentialResult sequential =
      explain_all_sequential(model, g, seq_opts, {}, cfg.pipeline.sequential_whole_graph);
  result.sequential_seconds = sequential.explain_seconds;
  result.sequential_invocations = sequential.invocations;

  for (std::int32_t c : cfg.pipeline.clusters) {
    // Full-reconstruction baseline for this cluster count.
    std::vector<Explanation> baseline;
    try {
      baseline =
          explain_all_parallel(model, g, detail::make_parallel_options(cfg.pipeline, c, 0.0))
              .explanations;
    } catch (const MemoryCapExceeded& e) {
      for (double d : cfg.pipeline.dropout_rates) {
        std::ostringstream note;
        note << c << "/" << d << ": skipped: memory (" << e.what() << ")";
        result.skipped.push_back(note.str());
      }
      continue;
    }

    for (double dropout : cfg.pipeline.dropout_rates) {
      FidelityReport row;
      row.clusters = c;
      row.dropout_rate = dropout;
      row.method = to_string(cfg.pipeline.method);
      row.strategy = to_string(cfg.pipeline.strategy);
      row.dataset = cfg.dataset.name;
      row.model = "gcn-" + std::to_string(cfg.model.layers) + "x" +
                  std::to_string(cfg.model.hidden);
      try {
        double total_time = 0.0;
        double total_setup = 0.0;
        std::optional<ParallelResult> last;
        for (int repeat = 0; repeat < cfg.pipeline.repeats; ++repeat) {
          ParallelResult run = explain_all_parallel(
              model, g, detail::make_parallel_options(cfg.pipeline, c, dropout));
          total_time += run.explain_seconds;
          total_setup += run.setup_seconds;
          last = std::move(run);
        }
        row.exec_time_s = total_time / cfg.pipeline.repeats;
        row.setup_time_s = total_setup / cfg.pipeline.repeats;
        row.delta_nodes_pct = last->delta.delta_nodes_pct;
        row.delta_edges_pct = last->delta.delta_edges_pct;
        for (double threshold : row.thresholds) {
          row.affected_explanations_pct.push_back(
              affected_explanations(baseline, last->explanations, threshold));
          row.affected_nodes_pct.push_back(
              affected_nodes(baseline, last->explanations, threshold));
        }
        result.rows.push_back(std::move(row));
      } catch (const MemoryCapExceeded& e) {
        std::ostringstream note;
        note << c << "/" << dropout << ": skipped: memory (" << e.what() << ")";
        result.skipped.push_back(note.str());
      }
    }
  }

  std::sort(result.rows.begin(), result.rows.end(), [](const auto& a, const auto& b) {
    return std::pair(a.clusters, a.dropout_rate) < std::pair(b.clusters, b.dropout_rate);
  });

  const auto write_file = [](const std::string& path, const std::string& body) {
    if (path.empty()) return;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write output file: " + path);
    out << body;
  };
  if (!result.rows.empty()) {
    write_file(cfg.output.table_csv, emit_table(result.rows, TableFormat::csv));
    write_file(cfg.output.table_json, emit_table(result.rows, TableFormat::json));
    write_file(cfg.output.table_markdown, emit_table(result.rows, TableFormat::markdown));
  }
  write_file(cfg.output.report_json, result.to_json().dump(2) + "\n");
  return result;
}

enum class FaultInjection { none, drop_restored_edge };

struct VerifyCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyReport {
  std::vector<VerifyCheck> checks;
  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(),
                       [](const VerifyCheck& c) { return c.passed; });
  }
};

namespace detail {

inline double max_normalized_diff(std::span<const Explanation> a,
                                  std::span<const Explanation> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::size_t bi = 0, ti = 0;
    const auto& x = a[i];
    const auto& y = b[i];
    while (bi < x.nodes.size() || ti < y.nodes.size()) {
      double xv = 0.0, yv = 0.0;
      if (ti >= y.nodes.size() || (bi < x.nodes.size() && x.nodes[bi] < y.nodes[ti])) {
        xv = x.normalized[bi++];
      } else if (bi >= x.nodes.size() || y.nodes[ti] < x.nodes[bi]) {
        yv = y.normalized[ti++];
      } else {
        xv = x.normalized[bi++];
        yv = y.normalized[ti++];
      }
      worst = std::max(worst, std::abs(xv - yv));
    }
  }
  return worst;
}

// Equivalence run with an optional structural fault, used both by the
// verifier and as its own negative control. Sets `injected` when the fault
// was actually applied (a zero-cut partition has nothing to drop).
inline double equivalence_gap(const GcnModel& model, const Graph& g, std::int32_t c,
                              PartitionStrategy strategy, ExplainMethod method,
                              std::uint64_t seed, FaultInjection fault,
                              bool* injected = nullptr) {
  ExplainOptions opts;
  opts.method = method;
  opts.seed = seed;
  const SequentialResult sequential = explain_all_sequential(model, g, opts);

  const Partition part = partition(g, c, strategy, seed);
  ReconstructedGraph recon = full_reconstruct(g, part, model.layer_count);
  if (fault == FaultInjection::drop_restored_edge && !recon.restored.empty()) {
    if (injected) *injected = true;
    const auto [cluster, u, v] = recon.restored.back();
    const std::int64_t uu = recon.union_node_of(cluster, u);
    const std::int64_t vv = recon.union_node_of(cluster, v);
    std::int64_t index = -1, e = 0;
    for (NodeId a = 0; a < recon.union_graph.node_count && index < 0; ++a)
      for (NodeId b : recon.union_graph.out_neighbors(a)) {
        if (a == uu && b == vv) {
          index = e;
          break;
        }
        ++e;
      }
    recon = remove_union_edge(recon, index);
  }
  const BatchSchedule schedule = build_batches(recon, part);
  std::vector<Explanation> parallel(g.node_count);
  for (const auto& batch : schedule.batches)
    for (std::int64_t id : batch) {
      Explanation e = explain_target(model, recon.union_graph, static_cast<NodeId>(id), opts,
                                     &recon.origin_of);
      parallel[e.target] = std::move(e);
    }
  return max_normalized_diff(sequential.explanations, parallel);
}

}  // namespace detail

// Bundles the invariant suites into one pass/fail summary: equivalence of
// parallel and sequential explanations, gradient correctness, batch-law and
// independence checks, and metric oracle agreement.
inline VerifyReport verify(const RunConfig& cfg, FaultInjection fault = FaultInjection::none) {
  VerifyReport report;
  const auto add = [&](std::string name, bool passed, std::string detail) {
    report.checks.push_back({std::move(name), passed, std::move(detail)});
  };

  Graph g;
  GcnModel model;
  try {
    g = cfg.dataset.load();
    model = cfg.model.realize(g);
    add("setup", true, "dataset and model ready");
  } catch (const std::exception& e) {
    add("setup", false, e.what());
    return report;
  }

  {
    double worst = 0.0;
    std::string detail;
    bool passed = true;
    bool injected = false;
    try {
      for (std::int32_t c : {2, std::min<std::int32_t>(8, g.node_count)}) {
        for (auto strategy : {PartitionStrategy::multilevel, PartitionStrategy::random}) {
          for (auto method : {ExplainMethod::saliency, ExplainMethod::deconvnet,
                              ExplainMethod::guided}) {
            worst = std::max(worst,
                             detail::equivalence_gap(model, g, c, strategy, method,
                                                     cfg.pipeline.seed, fault, &injected));
          }
        }
      }
      passed = worst <= 1e-9;
      detail = "max |delta normalized| = " + std::to_string(worst);
      if (fault != FaultInjection::none && !injected) {
        passed = false;
        detail = "fault injection found no restored edge to drop";
      }
    } catch (const std::exception& e) {
      passed = false;
      detail = e.what();
    }
    add("equivalence", passed, detail);
  }

  {
    bool passed = true;
    std::string detail = "finite differences, linearity and locality agree";
    auto rng = make_engine(cfg.pipeline.seed, 0x76ULL);
    try {
      for (int trial = 0; trial < 10 && passed; ++trial) {
        CommunityParams params;
        params.communities = 3;
        const Graph random_graph =
            generate_community(16 + static_cast<NodeId>(rng() % 10), params, rng());
        const GcnModel random_model =
            GcnModel::init(random_graph.feature_dim(), 6, 3, 2, rng());
        const NodeId target = static_cast<NodeId>(rng() % random_graph.node_count);
        const std::int32_t cls = static_cast<std::int32_t>(rng() % 3);
        const Matrix analytic =
            input_gradient(random_model, random_graph, target, cls, BackwardRule::standard);
        for (int probe = 0; probe < 8; ++probe) {
          const NodeId v = static_cast<NodeId>(rng() % random_graph.node_count);
          const std::int64_t j =
              static_cast<std::int64_t>(rng() % random_graph.feature_dim());
          const double h = 1e-5;
          Graph plus = random_graph;
          plus.features(v, j) += h;
          Graph minus = random_graph;
          minus.features(v, j) -= h;
          const double fd = (forward(random_model, plus)(target, cls) -
                             forward(random_model, minus)(target, cls)) /
                            (2.0 * h);
          const double a = analytic(v, j);
          const bool ok = std::abs(a) > 1e-6 ? std::abs(fd - a) / std::abs(a) < 1e-4
                                             : std::abs(fd - a) < 1e-6;
          if (!ok) {
            passed = false;
            detail = "finite-difference mismatch at node " + std::to_string(v);
            break;
          }
        }
        const std::vector<NodeId> targets{target,
                                          static_cast<NodeId>((target + 1) %
                                                              random_graph.node_count)};
        const MixedGradientReport mixed =
            mixed_gradient_demo(random_model, random_graph, targets);
        if (mixed.linearity_max_abs_dev > 1e-12) {
          passed = false;
          detail = "linearity deviation " + std::to_string(mixed.linearity_max_abs_dev);
        }
      }
    } catch (const std::exception& e) {
      passed = false;
      detail = e.what();
    }
    add("gradients", passed, detail);
  }

  {
    bool passed = true;
    std::string detail = "batch law and independence hold";
    try {
      auto rng = make_engine(cfg.pipeline.seed, 0x73ULL);
      for (int trial = 0; trial < 10 && passed; ++trial) {
        const NodeId n = 20 + static_cast<NodeId>(rng() % 40);
        const Graph random_graph = generate_community(n, {}, rng());
        const std::int32_t c = 2 + static_cast<std::int32_t>(rng() % 5);
        const Partition part =
            partition(random_graph, std::min<NodeId>(c, n), PartitionStrategy::random, rng());
        const ReconstructedGraph recon = full_reconstruct(random_graph, part, 2);
        const BatchSchedule schedule = build_batches(recon, part);
        const std::int64_t expected =
            *std::max_element(part.cluster_sizes.begin(), part.cluster_sizes.end());
        if (schedule.batch_count != expected) {
          passed = false;
          detail = "batch count differs from max cluster size";
        }
        if (!verify_independence(schedule, recon, 2).ok()) {
          passed = false;
          detail = "independence violation";
        }
      }
    } catch (const std::exception& e) {
      passed = false;
      detail = e.what();
    }
    add("scheduling", passed, detail);
  }

  {
    bool passed = true;
    std::string detail = "affected metrics match the brute-force reference";
    auto rng = make_engine(cfg.pipeline.seed, 0x6dULL);
    for (int trial = 0; trial < 20 && passed; ++trial) {
      std::vector<Explanation> base(3), test(3);
      for (int t = 0; t < 3; ++t) {
        base[t].target = test[t].target = t;
        for (NodeId v = 0; v < 6; ++v) {
          const double bv = static_cast<double>(rng() % 1000) / 999.0;
          base[t].nodes.push_back(v);
          base[t].raw.push_back(bv);
          if (rng() % 4 != 0) {
            test[t].nodes.push_back(v);
            test[t].raw.push_back(static_cast<double>(rng() % 1000) / 999.0);
          }
        }
        base[t].normalized = base[t].raw;
        test[t].normalized = test[t].raw;
      }
      for (double threshold : default_thresholds()) {
        std::int64_t affected = 0, pairs = 0, hit_targets = 0;
        for (int t = 0; t < 3; ++t) {
          bool any = false;
          for (NodeId v = 0; v < 6; ++v) {
            const auto bv = base[t].normalized_of(v);
            const auto tv = test[t].normalized_of(v);
            if (bv) ++pairs;
            const double delta = std::abs(bv.value_or(0.0) - tv.value_or(0.0));
            if (delta > threshold) {
              ++affected;
              any = true;
            }
          }
          if (any) ++hit_targets;
        }
        const double expect_nodes = 100.0 * static_cast<double>(affected) /
                                    static_cast<double>(pairs);
        const double expect_expl = 100.0 * static_cast<double>(hit_targets) / 3.0;
        if (std::abs(affected_nodes(base, test, threshold) - expect_nodes) > 1e-12 ||
            std::abs(affected_explanations(base, test, threshold) - expect_expl) > 1e-12) {
          passed = false;
          detail = "metric mismatch at threshold " + std::to_string(threshold);
        }
      }
    }
    add("metrics", passed, detail);
  }

  return report;
}

}  // namespace parex
