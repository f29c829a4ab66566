#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "parex/gcn.hpp"
#include "parex/graph.hpp"
#include "parex/partition.hpp"
#include "parex/reconstruct.hpp"
#include "parex/rng.hpp"
#include "parex/schedule.hpp"
#include "parex/thread_pool.hpp"

namespace parex {

enum class ExplainMethod { saliency, deconvnet, guided, gnnexplainer };

inline ExplainMethod explain_method_from_string(const std::string& s) {
  if (s == "saliency") return ExplainMethod::saliency;
  if (s == "deconvnet") return ExplainMethod::deconvnet;
  if (s == "guided") return ExplainMethod::guided;
  if (s == "gnnexplainer") return ExplainMethod::gnnexplainer;
  throw std::invalid_argument("unknown explain method: " + s);
}

inline const char* to_string(ExplainMethod m) {
  switch (m) {
    case ExplainMethod::saliency: return "saliency";
    case ExplainMethod::deconvnet: return "deconvnet";
    case ExplainMethod::guided: return "guided";
    case ExplainMethod::gnnexplainer: return "gnnexplainer";
  }
  return "?";
}

inline bool is_gradient_method(ExplainMethod m) { return m != ExplainMethod::gnnexplainer; }

inline BackwardRule backward_rule_of(ExplainMethod m) {
  switch (m) {
    case ExplainMethod::deconvnet: return BackwardRule::deconv;
    case ExplainMethod::guided: return BackwardRule::guided;
    default: return BackwardRule::standard;
  }
}

// How a node's feature-level gradient row collapses to one importance value.
enum class NodeAggregate { l2, l1, max_abs };

inline double aggregate_row(const Matrix& m, NodeId row, NodeAggregate kind) {
  double acc = 0.0;
  for (std::int64_t j = 0; j < m.cols(); ++j) {
    const double a = std::abs(m(row, j));
    switch (kind) {
      case NodeAggregate::l2: acc += a * a; break;
      case NodeAggregate::l1: acc += a; break;
      case NodeAggregate::max_abs: acc = std::max(acc, a); break;
    }
  }
  return kind == NodeAggregate::l2 ? std::sqrt(acc) : acc;
}

// Per-target node importances over the target's receptive field. normalized
// is the min-max view in [0, 1]; with fewer than two distinct raw values it
// degenerates to all-1 (or all-0 when every score is zero).
struct Explanation {
  NodeId target = 0;
  std::int32_t class_explained = 0;
  ExplainMethod method = ExplainMethod::saliency;
  std::vector<NodeId> nodes;       // sorted origin ids, subset of k-hop set
  std::vector<double> raw;         // >= 0
  std::vector<double> normalized;  // [0, 1]

  void normalize() {
    normalized.resize(raw.size());
    if (raw.empty()) return;
    const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
    const double lo = *lo_it, hi = *hi_it;
    if (hi > lo) {
      for (std::size_t i = 0; i < raw.size(); ++i) normalized[i] = (raw[i] - lo) / (hi - lo);
    } else {
      std::fill(normalized.begin(), normalized.end(), hi > 0.0 ? 1.0 : 0.0);
    }
  }

  std::optional<double> normalized_of(NodeId node) const {
    const auto it = std::lower_bound(nodes.begin(), nodes.end(), node);
    if (it == nodes.end() || *it != node) return std::nullopt;
    return normalized[static_cast<std::size_t>(it - nodes.begin())];
  }
};

struct GnnExplainerConfig {
  int epochs = 100;
  double learning_rate = 0.01;
  double size_coef = 0.005;
  double entropy_coef = 1.0;

  void validate() const {
    if (epochs < 1 || learning_rate <= 0.0 || size_coef < 0.0 || entropy_coef < 0.0)
      throw std::invalid_argument("gnnexplainer hyperparameters must be positive");
  }
};

struct ExplainOptions {
  ExplainMethod method = ExplainMethod::saliency;
  NodeAggregate aggregate = NodeAggregate::l2;
  GnnExplainerConfig gnnexplainer;
  std::uint64_t seed = 0;  // per-target streams derive from (seed, target)
};

namespace detail {

inline Explanation gradient_explanation(const GcnModel& model, const Graph& g,
                                        const ForwardTrace& trace, NodeId target,
                                        std::span<const NodeId> keys,
                                        std::span<const NodeId> key_rows, NodeId target_row,
                                        const ExplainOptions& opts) {
  Explanation e;
  e.method = opts.method;
  e.target = target;
  e.class_explained = argmax_class(trace.logits, target_row);
  const TargetClass tc{target_row, e.class_explained};
  const Matrix grad =
      input_gradient_multi(model, g, trace, {&tc, 1}, backward_rule_of(opts.method));
  e.nodes.assign(keys.begin(), keys.end());
  e.raw.resize(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i)
    e.raw[i] = aggregate_row(grad, key_rows[i], opts.aggregate);
  e.normalize();
  return e;
}

// Sigmoid-masked propagation: mask[e] scales the in-edge at CSR position e;
// the self term stays unmasked.
inline Matrix propagate_masked(const Graph& g, const Matrix& m,
                               const std::vector<double>& mask) {
  Matrix out(m.rows(), m.cols());
  const std::int64_t cols = m.cols();
  std::vector<double> inv_sqrt(g.node_count);
  for (NodeId v = 0; v < g.node_count; ++v) inv_sqrt[v] = 1.0 / std::sqrt(g.norm_degree[v]);
  for (NodeId v = 0; v < g.node_count; ++v) {
    double* dst = out.row(v);
    for (std::int64_t e = g.in_offsets[v]; e < g.in_offsets[v + 1]; ++e) {
      const NodeId u = g.in_sources[e];
      const double w = inv_sqrt[u] * inv_sqrt[v] * mask[e];
      const double* src = m.row(u);
      for (std::int64_t j = 0; j < cols; ++j) dst[j] += w * src[j];
    }
    const double self = 1.0 / g.norm_degree[v];
    const double* src = m.row(v);
    for (std::int64_t j = 0; j < cols; ++j) dst[j] += self * src[j];
  }
  return out;
}

inline Matrix propagate_transpose_masked(const Graph& g, const Matrix& m,
                                         const std::vector<double>& mask,
                                         const std::vector<std::int64_t>& in_pos_of_out) {
  Matrix out(m.rows(), m.cols());
  const std::int64_t cols = m.cols();
  std::vector<double> inv_sqrt(g.node_count);
  for (NodeId v = 0; v < g.node_count; ++v) inv_sqrt[v] = 1.0 / std::sqrt(g.norm_degree[v]);
  for (NodeId u = 0; u < g.node_count; ++u) {
    double* dst = out.row(u);
    for (std::int64_t e = g.out_offsets[u]; e < g.out_offsets[u + 1]; ++e) {
      const NodeId v = g.out_targets[e];
      const double w = inv_sqrt[u] * inv_sqrt[v] * mask[in_pos_of_out[e]];
      const double* src = m.row(v);
      for (std::int64_t j = 0; j < cols; ++j) dst[j] += w * src[j];
    }
    const double self = 1.0 / g.norm_degree[u];
    const double* src = m.row(u);
    for (std::int64_t j = 0; j < cols; ++j) dst[j] += self * src[j];
  }
  return out;
}

inline std::vector<std::int64_t> map_out_to_in_positions(const Graph& g) {
  std::vector<std::int64_t> map(static_cast<std::size_t>(g.edge_count));
  std::vector<std::int64_t> cursor(g.in_offsets.begin(), g.in_offsets.end() - 1);
  // Out edges of ascending u visit each in-list in ascending source order.
  for (NodeId u = 0; u < g.node_count; ++u)
    for (std::int64_t e = g.out_offsets[u]; e < g.out_offsets[u + 1]; ++e)
      map[e] = cursor[g.out_targets[e]]++;
  return map;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Edge-mask optimizer on a target's k-hop subgraph: minimizes the
// cross-entropy of the masked prediction against the unmasked argmax plus
// size and entropy penalties, by Adam on the mask logits. Node importance is
// the best mask among the node's outgoing edges; the target itself scores 1.
inline Explanation gnnexplainer_explanation(const GcnModel& model, const KHopSubgraph& sub,
                                            const ExplainOptions& opts) {
  const GnnExplainerConfig& cfg = opts.gnnexplainer;
  cfg.validate();
  const Graph& g = sub.graph;
  const NodeId t = sub.local_target;
  const NodeId target_origin = sub.origin[t];

  Explanation e;
  e.method = ExplainMethod::gnnexplainer;
  e.target = target_origin;

  if (g.edge_count == 0) {
    e.class_explained = argmax_class(forward(model, g), t);
    e.nodes = {target_origin};
    e.raw = {1.0};
    e.normalize();
    return e;
  }

  const Matrix unmasked = forward(model, g);
  const std::int32_t cls = argmax_class(unmasked, t);
  e.class_explained = cls;

  const std::int64_t m = g.edge_count;
  std::vector<double> theta(m), mask(m), grad_mask(m);
  std::vector<double> adam_m(m, 0.0), adam_v(m, 0.0);
  for (NodeId v = 0; v < g.node_count; ++v)
    for (std::int64_t pos = g.in_offsets[v]; pos < g.in_offsets[v + 1]; ++pos)
      theta[pos] = 0.1 * normal_draw(opts.seed, 0x676eULL,
                                     static_cast<std::uint64_t>(target_origin),
                                     static_cast<std::uint64_t>(sub.origin[g.in_sources[pos]]),
                                     static_cast<std::uint64_t>(sub.origin[v]));

  const auto in_pos_of_out = map_out_to_in_positions(g);
  const int layers = model.layer_count;
  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::int64_t i = 0; i < m; ++i) mask[i] = sigmoid(theta[i]);

    std::vector<Matrix> inputs(layers), pre_activation(layers);
    Matrix h = g.features;
    for (int l = 0; l < layers; ++l) {
      inputs[l] = std::move(h);
      pre_activation[l] = matmul(propagate_masked(g, inputs[l], mask), model.weights[l]);
      h = l + 1 < layers ? relu(pre_activation[l]) : pre_activation[l];
    }
    const Matrix& logits = pre_activation[layers - 1];

    // d loss / d logits row t (softmax cross-entropy toward cls).
    Matrix g_z(g.node_count, model.class_count());
    {
      double max_logit = logits(t, 0);
      for (std::int64_t j = 1; j < logits.cols(); ++j)
        max_logit = std::max(max_logit, logits(t, j));
      double denom = 0.0;
      for (std::int64_t j = 0; j < logits.cols(); ++j)
        denom += std::exp(logits(t, j) - max_logit);
      for (std::int64_t j = 0; j < logits.cols(); ++j)
        g_z(t, j) = std::exp(logits(t, j) - max_logit) / denom - (j == cls ? 1.0 : 0.0);
    }

    std::fill(grad_mask.begin(), grad_mask.end(), 0.0);
    for (int l = layers - 1; l >= 0; --l) {
      const Matrix g_p = matmul_transposed(g_z, model.weights[l]);
      // d propagate / d mask[e]: w(u,v) * <g_p[v], inputs[l][u]>.
      std::vector<double> inv_sqrt(g.node_count);
      for (NodeId v = 0; v < g.node_count; ++v)
        inv_sqrt[v] = 1.0 / std::sqrt(g.norm_degree[v]);
      for (NodeId v = 0; v < g.node_count; ++v)
        for (std::int64_t pos = g.in_offsets[v]; pos < g.in_offsets[v + 1]; ++pos) {
          const NodeId u = g.in_sources[pos];
          double dot = 0.0;
          for (std::int64_t j = 0; j < g_p.cols(); ++j) dot += g_p(v, j) * inputs[l](u, j);
          grad_mask[pos] += inv_sqrt[u] * inv_sqrt[v] * dot;
        }
      if (l > 0) {
        const Matrix g_h = propagate_transpose_masked(g, g_p, mask, in_pos_of_out);
        g_z = relu_backward(g_h, pre_activation[l - 1], BackwardRule::standard);
      }
    }

    for (std::int64_t i = 0; i < m; ++i) {
      const double s = std::clamp(mask[i], 1e-12, 1.0 - 1e-12);
      const double d_reg = cfg.size_coef + cfg.entropy_coef * std::log((1.0 - s) / s);
      const double d_theta = (grad_mask[i] + d_reg) * s * (1.0 - s);
      adam_m[i] = beta1 * adam_m[i] + (1.0 - beta1) * d_theta;
      adam_v[i] = beta2 * adam_v[i] + (1.0 - beta2) * d_theta * d_theta;
      const double mhat = adam_m[i] / (1.0 - std::pow(beta1, epoch));
      const double vhat = adam_v[i] / (1.0 - std::pow(beta2, epoch));
      theta[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + adam_eps);
    }
  }

  e.nodes.resize(g.node_count);
  e.raw.assign(g.node_count, 0.0);
  for (NodeId v = 0; v < g.node_count; ++v) e.nodes[v] = sub.origin[v];
  for (NodeId v = 0; v < g.node_count; ++v)
    for (std::int64_t pos = g.in_offsets[v]; pos < g.in_offsets[v + 1]; ++pos) {
      const NodeId u = g.in_sources[pos];
      e.raw[u] = std::max(e.raw[u], sigmoid(theta[pos]));
    }
  e.raw[t] = 1.0;
  e.normalize();
  return e;
}

}  // namespace detail

// Explains one target on its extracted k-hop subgraph. origin_map translates
// host ids (identity for the original graph, origin_of for a reconstructed
// union); all reported node ids are origin ids.
inline Explanation explain_target(const GcnModel& model, const Graph& host, NodeId host_target,
                                  const ExplainOptions& opts,
                                  const std::vector<NodeId>* origin_map = nullptr) {
  const KHopSubgraph sub =
      extract_khop_subgraph(host, host_target, model.layer_count, origin_map);
  if (opts.method == ExplainMethod::gnnexplainer)
    return detail::gnnexplainer_explanation(model, sub, opts);
  const ForwardTrace trace = forward_trace(model, sub.graph);
  std::vector<NodeId> rows(sub.graph.node_count);
  for (NodeId i = 0; i < sub.graph.node_count; ++i) rows[i] = i;
  return detail::gradient_explanation(model, sub.graph, trace, sub.origin[sub.local_target],
                                      sub.origin, rows, sub.local_target, opts);
}

// Whole-graph variant: one full forward/backward per target, no extraction.
inline Explanation explain_target_whole_graph(const GcnModel& model, const Graph& g,
                                              NodeId target, const ExplainOptions& opts) {
  if (opts.method == ExplainMethod::gnnexplainer)
    return explain_target(model, g, target, opts);  // optimizer is subgraph-based by design
  const ForwardTrace trace = forward_trace(model, g);
  const KHopSet khop = khop_in_neighborhood(g, target, model.layer_count);
  return detail::gradient_explanation(model, g, trace, target, khop.members, khop.members,
                                      target, opts);
}

struct SequentialResult {
  std::vector<Explanation> explanations;  // ascending target id
  double explain_seconds = 0.0;
  std::int64_t invocations = 0;
};

// Baseline: one isolated computation per target, in id order.
inline SequentialResult explain_all_sequential(const GcnModel& model, const Graph& g,
                                               const ExplainOptions& opts,
                                               std::vector<NodeId> targets = {},
                                               bool whole_graph = false) {
  model.check_compatible(g);
  if (targets.empty()) {
    targets.resize(g.node_count);
    for (NodeId v = 0; v < g.node_count; ++v) targets[v] = v;
  } else {
    std::sort(targets.begin(), targets.end());
    for (NodeId t : targets) g.check_node(t);
  }
  SequentialResult result;
  result.explanations.reserve(targets.size());
  const auto start = std::chrono::steady_clock::now();
  for (NodeId t : targets) {
    result.explanations.push_back(whole_graph ? explain_target_whole_graph(model, g, t, opts)
                                              : explain_target(model, g, t, opts));
    ++result.invocations;
  }
  result.explain_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

enum class ExplainMode { worker_pool, union_forward };

inline ExplainMode explain_mode_from_string(const std::string& s) {
  if (s == "worker-pool") return ExplainMode::worker_pool;
  if (s == "union-forward") return ExplainMode::union_forward;
  throw std::invalid_argument("unknown explain mode: " + s);
}

struct MemoryCapExceeded : std::runtime_error {
  MemoryCapExceeded(std::int64_t required, std::int64_t cap, const DeltaMetrics& delta)
      : std::runtime_error("reconstruction needs " + std::to_string(required) +
                           " bytes, over the cap of " + std::to_string(cap) +
                           " (delta_nodes " + std::to_string(delta.delta_nodes_pct) +
                           "%, delta_edges " + std::to_string(delta.delta_edges_pct) + "%)"),
        required_bytes(required), cap_bytes(cap), delta(delta) {}
  std::int64_t required_bytes;
  std::int64_t cap_bytes;
  DeltaMetrics delta;
};

struct ParallelOptions {
  std::int32_t clusters = 8;
  PartitionStrategy strategy = PartitionStrategy::multilevel;
  double restore_prob = 1.0;  // p = 1 - dropout rate
  std::uint64_t partition_seed = 1;
  std::uint64_t recon_seed = 1;
  ExplainMode mode = ExplainMode::worker_pool;
  int workers = 0;  // 0 = hardware concurrency
  std::int64_t memory_cap_bytes = 0;  // 0 = unlimited
  std::vector<NodeId> targets;        // empty = all original nodes
  ExplainOptions explain;
};

struct ParallelResult {
  std::vector<Explanation> explanations;  // ascending target id
  double explain_seconds = 0.0;
  double setup_seconds = 0.0;  // partition + reconstruction + scheduling
  DeltaMetrics delta;
  std::int64_t added_nodes = 0;
  std::int64_t added_edges = 0;
  std::int64_t cut_edges = 0;
  std::int64_t batch_count = 0;
  double partition_balance = 0.0;
};

// Full pipeline: partition -> reconstruct -> schedule -> batched explanation.
// worker-pool hands each scheduled node's cluster-subgraph task to a fixed
// pool; union-forward runs one multi-target forward/backward over the
// disconnected union per batch (safe: batch members share no neighbors).
// Both modes produce identical explanations for deterministic methods.
inline ParallelResult explain_all_parallel(const GcnModel& model, const Graph& g,
                                           const ParallelOptions& opts) {
  model.check_compatible(g);
  if (opts.restore_prob < 0.0 || opts.restore_prob > 1.0)
    throw std::invalid_argument("restore_prob must be in [0, 1]");

  const auto setup_start = std::chrono::steady_clock::now();
  const Partition part = partition(g, opts.clusters, opts.strategy, opts.partition_seed);
  ReconstructionConfig rc;
  rc.k_hops = model.layer_count;
  rc.restore_prob = opts.restore_prob;
  rc.seed = opts.recon_seed;
  const ReconstructedGraph recon = dropout_reconstruct(g, part, rc);

  ParallelResult result;
  result.delta = delta_metrics(g, recon);
  result.added_nodes = recon.added_nodes;
  result.added_edges = recon.added_edges;
  result.cut_edges = recon.cut_edge_count;
  result.partition_balance = balance(part);
  if (opts.memory_cap_bytes > 0 && recon.approx_memory_bytes() > opts.memory_cap_bytes)
    throw MemoryCapExceeded(recon.approx_memory_bytes(), opts.memory_cap_bytes, result.delta);

  const BatchSchedule schedule = build_batches(recon, part, opts.targets);
  result.batch_count = schedule.batch_count;
  result.setup_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - setup_start).count();

  // Slot per target, indexed by rank in the sorted target list.
  std::vector<NodeId> targets = opts.targets;
  if (targets.empty()) {
    targets.resize(g.node_count);
    for (NodeId v = 0; v < g.node_count; ++v) targets[v] = v;
  } else {
    std::sort(targets.begin(), targets.end());
  }
  result.explanations.resize(targets.size());
  const auto slot_of = [&](NodeId origin) {
    return static_cast<std::size_t>(
        std::lower_bound(targets.begin(), targets.end(), origin) - targets.begin());
  };

  const Graph& u = recon.union_graph;
  const auto explain_start = std::chrono::steady_clock::now();
  if (opts.mode == ExplainMode::worker_pool || !is_gradient_method(opts.explain.method)) {
    const unsigned workers = opts.workers > 0 ? static_cast<unsigned>(opts.workers)
                                              : std::thread::hardware_concurrency();
    const bool threaded =
        opts.mode == ExplainMode::worker_pool && is_gradient_method(opts.explain.method);
    // GNNExplainer tasks are already per-target optimizations; under
    // union-forward mode they simply run batch by batch on one thread.
    ThreadPool pool(threaded ? workers : 1);
    for (const auto& batch : schedule.batches) {
      for (std::int64_t union_id : batch) {
        pool.submit([&, union_id] {
          Explanation e = explain_target(model, u, static_cast<NodeId>(union_id),
                                         opts.explain, &recon.origin_of);
          result.explanations[slot_of(e.target)] = std::move(e);
        });
      }
      pool.wait_idle();
    }
  } else {
    // One forward/backward over the whole disconnected union per batch.
    const BackwardRule rule = backward_rule_of(opts.explain.method);
    for (const auto& batch : schedule.batches) {
      const ForwardTrace trace = forward_trace(model, u);
      std::vector<TargetClass> tcs;
      tcs.reserve(batch.size());
      for (std::int64_t id : batch)
        tcs.push_back({static_cast<NodeId>(id),
                       argmax_class(trace.logits, static_cast<NodeId>(id))});
      const Matrix grad = input_gradient_multi(model, u, trace, tcs, rule);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const NodeId union_id = static_cast<NodeId>(batch[i]);
        Explanation e;
        e.method = opts.explain.method;
        e.target = recon.origin_of[union_id];
        e.class_explained = tcs[i].cls;
        const KHopSet khop = khop_in_neighborhood(u, union_id, model.layer_count);
        e.nodes.reserve(khop.members.size());
        e.raw.reserve(khop.members.size());
        for (NodeId member : khop.members) {
          e.nodes.push_back(recon.origin_of[member]);
          e.raw.push_back(aggregate_row(grad, member, opts.explain.aggregate));
        }
        e.normalize();
        result.explanations[slot_of(e.target)] = std::move(e);
      }
    }
  }
  result.explain_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - explain_start).count();
  return result;
}

}  // namespace parex
