#pragma once

#include <algorithm>
#include <cstdint>
#include <queue>
#include <stdexcept>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "parex/graph.hpp"
#include "parex/partition.hpp"
#include "parex/rng.hpp"

namespace parex {

struct ReconstructionConfig {
  int k_hops = 2;            // = GNN layer count
  double restore_prob = 1.0;  // p; the CLI exposes dropout rate d = 1 - p
  std::uint64_t seed = 0;

  void validate() const {
    if (k_hops < 1) throw std::invalid_argument("k_hops must be >= 1");
    if (restore_prob < 0.0 || restore_prob > 1.0)
      throw std::invalid_argument("restore_prob must be in [0, 1]");
  }
};

// Disconnected union of per-cluster subgraphs. Within each cluster block the
// nodes (originals plus replicas) are sorted by origin id, so local order
// matches origin order and k-hop extraction is canonical.
struct ReconstructedGraph {
  Graph union_graph;
  std::vector<NodeId> origin_of;          // union id -> original id
  std::vector<std::uint8_t> is_replica;   // union id -> replica flag
  std::vector<std::int32_t> cluster_of_new;
  std::vector<std::int64_t> cluster_node_offsets;  // size c+1, block ranges

  std::int64_t original_nodes = 0;
  std::int64_t original_edges = 0;
  std::int64_t added_nodes = 0;
  std::int64_t added_edges = 0;  // net: restored - cut, may be negative
  int k_hops = 0;

  std::int64_t cut_edge_count = 0;
  std::int64_t restored_border_edges = 0;  // depth-1 restorations of cut edges
  // Every restored edge instance as (cluster, u, v), sorted; the nesting
  // property restored(p) subset-of restored(p') is checked on this list.
  std::vector<std::tuple<std::int32_t, NodeId, NodeId>> restored;

  std::int64_t union_node_of(std::int32_t cluster, NodeId original) const {
    for (std::int64_t i = cluster_node_offsets[cluster];
         i < cluster_node_offsets[cluster + 1]; ++i)
      if (origin_of[i] == original) return i;
    return -1;
  }

  // No edge may join two different clusters' blocks (full scan).
  bool cross_cluster_isolated() const {
    for (NodeId u = 0; u < union_graph.node_count; ++u)
      for (NodeId v : union_graph.out_neighbors(u))
        if (cluster_of_new[u] != cluster_of_new[v]) return false;
    return true;
  }

  std::int64_t approx_memory_bytes() const {
    const std::int64_t nodes = union_graph.node_count;
    const std::int64_t edges = union_graph.edge_count;
    return nodes * union_graph.feature_dim() * 8 + edges * 2 * 4 + nodes * 2 * 8;
  }
};

struct DeltaMetrics {
  double delta_nodes_pct = 0.0;
  double delta_edges_pct = 0.0;
};

inline DeltaMetrics delta_metrics(const Graph& original, const ReconstructedGraph& recon) {
  DeltaMetrics d;
  d.delta_nodes_pct =
      100.0 * static_cast<double>(recon.added_nodes) / static_cast<double>(original.node_count);
  d.delta_edges_pct =
      100.0 * static_cast<double>(recon.added_edges) / static_cast<double>(original.edge_count);
  return d;
}

// Rebuilds each cluster's k-hop border context. An edge (u, v) enters
// cluster C's subgraph when v lies within k-1 restored hops of C; each broken
// edge is kept with probability restore_prob, drawn from a stream keyed by
// (seed, cluster, edge) so draws are independent of traversal order and
// nested across probabilities. Replicas copy the feature row and the
// normalization degree of their originals.
inline ReconstructedGraph dropout_reconstruct(const Graph& g, const Partition& part,
                                              const ReconstructionConfig& cfg) {
  cfg.validate();
  if (static_cast<NodeId>(part.cluster_of.size()) != g.node_count)
    throw std::invalid_argument("partition does not cover this graph");

  const std::int32_t c = part.cluster_count;
  const int k = cfg.k_hops;
  const bool full = cfg.restore_prob >= 1.0;

  std::vector<std::vector<NodeId>> members(c);
  for (NodeId v = 0; v < g.node_count; ++v) members[part.cluster_of[v]].push_back(v);

  ReconstructedGraph recon;
  recon.original_nodes = g.node_count;
  recon.original_edges = g.edge_count;
  recon.k_hops = k;
  recon.cut_edge_count = static_cast<std::int64_t>(part.cut_edges.size());

  struct ClusterBuild {
    std::vector<NodeId> nodes;                      // origin ids, sorted
    std::vector<std::pair<NodeId, NodeId>> edges;   // origin-id pairs
  };
  std::vector<ClusterBuild> builds(c);
  std::int64_t total_nodes = 0;
  std::int64_t total_edges = 0;

  for (std::int32_t cluster = 0; cluster < c; ++cluster) {
    ClusterBuild& build = builds[cluster];
    std::unordered_map<NodeId, int> depth;
    depth.reserve(members[cluster].size() * 2);
    std::queue<NodeId> queue;
    for (NodeId v : members[cluster]) {
      depth.emplace(v, 0);
      queue.push(v);
    }

    while (!queue.empty()) {
      const NodeId v = queue.front();
      queue.pop();
      const int d = depth[v];
      if (d == k) continue;
      const bool v_inside = part.cluster_of[v] == cluster && d == 0;
      for (NodeId u : g.in_neighbors(v)) {
        if (v_inside && part.cluster_of[u] == cluster) continue;  // intra edge, never broken
        const bool restore =
            full || unit_draw(cfg.seed, static_cast<std::uint64_t>(cluster),
                              static_cast<std::uint64_t>(u),
                              static_cast<std::uint64_t>(v)) < cfg.restore_prob;
        if (v_inside && part.cluster_of[u] != cluster && restore) ++recon.restored_border_edges;
        if (!restore) continue;
        build.edges.emplace_back(u, v);
        recon.restored.emplace_back(cluster, u, v);
        if (part.cluster_of[u] != cluster && depth.emplace(u, d + 1).second) queue.push(u);
      }
    }

    build.nodes.reserve(depth.size());
    for (const auto& [node, d] : depth) build.nodes.push_back(node);
    std::sort(build.nodes.begin(), build.nodes.end());
    recon.added_nodes +=
        static_cast<std::int64_t>(build.nodes.size() - members[cluster].size());

    // Intra-cluster edges were never broken; carry them over as-is.
    for (NodeId v : members[cluster])
      for (NodeId u : g.in_neighbors(v))
        if (part.cluster_of[u] == cluster) build.edges.emplace_back(u, v);

    total_nodes += static_cast<std::int64_t>(build.nodes.size());
    total_edges += static_cast<std::int64_t>(build.edges.size());
  }

  // Assemble the disconnected union: cluster blocks in cluster order.
  recon.cluster_node_offsets.assign(c + 1, 0);
  recon.origin_of.resize(total_nodes);
  recon.is_replica.resize(total_nodes);
  recon.cluster_of_new.resize(total_nodes);
  std::unordered_map<std::int64_t, NodeId> local;  // (cluster, origin) -> union id
  local.reserve(total_nodes * 2);
  std::int64_t next = 0;
  for (std::int32_t cluster = 0; cluster < c; ++cluster) {
    recon.cluster_node_offsets[cluster] = next;
    for (NodeId origin : builds[cluster].nodes) {
      recon.origin_of[next] = origin;
      recon.is_replica[next] = part.cluster_of[origin] != cluster;
      recon.cluster_of_new[next] = cluster;
      local.emplace(static_cast<std::int64_t>(cluster) * g.node_count + origin,
                    static_cast<NodeId>(next));
      ++next;
    }
  }
  recon.cluster_node_offsets[c] = next;

  GraphBuilder builder(static_cast<NodeId>(total_nodes));
  for (std::int32_t cluster = 0; cluster < c; ++cluster) {
    const std::int64_t base = static_cast<std::int64_t>(cluster) * g.node_count;
    for (auto [u, v] : builds[cluster].edges)
      builder.add_edge(local.at(base + u), local.at(base + v));
  }
  Matrix features(total_nodes, g.feature_dim());
  for (std::int64_t i = 0; i < total_nodes; ++i)
    for (std::int64_t j = 0; j < g.feature_dim(); ++j)
      features(i, j) = g.features(recon.origin_of[i], j);
  builder.set_features(std::move(features));
  if (g.has_labels()) {
    std::vector<std::int32_t> labels(total_nodes);
    for (std::int64_t i = 0; i < total_nodes; ++i) labels[i] = g.labels[recon.origin_of[i]];
    builder.set_labels(std::move(labels));
  }
  recon.union_graph = builder.build(false);
  for (std::int64_t i = 0; i < total_nodes; ++i)
    recon.union_graph.norm_degree[i] = g.norm_degree[recon.origin_of[i]];

  recon.added_edges = recon.union_graph.edge_count - g.edge_count;
  std::sort(recon.restored.begin(), recon.restored.end());
  (void)total_edges;
  return recon;
}

inline ReconstructedGraph full_reconstruct(const Graph& g, const Partition& part, int k) {
  ReconstructionConfig cfg;
  cfg.k_hops = k;
  cfg.restore_prob = 1.0;
  return dropout_reconstruct(g, part, cfg);
}

// Removes one directed edge instance from the union graph (negative-control
// hook: equivalence checks must detect the missing edge).
inline ReconstructedGraph remove_union_edge(const ReconstructedGraph& recon,
                                            std::int64_t edge_index) {
  if (edge_index < 0 || edge_index >= recon.union_graph.edge_count)
    throw std::out_of_range("union edge index out of range");
  ReconstructedGraph out = recon;
  const Graph& u = recon.union_graph;
  GraphBuilder builder(u.node_count);
  std::int64_t e = 0;
  for (NodeId a = 0; a < u.node_count; ++a)
    for (NodeId b : u.out_neighbors(a)) {
      if (e++ == edge_index) continue;
      builder.add_edge(a, b);
    }
  Matrix features = u.features;
  builder.set_features(std::move(features));
  if (u.has_labels()) builder.set_labels(std::vector<std::int32_t>(u.labels));
  out.union_graph = builder.build(false);
  out.union_graph.norm_degree = u.norm_degree;
  out.added_edges -= 1;
  return out;
}

}  // namespace parex
