#pragma once

#include <algorithm>
#include <cstdint>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "parex/matrix.hpp"

namespace parex {

using NodeId = std::int32_t;

// Immutable directed graph in compressed adjacency form. Self-loops are
// stripped at build time; message-passing normalization adds exactly one
// self term per node. norm_degree carries the degree used for symmetric
// normalization; subgraph and union constructions copy it from the host
// graph so border replicas keep their original normalization constants.
struct Graph {
  NodeId node_count = 0;
  std::int64_t edge_count = 0;

  std::vector<std::int64_t> out_offsets;  // size n+1
  std::vector<NodeId> out_targets;        // size m, sorted per node
  std::vector<std::int64_t> in_offsets;   // size n+1
  std::vector<NodeId> in_sources;         // size m, sorted per node

  Matrix features;                 // n x F
  std::vector<std::int32_t> labels;  // empty, or size n with -1 = unlabeled
  std::vector<double> norm_degree;   // size n, default 1 + in-degree

  std::int64_t feature_dim() const { return features.cols(); }

  std::span<const NodeId> out_neighbors(NodeId u) const {
    return {out_targets.data() + out_offsets[u],
            static_cast<std::size_t>(out_offsets[u + 1] - out_offsets[u])};
  }
  std::span<const NodeId> in_neighbors(NodeId v) const {
    return {in_sources.data() + in_offsets[v],
            static_cast<std::size_t>(in_offsets[v + 1] - in_offsets[v])};
  }
  std::int64_t in_degree(NodeId v) const { return in_offsets[v + 1] - in_offsets[v]; }
  std::int64_t out_degree(NodeId u) const { return out_offsets[u + 1] - out_offsets[u]; }

  bool has_labels() const { return !labels.empty(); }

  void check_node(NodeId v) const {
    if (v < 0 || v >= node_count)
      throw std::out_of_range("node id " + std::to_string(v) + " outside [0, " +
                              std::to_string(node_count) + ")");
  }

  // Every out edge must appear as an in edge and vice versa.
  bool transpose_consistent() const {
    if (static_cast<std::int64_t>(out_targets.size()) != edge_count ||
        static_cast<std::int64_t>(in_sources.size()) != edge_count)
      return false;
    std::vector<std::pair<NodeId, NodeId>> a, b;
    a.reserve(out_targets.size());
    b.reserve(in_sources.size());
    for (NodeId u = 0; u < node_count; ++u)
      for (NodeId v : out_neighbors(u)) a.emplace_back(u, v);
    for (NodeId v = 0; v < node_count; ++v)
      for (NodeId u : in_neighbors(v)) b.emplace_back(u, v);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return a == b;
  }
};

struct BuildStats {
  std::int64_t duplicates_removed = 0;
  std::int64_t self_loops_removed = 0;
};

// Assembles a Graph from an edge list. Deduplicates, drops self-loops,
// optionally symmetrizes (adds the reverse of every edge).
class GraphBuilder {
 public:
  explicit GraphBuilder(NodeId node_count) : n_(node_count) {
    if (node_count < 1) throw std::invalid_argument("graph needs at least one node");
  }

  void add_edge(NodeId u, NodeId v) {
    if (u < 0 || u >= n_ || v < 0 || v >= n_)
      throw std::out_of_range("edge endpoint outside [0, n)");
    edges_.emplace_back(u, v);
  }

  void set_features(Matrix f) { features_ = std::move(f); }
  void set_labels(std::vector<std::int32_t> l) { labels_ = std::move(l); }

  Graph build(bool symmetrize = false, BuildStats* stats = nullptr) {
    std::vector<std::pair<NodeId, NodeId>> edges;
    edges.reserve(edges_.size() * (symmetrize ? 2 : 1));
    std::int64_t self_loops = 0;
    for (auto [u, v] : edges_) {
      if (u == v) {
        ++self_loops;
        continue;
      }
      edges.emplace_back(u, v);
    }
    std::sort(edges.begin(), edges.end());
    const auto unique_end = std::unique(edges.begin(), edges.end());
    const std::int64_t duplicates = edges.end() - unique_end;
    edges.erase(unique_end, edges.end());
    if (symmetrize) {
      const std::size_t forward = edges.size();
      for (std::size_t i = 0; i < forward; ++i)
        edges.emplace_back(edges[i].second, edges[i].first);
      std::sort(edges.begin(), edges.end());
      edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    }
    if (stats) {
      stats->duplicates_removed = duplicates;
      stats->self_loops_removed = self_loops;
    }

    Graph g;
    g.node_count = n_;
    g.edge_count = static_cast<std::int64_t>(edges.size());
    g.out_offsets.assign(n_ + 1, 0);
    g.in_offsets.assign(n_ + 1, 0);
    for (auto [u, v] : edges) {
      ++g.out_offsets[u + 1];
      ++g.in_offsets[v + 1];
    }
    for (NodeId i = 0; i < n_; ++i) {
      g.out_offsets[i + 1] += g.out_offsets[i];
      g.in_offsets[i + 1] += g.in_offsets[i];
    }
    g.out_targets.resize(edges.size());
    g.in_sources.resize(edges.size());
    std::vector<std::int64_t> pos(g.in_offsets.begin(), g.in_offsets.end() - 1);
    std::int64_t k = 0;
    for (auto [u, v] : edges) {
      g.out_targets[k++] = v;        // edges sorted by (u, v): out lists sorted
      g.in_sources[pos[v]++] = u;    // filled in ascending u: in lists sorted
    }

    if (features_.rows() == 0) features_ = Matrix(n_, 0);
    if (features_.rows() != n_)
      throw std::invalid_argument("feature row count must equal node count");
    g.features = std::move(features_);
    if (!labels_.empty() && static_cast<NodeId>(labels_.size()) != n_)
      throw std::invalid_argument("label count must equal node count");
    g.labels = std::move(labels_);

    g.norm_degree.resize(n_);
    for (NodeId v = 0; v < n_; ++v) g.norm_degree[v] = 1.0 + static_cast<double>(g.in_degree(v));
    return g;
  }

 private:
  NodeId n_;
  std::vector<std::pair<NodeId, NodeId>> edges_;
  Matrix features_;
  std::vector<std::int32_t> labels_;
};

// Nodes with a directed path of length <= hops INTO the target.
struct KHopSet {
  NodeId target = 0;
  int hops = 0;
  std::vector<NodeId> members;  // sorted, includes target
};

// BFS over in-edges; returns (node, depth) pairs with depth = shortest
// in-path distance to target, depth <= hops. Sorted by node id.
inline std::vector<std::pair<NodeId, int>> khop_in_depths(const Graph& g, NodeId target,
                                                          int hops) {
  g.check_node(target);
  if (hops < 0) throw std::invalid_argument("hops must be >= 0");
  std::unordered_map<NodeId, int> depth;
  depth.emplace(target, 0);
  std::queue<NodeId> queue;
  queue.push(target);
  while (!queue.empty()) {
    const NodeId v = queue.front();
    queue.pop();
    const int d = depth[v];
    if (d == hops) continue;
    for (NodeId u : g.in_neighbors(v)) {
      if (depth.emplace(u, d + 1).second) queue.push(u);
    }
  }
  std::vector<std::pair<NodeId, int>> out(depth.begin(), depth.end());
  std::sort(out.begin(), out.end());
  return out;
}

inline KHopSet khop_in_neighborhood(const Graph& g, NodeId target, int hops) {
  KHopSet set;
  set.target = target;
  set.hops = hops;
  for (auto [node, d] : khop_in_depths(g, target, hops)) set.members.push_back(node);
  return set;
}

inline std::vector<KHopSet> khop_in_neighborhood(const Graph& g,
                                                 std::span<const NodeId> targets, int hops) {
  std::vector<KHopSet> out;
  out.reserve(targets.size());
  for (NodeId t : targets) out.push_back(khop_in_neighborhood(g, t, hops));
  return out;
}

// A target's k-hop computation subgraph in canonical form: local ids follow
// ascending origin id, so extracting the same neighborhood from the original
// graph and from a reconstructed cluster yields bit-identical graphs.
struct KHopSubgraph {
  Graph graph;
  std::vector<NodeId> origin;  // local -> host-origin id
  NodeId local_target = 0;
  std::vector<int> depth;      // local -> hops from target
};

// origin_map maps host node ids to origin ids (identity when null).
inline KHopSubgraph extract_khop_subgraph(const Graph& host, NodeId target, int hops,
                                          const std::vector<NodeId>* origin_map = nullptr) {
  const auto depths = khop_in_depths(host, target, hops);
  const std::size_t s = depths.size();

  // depths is sorted by host id; within one cluster of a reconstructed
  // union, host order equals origin order, so this is already canonical.
  std::vector<NodeId> host_ids(s);
  std::unordered_map<NodeId, NodeId> local_of;
  local_of.reserve(s * 2);
  KHopSubgraph sub;
  sub.origin.resize(s);
  sub.depth.resize(s);
  for (std::size_t i = 0; i < s; ++i) {
    host_ids[i] = depths[i].first;
    sub.depth[i] = depths[i].second;
    sub.origin[i] = origin_map ? (*origin_map)[depths[i].first] : depths[i].first;
    local_of.emplace(depths[i].first, static_cast<NodeId>(i));
  }

  GraphBuilder builder(static_cast<NodeId>(s));
  for (std::size_t i = 0; i < s; ++i) {
    // Only edges that can influence the target matter: (u, v) with
    // depth(v) <= hops - 1.
    if (sub.depth[i] > hops - 1) continue;
    const NodeId v = host_ids[i];
    for (NodeId u : host.in_neighbors(v)) {
      auto it = local_of.find(u);
      if (it != local_of.end()) builder.add_edge(it->second, static_cast<NodeId>(i));
    }
  }

  Matrix feats(static_cast<std::int64_t>(s), host.feature_dim());
  for (std::size_t i = 0; i < s; ++i)
    for (std::int64_t j = 0; j < host.feature_dim(); ++j)
      feats(static_cast<std::int64_t>(i), j) = host.features(host_ids[i], j);
  builder.set_features(std::move(feats));
  if (host.has_labels()) {
    std::vector<std::int32_t> labels(s);
    for (std::size_t i = 0; i < s; ++i) labels[i] = host.labels[host_ids[i]];
    builder.set_labels(std::move(labels));
  }

  sub.graph = builder.build(false);
  for (std::size_t i = 0; i < s; ++i) sub.graph.norm_degree[i] = host.norm_degree[host_ids[i]];
  sub.local_target = local_of.at(target);
  return sub;
}

}  // namespace parex
