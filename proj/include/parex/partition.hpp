#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "parex/graph.hpp"
#include "parex/rng.hpp"

namespace parex {

// Node -> cluster assignment with cut bookkeeping.
struct Partition {
  std::vector<std::int32_t> cluster_of;
  std::int32_t cluster_count = 0;
  std::vector<std::int64_t> cluster_sizes;
  std::vector<std::pair<NodeId, NodeId>> cut_edges;  // directed (u, v), clusters differ

  static Partition from_assignment(const Graph& g, std::vector<std::int32_t> assignment,
                                   std::int32_t cluster_count) {
    if (static_cast<NodeId>(assignment.size()) != g.node_count)
      throw std::invalid_argument("assignment size must equal node count");
    Partition p;
    p.cluster_of = std::move(assignment);
    p.cluster_count = cluster_count;
    p.cluster_sizes.assign(cluster_count, 0);
    for (NodeId v = 0; v < g.node_count; ++v) {
      const std::int32_t c = p.cluster_of[v];
      if (c < 0 || c >= cluster_count)
        throw std::invalid_argument("cluster id out of range for node " + std::to_string(v));
      ++p.cluster_sizes[c];
    }
    for (std::int32_t c = 0; c < cluster_count; ++c)
      if (p.cluster_sizes[c] == 0)
        throw std::invalid_argument("cluster " + std::to_string(c) + " is empty");
    for (NodeId u = 0; u < g.node_count; ++u)
      for (NodeId v : g.out_neighbors(u))
        if (p.cluster_of[u] != p.cluster_of[v]) p.cut_edges.emplace_back(u, v);
    return p;
  }

  // Disjoint cover with every cluster nonempty and cut list exact.
  bool valid_for(const Graph& g) const {
    if (static_cast<NodeId>(cluster_of.size()) != g.node_count) return false;
    if (cluster_count < 1) return false;
    std::vector<std::int64_t> sizes(cluster_count, 0);
    for (NodeId v = 0; v < g.node_count; ++v) {
      if (cluster_of[v] < 0 || cluster_of[v] >= cluster_count) return false;
      ++sizes[cluster_of[v]];
    }
    if (sizes != cluster_sizes) return false;
    if (std::accumulate(sizes.begin(), sizes.end(), std::int64_t{0}) != g.node_count)
      return false;
    for (std::int64_t s : sizes)
      if (s == 0) return false;
    std::int64_t cut = 0;
    for (NodeId u = 0; u < g.node_count; ++u)
      for (NodeId v : g.out_neighbors(u))
        if (cluster_of[u] != cluster_of[v]) ++cut;
    return cut == static_cast<std::int64_t>(cut_edges.size());
  }
};

// Directed edges whose endpoints land in different clusters (full scan).
inline std::int64_t edge_cut(const Graph& g, const Partition& p) {
  if (static_cast<NodeId>(p.cluster_of.size()) != g.node_count)
    throw std::invalid_argument("partition does not cover this graph");
  std::int64_t cut = 0;
  for (NodeId u = 0; u < g.node_count; ++u)
    for (NodeId v : g.out_neighbors(u))
      if (p.cluster_of[u] != p.cluster_of[v]) ++cut;
  return cut;
}

// max(n_i) / (n / c); 1.0 is a perfect split.
inline double balance(const Partition& p) {
  const std::int64_t n =
      std::accumulate(p.cluster_sizes.begin(), p.cluster_sizes.end(), std::int64_t{0});
  const std::int64_t largest = *std::max_element(p.cluster_sizes.begin(), p.cluster_sizes.end());
  return static_cast<double>(largest) * static_cast<double>(p.cluster_count) /
         static_cast<double>(n);
}

enum class PartitionStrategy { multilevel, greedy, random };

inline PartitionStrategy partition_strategy_from_string(const std::string& s) {
  if (s == "multilevel") return PartitionStrategy::multilevel;
  if (s == "greedy") return PartitionStrategy::greedy;
  if (s == "random") return PartitionStrategy::random;
  throw std::invalid_argument("unknown partition strategy: " + s);
}

inline const char* to_string(PartitionStrategy s) {
  switch (s) {
    case PartitionStrategy::multilevel: return "multilevel";
    case PartitionStrategy::greedy: return "greedy";
    case PartitionStrategy::random: return "random";
  }
  return "?";
}

namespace detail {

// Undirected weighted view used by coarsening and refinement.
struct WorkGraph {
  std::int64_t n = 0;
  std::vector<std::int64_t> offsets;
  std::vector<std::int32_t> adj;
  std::vector<std::int64_t> weight;       // parallel to adj
  std::vector<std::int64_t> node_weight;  // contracted node count
};

inline WorkGraph make_work_graph(const Graph& g) {
  std::vector<std::vector<std::pair<std::int32_t, std::int64_t>>> lists(g.node_count);
  for (NodeId u = 0; u < g.node_count; ++u) {
    for (NodeId v : g.out_neighbors(u)) {
      lists[u].emplace_back(v, 1);
      lists[v].emplace_back(u, 1);
    }
  }
  WorkGraph w;
  w.n = g.node_count;
  w.node_weight.assign(g.node_count, 1);
  w.offsets.assign(g.node_count + 1, 0);
  for (NodeId v = 0; v < g.node_count; ++v) {
    auto& l = lists[v];
    std::sort(l.begin(), l.end());
    std::size_t out = 0;
    for (std::size_t i = 0; i < l.size();) {
      std::size_t j = i;
      std::int64_t sum = 0;
      while (j < l.size() && l[j].first == l[i].first) sum += l[j++].second;
      l[out++] = {l[i].first, sum};
      i = j;
    }
    l.resize(out);
    w.offsets[v + 1] = w.offsets[v] + static_cast<std::int64_t>(out);
  }
  w.adj.resize(w.offsets.back());
  w.weight.resize(w.offsets.back());
  for (NodeId v = 0; v < g.node_count; ++v) {
    std::int64_t k = w.offsets[v];
    for (auto [u, wt] : lists[v]) {
      w.adj[k] = u;
      w.weight[k] = wt;
      ++k;
    }
  }
  return w;
}

// Heavy-edge matching; returns coarse graph and fine->coarse map.
inline WorkGraph coarsen(const WorkGraph& fine, std::vector<std::int32_t>& coarse_of,
                         std::mt19937_64& rng) {
  const std::int64_t n = fine.n;
  std::vector<std::int32_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  coarse_of.assign(n, -1);
  std::int32_t next = 0;
  for (std::int32_t v : order) {
    if (coarse_of[v] >= 0) continue;
    std::int32_t best = -1;
    std::int64_t best_weight = 0;
    for (std::int64_t i = fine.offsets[v]; i < fine.offsets[v + 1]; ++i) {
      const std::int32_t u = fine.adj[i];
      if (u == v || coarse_of[u] >= 0) continue;
      if (fine.weight[i] > best_weight ||
          (fine.weight[i] == best_weight && (best < 0 || u < best))) {
        best = u;
        best_weight = fine.weight[i];
      }
    }
    coarse_of[v] = next;
    if (best >= 0) coarse_of[best] = next;
    ++next;
  }

  std::vector<std::vector<std::pair<std::int32_t, std::int64_t>>> lists(next);
  WorkGraph coarse;
  coarse.n = next;
  coarse.node_weight.assign(next, 0);
  for (std::int32_t v = 0; v < n; ++v) {
    coarse.node_weight[coarse_of[v]] += fine.node_weight[v];
    for (std::int64_t i = fine.offsets[v]; i < fine.offsets[v + 1]; ++i) {
      const std::int32_t cu = coarse_of[fine.adj[i]];
      const std::int32_t cv = coarse_of[v];
      if (cu != cv) lists[cv].emplace_back(cu, fine.weight[i]);
    }
  }
  coarse.offsets.assign(next + 1, 0);
  for (std::int32_t v = 0; v < next; ++v) {
    auto& l = lists[v];
    std::sort(l.begin(), l.end());
    std::size_t out = 0;
    for (std::size_t i = 0; i < l.size();) {
      std::size_t j = i;
      std::int64_t sum = 0;
      while (j < l.size() && l[j].first == l[i].first) sum += l[j++].second;
      l[out++] = {l[i].first, sum};
      i = j;
    }
    l.resize(out);
    coarse.offsets[v + 1] = coarse.offsets[v] + static_cast<std::int64_t>(out);
  }
  coarse.adj.resize(coarse.offsets.back());
  coarse.weight.resize(coarse.offsets.back());
  for (std::int32_t v = 0; v < next; ++v) {
    std::int64_t k = coarse.offsets[v];
    for (auto [u, wt] : lists[v]) {
      coarse.adj[k] = u;
      coarse.weight[k] = wt;
      ++k;
    }
  }
  return coarse;
}

// Greedy growing: seed each cluster at the heaviest-degree free node and
// absorb the most connected frontier node until the weight budget fills.
inline std::vector<std::int32_t> grow_initial(const WorkGraph& w, std::int32_t c) {
  const std::int64_t total =
      std::accumulate(w.node_weight.begin(), w.node_weight.end(), std::int64_t{0});
  std::vector<std::int32_t> part(w.n, -1);
  std::vector<std::int64_t> degree(w.n, 0);
  for (std::int32_t v = 0; v < w.n; ++v)
    for (std::int64_t i = w.offsets[v]; i < w.offsets[v + 1]; ++i) degree[v] += w.weight[i];

  std::vector<std::int64_t> connect(w.n, 0);
  std::int64_t assigned_weight = 0;
  for (std::int32_t cluster = 0; cluster < c; ++cluster) {
    const std::int64_t budget =
        (total - assigned_weight + (c - cluster - 1)) / (c - cluster);  // ceil of remainder share
    std::int32_t seed = -1;
    for (std::int32_t v = 0; v < w.n; ++v)
      if (part[v] < 0 && (seed < 0 || degree[v] > degree[seed])) seed = v;
    if (seed < 0) break;  // handled below
    std::fill(connect.begin(), connect.end(), 0);
    std::int64_t weight = 0;
    std::int32_t current = seed;
    while (true) {
      part[current] = cluster;
      weight += w.node_weight[current];
      assigned_weight += w.node_weight[current];
      if (weight >= budget) break;
      for (std::int64_t i = w.offsets[current]; i < w.offsets[current + 1]; ++i)
        if (part[w.adj[i]] < 0) connect[w.adj[i]] += w.weight[i];
      std::int32_t best = -1;
      for (std::int32_t v = 0; v < w.n; ++v)
        if (part[v] < 0 && connect[v] > 0 && (best < 0 || connect[v] > connect[best]))
          best = v;
      if (best < 0) {
        for (std::int32_t v = 0; v < w.n; ++v)
          if (part[v] < 0 && (best < 0 || degree[v] > degree[best])) best = v;
      }
      if (best < 0) break;
      current = best;
    }
  }
  // Whatever is left joins the last cluster; empty clusters steal one node
  // from the largest cluster so every cluster stays nonempty.
  for (std::int32_t v = 0; v < w.n; ++v)
    if (part[v] < 0) part[v] = c - 1;
  std::vector<std::int64_t> count(c, 0);
  for (std::int32_t v = 0; v < w.n; ++v) ++count[part[v]];
  for (std::int32_t cluster = 0; cluster < c; ++cluster) {
    if (count[cluster] > 0) continue;
    std::int32_t donor = 0;
    for (std::int32_t k = 0; k < c; ++k)
      if (count[k] > count[donor]) donor = k;
    for (std::int32_t v = 0; v < w.n; ++v)
      if (part[v] == donor) {
        part[v] = cluster;
        --count[donor];
        ++count[cluster];
        break;
      }
  }
  return part;
}

// One boundary pass: move a node to the neighboring cluster with the best
// cut gain, subject to the balance cap; ties break on the lowest cluster id,
// nodes visited in ascending id order.
inline void refine(const WorkGraph& w, std::vector<std::int32_t>& part, std::int32_t c,
                   std::int64_t cap, int passes) {
  std::vector<std::int64_t> weight(c, 0);
  std::vector<std::int64_t> count(c, 0);
  for (std::int32_t v = 0; v < w.n; ++v) {
    weight[part[v]] += w.node_weight[v];
    ++count[part[v]];
  }
  std::vector<std::int64_t> link(c, 0);
  for (int pass = 0; pass < passes; ++pass) {
    bool moved = false;
    for (std::int32_t v = 0; v < w.n; ++v) {
      const std::int32_t from = part[v];
      if (count[from] <= 1) continue;
      std::fill(link.begin(), link.end(), 0);
      bool boundary = false;
      for (std::int64_t i = w.offsets[v]; i < w.offsets[v + 1]; ++i) {
        link[part[w.adj[i]]] += w.weight[i];
        boundary |= part[w.adj[i]] != from;
      }
      if (!boundary) continue;
      std::int32_t best = -1;
      std::int64_t best_gain = 0;
      for (std::int32_t k = 0; k < c; ++k) {
        if (k == from || link[k] == 0) continue;
        if (weight[k] + w.node_weight[v] > cap) continue;
        const std::int64_t gain = link[k] - link[from];
        if (best < 0 || gain > best_gain || (gain == best_gain && weight[k] < weight[best])) {
          best = k;
          best_gain = gain;
        }
      }
      if (best >= 0 &&
          (best_gain > 0 ||
           (best_gain == 0 && weight[best] + w.node_weight[v] < weight[from]))) {
        part[v] = best;
        weight[from] -= w.node_weight[v];
        weight[best] += w.node_weight[v];
        --count[from];
        ++count[best];
        moved = true;
      }
    }
    if (!moved) break;
  }
}

inline std::vector<std::int32_t> multilevel_partition(const Graph& g, std::int32_t c,
                                                      std::uint64_t seed) {
  WorkGraph finest = make_work_graph(g);
  const std::int64_t total = finest.n;
  const std::int64_t cap =
      std::max<std::int64_t>((total + c - 1) / c,
                             static_cast<std::int64_t>(1.3 * static_cast<double>(total) /
                                                       static_cast<double>(c)) +
                                 1);

  auto rng = make_engine(seed, 0x6d6cULL);
  std::vector<WorkGraph> levels;
  std::vector<std::vector<std::int32_t>> maps;
  levels.push_back(std::move(finest));
  const std::int64_t coarse_target = std::max<std::int64_t>(static_cast<std::int64_t>(c) * 8, 64);
  while (levels.back().n > coarse_target) {
    std::vector<std::int32_t> coarse_of;
    WorkGraph coarse = coarsen(levels.back(), coarse_of, rng);
    if (coarse.n >= levels.back().n) break;  // matching stalled
    maps.push_back(std::move(coarse_of));
    levels.push_back(std::move(coarse));
  }

  std::vector<std::int32_t> part = grow_initial(levels.back(), c);
  refine(levels.back(), part, c, cap, 4);
  for (std::size_t level = maps.size(); level-- > 0;) {
    std::vector<std::int32_t> fine_part(levels[level].n);
    for (std::int64_t v = 0; v < levels[level].n; ++v) fine_part[v] = part[maps[level][v]];
    part = std::move(fine_part);
    refine(levels[level], part, c, cap, 2);
  }
  return part;
}

inline std::vector<std::int32_t> random_partition(NodeId n, std::int32_t c,
                                                  std::uint64_t seed) {
  std::vector<std::int32_t> part(n);
  std::vector<NodeId> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_engine(seed, 0x72616eULL);
  std::shuffle(order.begin(), order.end(), rng);
  for (NodeId i = 0; i < n; ++i) part[order[i]] = static_cast<std::int32_t>(i % c);
  return part;
}

}  // namespace detail

// Split nodes into c clusters. multilevel coarsens with heavy-edge matching
// and refines greedily toward a small edge cut; greedy runs the growing
// heuristic on the flat graph; random deals a shuffled order round-robin.
inline Partition partition(const Graph& g, std::int32_t c, PartitionStrategy strategy,
                           std::uint64_t seed) {
  if (c < 1) throw std::invalid_argument("cluster count must be >= 1");
  if (c > g.node_count)
    throw std::invalid_argument("cluster count " + std::to_string(c) + " exceeds node count " +
                                std::to_string(g.node_count));
  std::vector<std::int32_t> assignment;
  switch (strategy) {
    case PartitionStrategy::multilevel:
      assignment = detail::multilevel_partition(g, c, seed);
      break;
    case PartitionStrategy::greedy: {
      detail::WorkGraph w = detail::make_work_graph(g);
      assignment = detail::grow_initial(w, c);
      const std::int64_t cap = std::max<std::int64_t>(
          (g.node_count + c - 1) / c,
          static_cast<std::int64_t>(1.3 * static_cast<double>(g.node_count) /
                                    static_cast<double>(c)) +
              1);
      detail::refine(w, assignment, c, cap, 2);
      break;
    }
    case PartitionStrategy::random:
      assignment = detail::random_partition(g.node_count, c, seed);
      break;
  }
  return Partition::from_assignment(g, std::move(assignment), c);
}

}  // namespace parex
