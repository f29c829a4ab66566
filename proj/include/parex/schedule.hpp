#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "parex/graph.hpp"
#include "parex/reconstruct.hpp"

namespace parex {

// Rounds of explanation targets: at most one non-replica node per cluster
// per round, every original node exactly once. Ids live in union space.
struct BatchSchedule {
  std::vector<std::vector<std::int64_t>> batches;
  std::int64_t batch_count = 0;
  std::int64_t covered = 0;
};

// Per cluster the original nodes are taken in ascending original id; batch j
// holds the j-th remaining node of every cluster, so the number of batches
// is the largest per-cluster target count. Final ragged batches shrink.
// An empty target filter schedules every original node.
inline BatchSchedule build_batches(const ReconstructedGraph& recon,
                                   const Partition& partition,
                                   const std::vector<NodeId>& targets = {}) {
  if (recon.cluster_node_offsets.size() !=
      static_cast<std::size_t>(partition.cluster_count) + 1)
    throw std::invalid_argument("reconstruction does not match this partition");

  std::unordered_set<NodeId> wanted(targets.begin(), targets.end());
  for (NodeId t : targets)
    if (t < 0 || t >= static_cast<NodeId>(recon.original_nodes))
      throw std::out_of_range("target outside original graph");

  const std::int32_t c = partition.cluster_count;
  std::vector<std::vector<std::int64_t>> per_cluster(c);
  for (std::int32_t cluster = 0; cluster < c; ++cluster) {
    for (std::int64_t i = recon.cluster_node_offsets[cluster];
         i < recon.cluster_node_offsets[cluster + 1]; ++i) {
      if (recon.is_replica[i]) continue;  // replicas are copies, never explained
      if (!wanted.empty() && !wanted.count(recon.origin_of[i])) continue;
      per_cluster[cluster].push_back(i);
    }
    // Block order is origin order already; keep the sort as a guard.
    std::sort(per_cluster[cluster].begin(), per_cluster[cluster].end(),
              [&](std::int64_t a, std::int64_t b) {
                return recon.origin_of[a] < recon.origin_of[b];
              });
  }

  BatchSchedule schedule;
  std::size_t max_count = 0;
  for (const auto& list : per_cluster) max_count = std::max(max_count, list.size());
  schedule.batches.reserve(max_count);
  for (std::size_t round = 0; round < max_count; ++round) {
    std::vector<std::int64_t> batch;
    for (std::int32_t cluster = 0; cluster < c; ++cluster)
      if (round < per_cluster[cluster].size()) batch.push_back(per_cluster[cluster][round]);
    schedule.covered += static_cast<std::int64_t>(batch.size());
    schedule.batches.push_back(std::move(batch));
  }
  schedule.batch_count = static_cast<std::int64_t>(schedule.batches.size());
  return schedule;
}

struct IndependenceViolation {
  std::size_t batch = 0;
  std::int64_t first = 0;   // union ids
  std::int64_t second = 0;
  NodeId shared = 0;        // union id of a shared k-hop in-neighbor
};

struct IndependenceReport {
  std::vector<IndependenceViolation> violations;
  std::int64_t pairs_checked = 0;
  bool ok() const { return violations.empty(); }
};

// Within every batch the k-hop in-neighborhoods of any two scheduled nodes
// must be disjoint, otherwise one backward pass would mix their gradients.
inline IndependenceReport verify_independence(const BatchSchedule& schedule,
                                              const ReconstructedGraph& recon, int k) {
  IndependenceReport report;
  const Graph& u = recon.union_graph;
  for (std::size_t b = 0; b < schedule.batches.size(); ++b) {
    const auto& batch = schedule.batches[b];
    std::vector<std::vector<NodeId>> hoods;
    hoods.reserve(batch.size());
    for (std::int64_t t : batch)
      hoods.push_back(khop_in_neighborhood(u, static_cast<NodeId>(t), k).members);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      for (std::size_t j = i + 1; j < batch.size(); ++j) {
        ++report.pairs_checked;
        std::vector<NodeId> shared;
        std::set_intersection(hoods[i].begin(), hoods[i].end(), hoods[j].begin(),
                              hoods[j].end(), std::back_inserter(shared));
        if (!shared.empty())
          report.violations.push_back({b, batch[i], batch[j], shared.front()});
      }
    }
  }
  return report;
}

}  // namespace parex
