#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "parex/graph.hpp"
#include "parex/rng.hpp"

namespace parex {

// Planted-cluster graph: undirected pair (i, j) drawn with probability
// p_intra inside a community, p_inter across; stored as two directed edges.
// Features are a noisy community one-hot; labels are community indices.
struct CommunityParams {
  int communities = 4;
  double p_intra = 0.08;
  double p_inter = 0.005;
  std::int64_t feature_dim = 0;  // 0 -> communities + 4
  double signal = 1.0;
  double noise = 0.3;
};

inline Graph generate_community(NodeId n, const CommunityParams& params, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("community graph needs n >= 2");
  if (params.communities < 1 || params.communities > n)
    throw std::invalid_argument("communities must be in [1, n]");
  if (params.p_intra < 0.0 || params.p_intra > 1.0 || params.p_inter < 0.0 ||
      params.p_inter > 1.0)
    throw std::invalid_argument("edge probabilities must be in [0, 1]");

  const int k = params.communities;
  std::vector<std::int32_t> community(n);
  for (NodeId v = 0; v < n; ++v) community[v] = v % k;

  GraphBuilder builder(n);
  for (NodeId i = 0; i < n; ++i) {
    for (NodeId j = i + 1; j < n; ++j) {
      const double p = community[i] == community[j] ? params.p_intra : params.p_inter;
      if (unit_draw(seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)) < p) {
        builder.add_edge(i, j);
        builder.add_edge(j, i);
      }
    }
  }

  const std::int64_t f = params.feature_dim > 0 ? params.feature_dim : k + 4;
  if (f < k) throw std::invalid_argument("feature_dim must be >= communities");
  Matrix features(n, f);
  for (NodeId v = 0; v < n; ++v) {
    for (std::int64_t j = 0; j < f; ++j)
      features(v, j) = params.noise * normal_draw(seed, 0x5eedULL, static_cast<std::uint64_t>(v),
                                                  static_cast<std::uint64_t>(j));
    features(v, community[v]) += params.signal;
  }
  builder.set_features(std::move(features));
  builder.set_labels(std::move(community));
  return builder.build(false);
}

// Preferential attachment: start from `attach` isolated nodes; each new node
// picks `attach` distinct existing nodes with probability proportional to
// degree + 1 and links to them in both directions. Final directed edge count
// is therefore exactly 2 * attach * (n - attach).
inline Graph generate_preferential(NodeId n, int attach, std::int64_t feature_dim,
                                   std::uint64_t seed) {
  if (attach < 1) throw std::invalid_argument("attach must be >= 1");
  if (n <= attach) throw std::invalid_argument("need n > attach");

  std::vector<NodeId> urn;  // node appears degree + 1 times
  urn.reserve(static_cast<std::size_t>(2 * attach) * n);
  for (NodeId v = 0; v < attach; ++v) urn.push_back(v);

  auto rng = make_engine(seed, 0x6261ULL);
  GraphBuilder builder(n);
  std::vector<NodeId> chosen;
  for (NodeId v = attach; v < n; ++v) {
    chosen.clear();
    while (static_cast<int>(chosen.size()) < attach) {
      std::uniform_int_distribution<std::size_t> pick(0, urn.size() - 1);
      const NodeId t = urn[pick(rng)];
      bool fresh = true;
      for (NodeId c : chosen) fresh &= (c != t);
      if (fresh) chosen.push_back(t);
    }
    for (NodeId t : chosen) {
      builder.add_edge(v, t);
      builder.add_edge(t, v);
      urn.push_back(t);
      urn.push_back(v);
    }
    urn.push_back(v);
  }

  Matrix features(n, feature_dim);
  for (NodeId v = 0; v < n; ++v)
    for (std::int64_t j = 0; j < feature_dim; ++j)
      features(v, j) = normal_draw(seed, 0xfeadULL, static_cast<std::uint64_t>(v),
                                   static_cast<std::uint64_t>(j));
  builder.set_features(std::move(features));
  return builder.build(false);
}

}  // namespace parex
