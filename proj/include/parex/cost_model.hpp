#pragma once

#include <cstdint>
#include <stdexcept>

namespace parex {

// Complexity accounting with constant factors dropped; L kept so different
// engine depths stay comparable.
struct CostInputs {
  std::int64_t nodes = 1;       // n
  std::int64_t edges = 1;       // m
  std::int64_t features = 1;    // F
  std::int64_t layers = 1;      // L
  std::int64_t clusters = 1;    // c
  std::int64_t replicated_edges = 0;  // r, signed net edge delta

  void validate() const {
    if (nodes < 1 || edges < 1 || features < 1 || layers < 1 || clusters < 1)
      throw std::invalid_argument("cost inputs must be >= 1");
  }
};

// One forward-backward per node over the whole graph: n * L * m * F.
inline double sequential_cost(const CostInputs& ci) {
  ci.validate();
  return static_cast<double>(ci.nodes) * static_cast<double>(ci.layers) *
         static_cast<double>(ci.edges) * static_cast<double>(ci.features);
}

// Largest cluster drives the batch count: (n / c) * L * (m + r) * F.
inline double parallel_cost(const CostInputs& ci) {
  ci.validate();
  const std::int64_t expanded = ci.edges + ci.replicated_edges;
  if (expanded <= 0)
    throw std::invalid_argument("reconstructed graph must keep at least one edge");
  return static_cast<double>(ci.nodes) / static_cast<double>(ci.clusters) *
         static_cast<double>(ci.layers) * static_cast<double>(expanded) *
         static_cast<double>(ci.features);
}

struct SpeedupCondition {
  bool holds = false;
  double min_clusters = 0.0;  // r/m + 1
};

// The parallel path wins exactly when c > r/m + 1; the boolean is decided in
// exact integer arithmetic (c*m > m + r).
inline SpeedupCondition speedup_condition(std::int64_t edges, std::int64_t replicated_edges,
                                          std::int64_t clusters) {
  if (edges < 1) throw std::invalid_argument("edge count must be >= 1");
  SpeedupCondition s;
  s.min_clusters =
      static_cast<double>(replicated_edges) / static_cast<double>(edges) + 1.0;
  s.holds = static_cast<__int128>(clusters) * edges >
            static_cast<__int128>(edges) + replicated_edges;
  return s;
}

}  // namespace parex
