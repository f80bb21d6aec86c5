#pragma once

#include "asil/graph.hpp"
#include "asil/partition_tree.hpp"

namespace asil {

// -(g_a / Vol) log2(V_a / V_parent). Empty or zero-volume modules give 0.
// ValidationError for the root.
double node_si(const Graph& g, const PartitionTree& t, TreeNodeId alpha);

// Sum of node_si over every non-root node. Accepts relaxed trees.
double tree_si(const Graph& g, const PartitionTree& t);

struct OptimalTree {
  PartitionTree tree;
  double si = 0.0;
};

// Exhaustive search over every set partition of V as the middle level of a
// height-2 tree. Only height 2 is supported; CapacityError for N > 10. The
// first minimum in restricted-growth order wins ties.
OptimalTree brute_force_optimal_tree(const Graph& g, int height = 2);

struct GreedyOptions {
  // Recompute the full SI around every step and compare with the cached delta.
  bool verify_deltas = false;
};

// MERGE / COMPRESS / FILL heuristic. Returns a strict tree of height exactly k.
PartitionTree greedy_coding_tree(const Graph& g, int k, GreedyOptions options = {});

}  // namespace asil
