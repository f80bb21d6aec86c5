#pragma once

#include <vector>

#include "asil/dsi.hpp"
#include "asil/partition_tree.hpp"

namespace asil {

// Per-row argmax of every level, ties to the lowest parent index.
LevelAssignment harden(const LevelAssignment& c);

// BFS decoding of the hardened assignment. embeddings[h] (h = 0..H) supplies
// coordinates when present; pass an empty vector to decode without them.
PartitionTree decode_tree(const LevelAssignment& c, const std::vector<Matrix>& embeddings);

// Drops empty-module nodes and collapses every non-root node whose only child
// carries the same module.
PartitionTree prune(const PartitionTree& t);

// Relabels so the first graph node gets 0, the next unseen label 1, and so on.
Labels canonical_labels(const Labels& labels);

// One label per child of the root.
Labels clusters_natural(const PartitionTree& t);

// Merges the farthest-from-root clusters or splits the closest ones until
// exactly k remain. ValidationError for k = 0 or k > N, CapacityError when the
// tree cannot be split far enough.
Labels clusters_with_k(const PartitionTree& t, std::size_t k, double kappa = -1.0);

}  // namespace asil
