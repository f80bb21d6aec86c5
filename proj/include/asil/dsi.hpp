#pragma once

#include <vector>

#include "asil/autodiff.hpp"
#include "asil/graph.hpp"
#include "asil/partition_tree.hpp"

namespace asil {

// Per-level parent assignments. c[h-1] holds C^h (N_h x N_{h-1}) for
// h = 1..H, so c.front() is the N_1 x 1 column into the root and c.back() maps
// the N graph nodes to level H-1.
struct LevelAssignment {
  std::vector<Matrix> c;

  int height() const { return static_cast<int>(c.size()); }
  const Matrix& level(int h) const;
  // Shapes chain correctly, entries lie in [0, 1] and rows sum to 1 within 1e-9.
  void validate(std::size_t node_count) const;
  bool is_hard() const;
};

// s[h] = S^h (N x N_h) for h = 0..H, with S^H = I and S^0 the all-ones column.
// volumes[h] = V^h and parent_volumes[h] = C^h V^{h-1} (h >= 1).
struct AssignmentStack {
  std::vector<Matrix> s;
  std::vector<Vector> volumes;
  std::vector<Vector> parent_volumes;
  int height() const { return static_cast<int>(s.size()) - 1; }
};

AssignmentStack cumulative_assignment(const Graph& g, const LevelAssignment& c);

double level_dsi_edgewise(const Graph& g, const AssignmentStack& stack, int h);

// Counts storage entries read or written while coarsening, for complexity checks.
struct DsiWork {
  std::size_t entries = 0;
};

// Same quantity from the coarsened weights W^h = (S^h)^T A S^h, built level by
// level from the sparse adjacency without ever forming S^h.
double level_dsi_nodewise(const Graph& g, const LevelAssignment& c, int h, DsiWork* work = nullptr);

// Sum over all levels of the node-wise form.
double total_dsi(const Graph& g, const LevelAssignment& c);

// Symmetric sparse adjacency on a tape: both orientations of every edge.
struct SparseAdjacency {
  ad::PatternPtr pattern;
  ad::Var values;
};

ad::PatternPtr adjacency_pattern(const Graph& g);
Matrix adjacency_values(const Graph& g, const ad::SparsePattern& pattern);
SparseAdjacency constant_adjacency(ad::Tape& tape, const Graph& g);

// Differentiable total DSI. levels[h-1] is C^h as in LevelAssignment.
ad::Var total_dsi(const SparseAdjacency& adjacency, const std::vector<ad::Var>& levels);

// Level-by-level entropy decomposition of a hard assignment; equals the
// one-dimensional entropy. ValidationError for soft input.
double additivity_decomposition(const Graph& g, const LevelAssignment& c);

// Binary assignment of a strict tree; level h columns follow at_height(h-1)
// order and level-H rows follow graph-node order.
LevelAssignment hard_assignment(const PartitionTree& t);

}  // namespace asil
