#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "asil/dsi.hpp"
#include "asil/graph.hpp"

namespace asil {

namespace fixtures {

// G(n, p) with weights uniform in [0.5, 2]; redrawn until it has an edge.
Graph random_graph(std::mt19937_64& rng, std::size_t n, double p);
// Random hard stack of the given height over n nodes with random level widths.
LevelAssignment random_hard_stack(std::mt19937_64& rng, std::size_t n, int height);
// Two cliques of `size` nodes joined by `bridges` unit edges (i, size + i).
Graph two_cliques(std::size_t size, std::size_t bridges);
// Two K20 joined by 3 bridges plus a K4 hanging off the first by 2 edges.
Graph identifiability_graph();
std::vector<NodeId> range(NodeId begin, NodeId end);

}  // namespace fixtures

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

// Graph-level invariants that need no training, numbered as in the acceptance
// list (1..12).
std::vector<int> invariant_ids();
CriterionResult run_invariant(int id, std::uint64_t seed = 0);
std::vector<CriterionResult> run_invariants(std::uint64_t seed = 0);

std::string format_result(const CriterionResult& r);

}  // namespace asil
