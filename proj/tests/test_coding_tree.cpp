#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "asil/coding_tree.hpp"
#include "asil/errors.hpp"
#include "asil/invariants.hpp"

using namespace asil;

namespace {

std::vector<Edge> clique(NodeId base, NodeId size) {
  std::vector<Edge> e;
  for (NodeId i = 0; i < size; ++i) {
    for (NodeId j = i + 1; j < size; ++j) e.push_back({base + i, base + j, 1.0});
  }
  return e;
}

Graph triangles_bridge() {
  auto e = clique(0, 3);
  const auto f = clique(3, 3);
  e.insert(e.end(), f.begin(), f.end());
  e.push_back({0, 3, 1.0});
  return Graph::from_edges(6, e);
}

Graph disjoint_cliques(NodeId size) {
  auto e = clique(0, size);
  const auto f = clique(size, size);
  e.insert(e.end(), f.begin(), f.end());
  return Graph::from_edges(2 * size, e);
}

// Root -> one module per group -> singleton leaves.
PartitionTree two_level(std::size_t n, const std::vector<std::vector<NodeId>>& groups) {
  PartitionTree t(n);
  for (const auto& g : groups) {
    const TreeNodeId m = t.add_child(t.root(), g);
    for (NodeId v : g) t.add_child(m, {v});
  }
  return t;
}

std::vector<std::vector<NodeId>> middle_modules(const PartitionTree& t) {
  std::vector<std::vector<NodeId>> out;
  for (TreeNodeId c : t.node(t.root()).children) out.push_back(t.node(c).module);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("partition tree validation") {
  PartitionTree t = two_level(4, {{0, 1}, {2, 3}});
  CHECK_NOTHROW(t.validate());
  CHECK(t.height() == 2);
  CHECK(t.leaves().size() == 4);

  PartitionTree gap(3);
  gap.add_child(gap.root(), {0, 1});
  CHECK_THROWS_AS(gap.validate(), ValidationError);

  PartitionTree overlap(2);
  overlap.add_child(overlap.root(), {0});
  overlap.add_child(overlap.root(), {0, 1});
  CHECK_THROWS_AS(overlap.validate(true), ValidationError);

  PartitionTree relaxed = two_level(2, {{0, 1}});
  relaxed.add_child(relaxed.root(), {});
  CHECK_THROWS_AS(relaxed.validate(), ValidationError);
  CHECK_NOTHROW(relaxed.validate(true));
}

TEST_CASE("node structural information") {
  const Graph g = triangles_bridge();
  const PartitionTree t = two_level(6, {{0, 1, 2}, {3, 4, 5}});
  const TreeNodeId a = t.node(t.root()).children[0];
  CHECK(node_si(g, t, a) == doctest::Approx(1.0 / 14.0).epsilon(1e-12));
  // Node 1 has degree 2 inside A.
  TreeNodeId leaf = 0;
  for (TreeNodeId c : t.node(a).children) {
    if (t.node(c).module == std::vector<NodeId>{1}) leaf = c;
  }
  CHECK(node_si(g, t, leaf) == doctest::Approx(-(2.0 / 14.0) * std::log2(2.0 / 7.0)).epsilon(1e-12));
  CHECK(node_si(g, t, leaf) == doctest::Approx(0.258193).epsilon(1e-6));
  CHECK_THROWS_AS(node_si(g, t, t.root()), ValidationError);

  PartitionTree chain(6);
  const TreeNodeId all = chain.add_child(chain.root(), {0, 1, 2, 3, 4, 5});
  CHECK(node_si(g, chain, all) == 0.0);
}

TEST_CASE("tree structural information") {
  const Graph g = disjoint_cliques(4);
  const PartitionTree t = two_level(8, {{0, 1, 2, 3}, {4, 5, 6, 7}});
  double leaves = 0.0;
  for (TreeNodeId id : t.leaves()) leaves += node_si(g, t, id);
  CHECK(tree_si(g, t) == doctest::Approx(leaves).epsilon(1e-14));

  std::mt19937_64 rng(1);
  for (int i = 0; i < 10; ++i) {
    const Graph r = fixtures::random_graph(rng, 7, 0.5);
    PartitionTree flat(7);
    for (NodeId v = 0; v < 7; ++v) flat.add_child(flat.root(), {v});
    CHECK(tree_si(r, flat) == doctest::Approx(one_dim_entropy(r)).epsilon(1e-12));
  }
}

TEST_CASE("brute-force optimal tree") {
  const auto opt = brute_force_optimal_tree(disjoint_cliques(3));
  CHECK(middle_modules(opt.tree) == std::vector<std::vector<NodeId>>{{0, 1, 2}, {3, 4, 5}});

  // Splitting K4 into two pairs beats the single module: 5/3 against 2.
  auto k4 = clique(0, 4);
  const auto k = brute_force_optimal_tree(Graph::from_edges(4, k4));
  CHECK(middle_modules(k.tree) == std::vector<std::vector<NodeId>>{{0, 1}, {2, 3}});
  CHECK(k.si == doctest::Approx(5.0 / 3.0).epsilon(1e-14));
  CHECK(tree_si(Graph::from_edges(4, k4), two_level(4, {{0, 1, 2, 3}})) == doctest::Approx(2.0));

  const Edge single[] = {{0, 1, 1}};
  CHECK(brute_force_optimal_tree(Graph::from_edges(2, single)).si == doctest::Approx(1.0));

  const Graph tb = triangles_bridge();
  const auto best = brute_force_optimal_tree(tb);
  const double candidate = tree_si(tb, two_level(6, {{0, 1, 2}, {3, 4, 5}}));
  CHECK(best.si <= candidate + 1e-12);
  CHECK(best.si == doctest::Approx(candidate).epsilon(1e-12));

  std::vector<Edge> big;
  for (NodeId i = 0; i + 1 < 11; ++i) big.push_back({i, i + 1, 1.0});
  CHECK_THROWS_AS(brute_force_optimal_tree(Graph::from_edges(11, big)), CapacityError);
  CHECK_THROWS_AS(brute_force_optimal_tree(tb, 3), ValidationError);
}

TEST_CASE("greedy coding tree on separable graphs") {
  const Graph g = disjoint_cliques(4);
  const PartitionTree t = greedy_coding_tree(g, 2);
  CHECK_NOTHROW(t.validate());
  CHECK(t.height() == 2);
  CHECK(middle_modules(t) == std::vector<std::vector<NodeId>>{{0, 1, 2, 3}, {4, 5, 6, 7}});
  CHECK(tree_si(g, t) == doctest::Approx(brute_force_optimal_tree(g).si).epsilon(1e-12));
  CHECK_THROWS_AS(greedy_coding_tree(g, 1), ValidationError);
}

TEST_CASE("greedy coding tree on karate") {
  const Graph g = load_graph(std::filesystem::path(ASIL_DATA_DIR) / "karate.tsv");
  const PartitionTree t2 = greedy_coding_tree(g, 2, {.verify_deltas = true});
  const PartitionTree t3 = greedy_coding_tree(g, 3);
  CHECK_NOTHROW(t2.validate());
  CHECK(t3.height() == 3);
  const double si2 = tree_si(g, t2);
  CHECK(si2 <= one_dim_entropy(g));
  CHECK(si2 == doctest::Approx(3.832627727088472).epsilon(1e-12));
  CHECK(tree_si(g, t3) == doctest::Approx(3.469222883151690).epsilon(1e-12));
  CHECK(tree_si(g, t3) <= si2 + 1e-12);
}

TEST_CASE("flexibility: empty leaves and duplicate modules") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 10; ++i) {
    const Graph g = fixtures::random_graph(rng, 8, 0.5);
    const PartitionTree t = greedy_coding_tree(g, 2);
    const double base = tree_si(g, t);
    PartitionTree empty = t;
    empty.add_child(empty.node(empty.root()).children.front(), {});
    CHECK(std::abs(tree_si(g, empty) - base) < 1e-12);
    PartitionTree dup = t;
    dup.insert_above(dup.node(dup.root()).children.front());
    CHECK(std::abs(tree_si(g, dup) - base) < 1e-12);
  }
}

TEST_CASE("identifiability of a small clique") {
  const Graph g = fixtures::identifiability_graph();
  const auto v1 = fixtures::range(0, 20);
  const auto v2 = fixtures::range(20, 40);
  const auto eps = fixtures::range(40, 44);
  auto merged = v1;
  merged.insert(merged.end(), eps.begin(), eps.end());
  const double three = tree_si(g, two_level(44, {v1, v2, eps}));
  const double two = tree_si(g, two_level(44, {merged, v2}));
  CHECK(three < two);
}
