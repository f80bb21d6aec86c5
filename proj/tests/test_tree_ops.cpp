#include <doctest.h>

#include <random>

#include "asil/coding_tree.hpp"
#include "asil/errors.hpp"
#include "asil/invariants.hpp"
#include "asil/lorentz.hpp"
#include "asil/tree_ops.hpp"

using namespace asil;

namespace {

std::vector<std::vector<NodeId>> modules_at(const PartitionTree& t, int depth) {
  std::vector<std::vector<NodeId>> out;
  for (TreeNodeId id : t.at_height(depth)) out.push_back(t.node(id).module);
  std::sort(out.begin(), out.end());
  return out;
}

Vector at(double dist, double angle) {
  Vector v(2);
  v << dist * std::cos(angle), dist * std::sin(angle);
  return lorentz::Space().project_origin(v);
}

}  // namespace

TEST_CASE("harden takes the row argmax with ties to the lowest index") {
  LevelAssignment c;
  c.c.push_back(Matrix::Ones(2, 1));
  Matrix m(3, 2);
  m << 0.7, 0.3, 0.5, 0.5, 0.1, 0.9;
  c.c.push_back(m);
  const LevelAssignment h = harden(c);
  Matrix expect(3, 2);
  expect << 1, 0, 1, 0, 0, 1;
  CHECK(h.c[1] == expect);
  CHECK(h.c[0] == Matrix::Ones(2, 1));
  CHECK(h.is_hard());
}

TEST_CASE("decode a two-clique assignment") {
  LevelAssignment c;
  c.c.push_back(Matrix::Ones(2, 1));
  Matrix m = Matrix::Zero(16, 2);
  for (int i = 0; i < 16; ++i) m(i, i < 8 ? 0 : 1) = 1.0;
  c.c.push_back(m);
  const PartitionTree t = decode_tree(c, {});
  CHECK_NOTHROW(t.validate());
  CHECK(t.height() == 2);
  CHECK(modules_at(t, 1) == std::vector<std::vector<NodeId>>{fixtures::range(0, 8), fixtures::range(8, 16)});
  CHECK(t.leaves().size() == 16);
  CHECK(clusters_natural(t) == Labels{0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1});

  std::vector<Matrix> z{Matrix::Zero(1, 3), Matrix::Ones(2, 3), Matrix::Constant(16, 3, 2.0)};
  const PartitionTree withz = decode_tree(c, z);
  for (const TreeNode& n : withz.nodes()) CHECK(n.coords.has_value());
  CHECK_THROWS_AS(decode_tree(c, {Matrix::Zero(1, 3)}), DimensionError);
}

TEST_CASE("decoding the assignment of a tree returns the tree") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const Graph g = fixtures::random_graph(rng, 9, 0.5);
    const PartitionTree t = greedy_coding_tree(g, 2 + trial % 2);
    const PartitionTree back = decode_tree(hard_assignment(t), {});
    for (int d = 0; d <= t.height(); ++d) CHECK(modules_at(back, d) == modules_at(t, d));
  }
}

TEST_CASE("prune keeps structural information and is idempotent") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const Graph g = fixtures::random_graph(rng, 8, 0.5);
    PartitionTree t = greedy_coding_tree(g, 2);
    const double base = tree_si(g, t);
    t.add_child(t.node(t.root()).children.front(), {});
    t.insert_above(t.node(t.root()).children.back());
    const PartitionTree p = prune(t);
    CHECK(std::abs(tree_si(g, p) - base) < 1e-12);
    for (const TreeNode& n : p.nodes()) CHECK((n.id == p.root() || !n.module.empty()));
    const PartitionTree pp = prune(p);
    CHECK(pp.size() == p.size());
    for (int d = 0; d <= p.height(); ++d) CHECK(modules_at(pp, d) == modules_at(p, d));
  }
}

TEST_CASE("canonical labels") {
  CHECK(canonical_labels({5, 5, 2, 9, 2}) == Labels{0, 0, 1, 2, 1});
}

TEST_CASE("clusters with a target count") {
  // Three singleton clusters at distances 1, 2 and 3 from the root.
  PartitionTree t(3);
  t.node(t.root()).coords = lorentz::Space().origin(3);
  t.add_child(t.root(), {0}, at(1.0, 0.0));
  t.add_child(t.root(), {1}, at(2.0, 1.5));
  t.add_child(t.root(), {2}, at(3.0, 3.0));

  CHECK(clusters_with_k(t, 3) == clusters_natural(t));
  CHECK(clusters_with_k(t, 2) == Labels{0, 1, 1});
  CHECK(clusters_with_k(t, 1) == Labels{0, 0, 0});
  CHECK_THROWS_AS(clusters_with_k(t, 0), ValidationError);
  CHECK_THROWS_AS(clusters_with_k(t, 4), ValidationError);

  PartitionTree bare(3);
  bare.add_child(bare.root(), {0, 1, 2});
  CHECK_THROWS_AS(clusters_with_k(bare, 1), ValidationError);

  // One module that splits into pairs, then singletons.
  PartitionTree deep(4);
  deep.node(deep.root()).coords = lorentz::Space().origin(3);
  const TreeNodeId all = deep.add_child(deep.root(), {0, 1, 2, 3}, at(0.5, 0.0));
  const TreeNodeId a = deep.add_child(all, {0, 1}, at(1.0, 0.2));
  const TreeNodeId b = deep.add_child(all, {2, 3}, at(1.0, 2.5));
  deep.add_child(a, {0}, at(2.0, 0.1));
  deep.add_child(a, {1}, at(2.0, 0.4));
  deep.add_child(b, {2}, at(2.0, 2.4));
  deep.add_child(b, {3}, at(2.0, 2.7));
  CHECK(clusters_with_k(deep, 1) == Labels{0, 0, 0, 0});
  CHECK(clusters_with_k(deep, 2) == Labels{0, 0, 1, 1});
  CHECK(clusters_with_k(deep, 4) == Labels{0, 1, 2, 3});
  const Labels three = clusters_with_k(deep, 3);
  CHECK(*std::max_element(three.begin(), three.end()) == 2);

  PartitionTree shallow(3);
  shallow.node(shallow.root()).coords = lorentz::Space().origin(3);
  shallow.add_child(shallow.root(), {0, 1}, at(1.0, 0.0));
  shallow.add_child(shallow.root(), {2}, at(1.0, 2.0));
  CHECK_THROWS_AS(clusters_with_k(shallow, 3), CapacityError);
}
