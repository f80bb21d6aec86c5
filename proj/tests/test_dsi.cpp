#include <doctest.h>

#include <cmath>
#include <random>

#include "asil/coding_tree.hpp"
#include "asil/dsi.hpp"
#include "asil/errors.hpp"
#include "asil/invariants.hpp"

using namespace asil;

namespace {

Graph triangles_bridge() {
  const Edge e[] = {{0, 1, 1}, {1, 2, 1}, {0, 2, 1}, {3, 4, 1}, {4, 5, 1}, {3, 5, 1}, {0, 3, 1}};
  return Graph::from_edges(6, e);
}

PartitionTree triangle_tree() {
  PartitionTree t(6);
  for (const std::vector<NodeId>& g : {std::vector<NodeId>{0, 1, 2}, std::vector<NodeId>{3, 4, 5}}) {
    const TreeNodeId m = t.add_child(t.root(), g);
    for (NodeId v : g) t.add_child(m, {v});
  }
  return t;
}

Matrix random_stochastic(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  // Entries bounded away from 0 and 1.
  std::uniform_real_distribution<double> u(0.2, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  for (Eigen::Index i = 0; i < rows; ++i) m.row(i) /= m.row(i).sum();
  return m;
}

LevelAssignment random_soft(std::mt19937_64& rng, Eigen::Index n, Eigen::Index mid) {
  LevelAssignment c;
  c.c.push_back(Matrix::Ones(mid, 1));
  c.c.push_back(random_stochastic(rng, n, mid));
  return c;
}

}  // namespace

TEST_CASE("cumulative assignment") {
  const Edge e[] = {{0, 1, 1}, {1, 2, 2}};
  const Graph g = Graph::from_edges(3, e);
  LevelAssignment c;
  c.c.push_back(Matrix::Ones(2, 1));
  Matrix c2(3, 2);
  c2 << 1, 0, 1, 0, 0, 1;
  c.c.push_back(c2);
  const AssignmentStack s = cumulative_assignment(g, c);
  CHECK(s.height() == 2);
  CHECK(s.s[2].isIdentity());
  CHECK(s.s[1] == c2);
  CHECK(s.s[0] == Matrix::Ones(3, 1));
  CHECK(s.volumes[1](0) == doctest::Approx(4.0));
  CHECK(s.volumes[1](1) == doctest::Approx(2.0));
  CHECK(s.volumes[0](0) == doctest::Approx(6.0));

  LevelAssignment one;
  one.c.push_back(Matrix::Ones(3, 1));
  CHECK(cumulative_assignment(g, one).s[0] == one.c[0]);

  LevelAssignment bad;
  bad.c.push_back(Matrix::Ones(2, 1));
  bad.c.push_back(Matrix::Ones(3, 3) / 3.0);
  CHECK_THROWS_AS(cumulative_assignment(g, bad), DimensionError);
}

TEST_CASE("hard stack equals tree structural information") {
  const Graph g = triangles_bridge();
  const PartitionTree t = triangle_tree();
  const LevelAssignment c = hard_assignment(t);
  CHECK(c.is_hard());
  const AssignmentStack s = cumulative_assignment(g, c);
  const double edgewise = level_dsi_edgewise(g, s, 1) + level_dsi_edgewise(g, s, 2);
  CHECK(std::abs(edgewise - tree_si(g, t)) <= 1e-9);
  CHECK(std::abs(total_dsi(g, c) - tree_si(g, t)) <= 1e-9);
  CHECK_THROWS_AS(level_dsi_edgewise(g, s, 3), ValidationError);
  CHECK_THROWS_AS(level_dsi_nodewise(g, c, 0), ValidationError);
}

TEST_CASE("single cluster level has zero information") {
  const Graph g = triangles_bridge();
  PartitionTree t(6);
  const TreeNodeId all = t.add_child(t.root(), {0, 1, 2, 3, 4, 5});
  for (NodeId v = 0; v < 6; ++v) t.add_child(all, {v});
  const LevelAssignment c = hard_assignment(t);
  CHECK(level_dsi_edgewise(g, cumulative_assignment(g, c), 1) == 0.0);
  CHECK(level_dsi_nodewise(g, c, 1) == 0.0);
}

TEST_CASE("edgewise and nodewise forms agree on random stacks") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 3 + static_cast<std::size_t>(trial % 10);
    const Graph g = fixtures::random_graph(rng, n, 0.4);
    const LevelAssignment c = fixtures::random_hard_stack(rng, n, 2 + trial % 2);
    const AssignmentStack s = cumulative_assignment(g, c);
    double sum = 0.0;
    for (int h = 1; h <= c.height(); ++h) {
      const double e = level_dsi_edgewise(g, s, h);
      const double v = level_dsi_nodewise(g, c, h);
      CHECK(std::abs(e - v) <= 1e-9);
      sum += v;
    }
    CHECK(std::abs(sum - total_dsi(g, c)) <= 1e-12);
    CHECK(std::abs(additivity_decomposition(g, c) - one_dim_entropy(g)) <= 1e-9);
  }
  const Graph g = triangles_bridge();
  const LevelAssignment soft = random_soft(rng, 6, 3);
  const AssignmentStack s = cumulative_assignment(g, soft);
  const double e = level_dsi_edgewise(g, s, 2);
  CHECK(std::isfinite(e));
  CHECK(std::abs(e - level_dsi_nodewise(g, soft, 2)) <= 1e-9);
  CHECK_THROWS_AS(additivity_decomposition(g, soft), ValidationError);
}

TEST_CASE("nodewise work stays sparse at the leaf level") {
  std::mt19937_64 rng(2);
  std::vector<Edge> e;
  const NodeId n = 200;
  for (NodeId i = 0; i + 1 < n; ++i) e.push_back({i, i + 1, 1.0});
  const Graph g = Graph::from_edges(n, e);
  LevelAssignment c;
  c.c.push_back(Matrix::Ones(4, 1));
  c.c.push_back(random_stochastic(rng, n, 4));
  DsiWork work;
  level_dsi_nodewise(g, c, 2, &work);
  CHECK(work.entries > 0);
  CHECK(work.entries < static_cast<std::size_t>(n) * n / 4);
}

TEST_CASE("additivity on a triangle") {
  const Edge e[] = {{0, 1, 1}, {1, 2, 1}, {0, 2, 1}};
  const Graph g = Graph::from_edges(3, e);
  PartitionTree t(3);
  const TreeNodeId a = t.add_child(t.root(), {0, 1});
  const TreeNodeId b = t.add_child(t.root(), {2});
  t.add_child(a, {0});
  t.add_child(a, {1});
  t.add_child(b, {2});
  CHECK(additivity_decomposition(g, hard_assignment(t)) == doctest::Approx(std::log2(3.0)).epsilon(1e-12));
  PartitionTree flat(3);
  for (NodeId v = 0; v < 3; ++v) flat.add_child(flat.root(), {v});
  CHECK(additivity_decomposition(g, hard_assignment(flat)) == doctest::Approx(std::log2(3.0)).epsilon(1e-12));
}

TEST_CASE("conductance bound on hard stacks") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Graph g = fixtures::random_graph(rng, 8, 0.5);
    const PartitionTree t = greedy_coding_tree(g, 2);
    double tau = tree_si(g, t) / one_dim_entropy(g);
    double lowest = 1e300;
    for (const TreeNode& node : t.nodes()) {
      if (node.id == t.root() || node.module.size() == g.node_count()) continue;
      const double vol = volume(g, node.module);
      if (vol <= 0.0) continue;
      lowest = std::min(lowest, cut_weight(g, node.module) / vol);
    }
    CHECK(tau >= lowest - 1e-9);
  }
}

TEST_CASE("flexibility of the differentiable form") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const Graph g = fixtures::random_graph(rng, 7, 0.5);
    const LevelAssignment c = random_soft(rng, 7, 3);
    const double base = total_dsi(g, c);
    LevelAssignment padded = c;
    padded.c[0] = Matrix::Ones(4, 1);
    Matrix wide = Matrix::Zero(7, 4);
    wide.leftCols(3) = c.c[1];
    padded.c[1] = wide;
    CHECK(std::abs(total_dsi(g, padded) - base) < 1e-10);

    LevelAssignment dup = c;
    dup.c.insert(dup.c.begin() + 1, Matrix::Identity(3, 3));
    CHECK(std::abs(total_dsi(g, dup) - base) < 1e-10);
  }
}

TEST_CASE("differentiable total matches the plain evaluation and finite differences") {
  const Graph g = triangles_bridge();
  std::mt19937_64 rng(5);
  const LevelAssignment c = random_soft(rng, 6, 3);
  ad::Tensor logits("logits", c.c[1].array().log().matrix());
  ad::Tensor* params[] = {&logits};
  auto loss = [&](ad::Tape& tape) {
    const SparseAdjacency adj = constant_adjacency(tape, g);
    std::vector<ad::Var> levels{tape.constant(c.c[0]), ad::softmax_rows(tape.leaf(logits))};
    return total_dsi(adj, levels);
  };
  {
    ad::Tape tape;
    CHECK(loss(tape).item() == doctest::Approx(total_dsi(g, c)).epsilon(1e-12));
  }
  const auto entries = ad::gradient_check(loss, params);
  for (const auto& e : entries) CHECK(e.relative_error <= 1e-3);
}

TEST_CASE("uniform soft assignment on K4") {
  const Edge e[] = {{0, 1, 1}, {0, 2, 1}, {0, 3, 1}, {1, 2, 1}, {1, 3, 1}, {2, 3, 1}};
  const Graph g = Graph::from_edges(4, e);
  LevelAssignment c;
  c.c.push_back(Matrix::Ones(2, 1));
  c.c.push_back(Matrix::Constant(4, 2, 0.5));
  CHECK(total_dsi(g, c) == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("level assignment validation") {
  LevelAssignment c;
  c.c.push_back(Matrix::Ones(2, 1));
  Matrix bad(3, 2);
  bad << 0.5, 0.6, 1, 0, 0, 1;
  c.c.push_back(bad);
  CHECK_THROWS_AS(c.validate(3), ValidationError);
  CHECK_THROWS_AS(c.level(3), ValidationError);
}
