#include "asil/invariants.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "asil/coding_tree.hpp"
#include "asil/errors.hpp"
#include "asil/lorentz.hpp"
#include "asil/train.hpp"
#include "asil/tree_ops.hpp"

namespace asil {

namespace fixtures {

Graph random_graph(std::mt19937_64& rng, std::size_t n, double p) {
  std::bernoulli_distribution coin(p);
  std::uniform_real_distribution<double> weight(0.5, 2.0);
  while (true) {
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (coin(rng)) edges.push_back({static_cast<NodeId>(i), static_cast<NodeId>(j), weight(rng)});
      }
    }
    if (!edges.empty()) return Graph::from_edges(n, edges);
  }
}

LevelAssignment random_hard_stack(std::mt19937_64& rng, std::size_t n, int height) {
  // widths[h] = N_h, with N_0 = 1 and N_H = n.
  std::vector<std::size_t> widths(static_cast<std::size_t>(height + 1));
  widths[0] = 1;
  widths[static_cast<std::size_t>(height)] = n;
  for (int h = 1; h < height; ++h) {
    std::uniform_int_distribution<std::size_t> w(1, n);
    widths[static_cast<std::size_t>(h)] = w(rng);
  }
  LevelAssignment c;
  for (int h = 1; h <= height; ++h) {
    const std::size_t rows = widths[static_cast<std::size_t>(h)];
    const std::size_t cols = widths[static_cast<std::size_t>(h - 1)];
    std::uniform_int_distribution<std::size_t> pick(0, cols - 1);
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows; ++i) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(pick(rng))) = 1.0;
    c.c.push_back(std::move(m));
  }
  return c;
}

Graph two_cliques(std::size_t size, std::size_t bridges) {
  std::vector<Edge> edges;
  for (std::size_t base : {std::size_t{0}, size}) {
    for (std::size_t i = 0; i < size; ++i) {
      for (std::size_t j = i + 1; j < size; ++j) {
        edges.push_back({static_cast<NodeId>(base + i), static_cast<NodeId>(base + j), 1.0});
      }
    }
  }
  for (std::size_t b = 0; b < bridges; ++b) {
    edges.push_back({static_cast<NodeId>(b), static_cast<NodeId>(size + b), 1.0});
  }
  return Graph::from_edges(2 * size, edges);
}

Graph identifiability_graph() {
  std::vector<Edge> edges;
  auto clique = [&](NodeId begin, NodeId end) {
    for (NodeId i = begin; i < end; ++i) {
      for (NodeId j = i + 1; j < end; ++j) edges.push_back({i, j, 1.0});
    }
  };
  clique(0, 20);
  clique(20, 40);
  clique(40, 44);
  for (NodeId b = 0; b < 3; ++b) edges.push_back({b, static_cast<NodeId>(20 + b), 1.0});
  edges.push_back({3, 40, 1.0});
  edges.push_back({4, 41, 1.0});
  return Graph::from_edges(44, edges);
}

std::vector<NodeId> range(NodeId begin, NodeId end) {
  std::vector<NodeId> out;
  for (NodeId i = begin; i < end; ++i) out.push_back(i);
  return out;
}

}  // namespace fixtures

namespace {

using fixtures::random_graph;
using fixtures::random_hard_stack;

struct Corpus {
  Graph g;
  LevelAssignment c;
};

// The shared corpus of criteria 1-4: 50 graphs, N <= 12, p = 0.4, H in {2, 3}.
std::vector<Corpus> corpus(std::uint64_t seed) {
  std::mt19937_64 rng(seed * 7919ULL + 1ULL);
  std::uniform_int_distribution<std::size_t> size(3, 12);
  std::uniform_int_distribution<int> height(2, 3);
  std::vector<Corpus> out;
  for (int i = 0; i < 50; ++i) {
    const std::size_t n = size(rng);
    Graph g = random_graph(rng, n, 0.4);
    LevelAssignment c = random_hard_stack(rng, n, height(rng));
    out.push_back({std::move(g), std::move(c)});
  }
  return out;
}

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), f, a, b);
  return buf;
}

CriterionResult equivalence(std::uint64_t seed) {
  double worst = 0.0;
  for (const Corpus& k : corpus(seed)) {
    const PartitionTree t = decode_tree(k.c, {});
    worst = std::max(worst, std::abs(total_dsi(k.g, k.c) - tree_si(k.g, t)));
  }
  return {1, "dsi equals tree si on hard stacks", worst <= 1e-9, fmt("max |dsi - si| = %.3e", worst)};
}

CriterionResult nodewise(std::uint64_t seed) {
  double worst = 0.0;
  for (const Corpus& k : corpus(seed)) {
    const AssignmentStack stack = cumulative_assignment(k.g, k.c);
    for (int h = 1; h <= k.c.height(); ++h) {
      worst = std::max(worst, std::abs(level_dsi_edgewise(k.g, stack, h) - level_dsi_nodewise(k.g, k.c, h)));
    }
  }
  return {2, "edgewise and nodewise levels agree", worst <= 1e-9, fmt("max level gap = %.3e", worst)};
}

CriterionResult additivity(std::uint64_t seed) {
  double worst = 0.0;
  for (const Corpus& k : corpus(seed)) {
    worst = std::max(worst, std::abs(additivity_decomposition(k.g, k.c) - one_dim_entropy(k.g)));
  }
  return {3, "additivity recovers one-dimensional entropy", worst <= 1e-9, fmt("max gap = %.3e", worst)};
}

CriterionResult conductance_bound(std::uint64_t seed) {
  double worst = std::numeric_limits<double>::infinity();
  for (const Corpus& k : corpus(seed)) {
    const PartitionTree t = decode_tree(k.c, {});
    // Module conductance relative to the module's own volume.
    double phi = std::numeric_limits<double>::infinity();
    for (const TreeNode& n : t.nodes()) {
      if (!n.parent) continue;
      const double vol = volume(k.g, n.module);
      if (vol <= 0.0) continue;
      phi = std::min(phi, cut_weight(k.g, n.module) / vol);
    }
    const double tau = tree_si(k.g, t) / one_dim_entropy(k.g);
    worst = std::min(worst, tau - phi);
  }
  return {4, "normalized si bounds module conductance", worst >= -1e-9, fmt("min tau - phi = %.3e", worst)};
}

CriterionResult flexibility(std::uint64_t seed) {
  std::mt19937_64 rng(seed * 104729ULL + 5ULL);
  std::uniform_int_distribution<std::size_t> size(3, 12);
  std::uniform_int_distribution<int> height(2, 3);
  double worst_empty = 0.0;
  double worst_dup = 0.0;
  for (int i = 0; i < 20; ++i) {
    const std::size_t n = size(rng);
    const Graph g = random_graph(rng, n, 0.4);
    const PartitionTree t = decode_tree(random_hard_stack(rng, n, height(rng)), {});
    const double base = tree_si(g, t);
    std::uniform_int_distribution<TreeNodeId> pick(0, t.size() - 1);

    PartitionTree with_empty = t;
    TreeNodeId host = pick(rng);
    while (with_empty.node(host).is_leaf()) host = pick(rng);
    with_empty.add_child(host, {}, std::nullopt);
    worst_empty = std::max(worst_empty, std::abs(tree_si(g, with_empty) - base));

    PartitionTree with_dup = t;
    TreeNodeId target = pick(rng);
    while (target == with_dup.root()) target = pick(rng);
    with_dup.insert_above(target);
    worst_dup = std::max(worst_dup, std::abs(tree_si(g, with_dup) - base));
  }
  const bool ok = worst_empty < 1e-10 && worst_dup < 1e-10;
  return {5, "empty and duplicate nodes leave si unchanged", ok,
          fmt("max change empty %.3e, duplicate %.3e", worst_empty, worst_dup)};
}

bool middle_modules_are(const PartitionTree& t, const std::set<std::vector<NodeId>>& expected) {
  std::set<std::vector<NodeId>> got;
  for (TreeNodeId id : t.at_height(1)) got.insert(t.node(id).module);
  return got == expected;
}

CriterionResult greedy_optimality() {
  bool ok = true;
  std::ostringstream detail;
  const std::vector<std::pair<std::string, Graph>> cases = {
      {"2xK4", fixtures::two_cliques(4, 0)},
      {"2xK5+bridge", fixtures::two_cliques(5, 1)},
  };
  for (const auto& [name, g] : cases) {
    const NodeId half = static_cast<NodeId>(g.node_count() / 2);
    const PartitionTree t = greedy_coding_tree(g, 2);
    const bool modules = middle_modules_are(t, {fixtures::range(0, half), fixtures::range(half, 2 * half)});
    const double gap = tree_si(g, t) - brute_force_optimal_tree(g, 2).si;
    ok = ok && modules && std::abs(gap) <= 1e-9;
    detail << name << ": modules " << (modules ? "ok" : "wrong") << ", si gap " << fmt("%.3e", gap) << "; ";
  }
  return {6, "greedy coding tree on separable fixtures", ok, detail.str()};
}

CriterionResult monotone_height(std::uint64_t seed) {
  std::mt19937_64 rng(seed * 15485863ULL + 11ULL);
  std::uniform_int_distribution<std::size_t> size(4, 16);
  double worst = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < 20; ++i) {
    const Graph g = random_graph(rng, size(rng), 0.4);
    const double si2 = tree_si(g, greedy_coding_tree(g, 2));
    const double si3 = tree_si(g, greedy_coding_tree(g, 3));
    worst = std::max(worst, si3 - si2);
  }
  return {7, "greedy height 3 never worse than height 2", worst <= 1e-12, fmt("max si3 - si2 = %.3e", worst)};
}

Vector random_point(std::mt19937_64& rng, const lorentz::Space& space, std::size_t d, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector v(static_cast<Eigen::Index>(d));
  for (auto& x : v) x = normal(rng);
  return space.project_origin(v);
}

Vector random_beta(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> radius(0.0, 0.95);
  Vector b(static_cast<Eigen::Index>(d));
  for (auto& x : b) x = normal(rng);
  return b.normalized() * radius(rng);
}

CriterionResult lorentz_algebra(std::uint64_t seed) {
  std::mt19937_64 rng(seed * 32452843ULL + 3ULL);
  std::uniform_int_distribution<std::size_t> dim(1, 4);
  const lorentz::Space space(-1.0);
  double metric = 0.0;
  double inner = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t d = dim(rng);
    const auto boost = lorentz::LorentzBoost::from_beta(random_beta(rng, d));
    const Matrix& l = boost.matrix();
    const Matrix eta = lorentz::minkowski_metric(d + 1);
    metric = std::max(metric, (l.transpose() * eta * l - eta).cwiseAbs().maxCoeff());
    const Vector x = random_point(rng, space, d, 1.0);
    const Vector y = random_point(rng, space, d, 1.0);
    const double before = lorentz::minkowski_inner(x, y);
    inner = std::max(inner, std::abs(lorentz::minkowski_inner(boost.apply(x), boost.apply(y)) - before) /
                                std::max(1.0, std::abs(before)));
  }
  double consistency = 0.0;
  std::uniform_int_distribution<int> count(2, 8);
  std::uniform_real_distribution<double> weight(0.1, 2.0);
  for (int i = 0; i < 100; ++i) {
    const std::size_t d = dim(rng);
    const int m = count(rng);
    Matrix pts(m, static_cast<Eigen::Index>(d + 1));
    std::vector<double> w(static_cast<std::size_t>(m));
    for (int k = 0; k < m; ++k) {
      pts.row(k) = random_point(rng, space, d, 1.0).transpose();
      w[static_cast<std::size_t>(k)] = weight(rng);
    }
    const auto boost = lorentz::LorentzBoost::from_beta(random_beta(rng, d));
    const Vector a = boost.apply(space.weighted_midpoint(pts, w));
    const Vector b = space.weighted_midpoint(boost.apply_rows(pts), w);
    consistency = std::max(consistency, (a - b).cwiseAbs().maxCoeff() / std::max(1.0, a.cwiseAbs().maxCoeff()));
  }
  const bool ok = metric <= 1e-9 && inner <= 1e-9 && consistency <= 1e-8;
  std::ostringstream detail;
  detail << fmt("metric %.3e, inner %.3e, ", metric, inner) << fmt("midpoint %.3e", consistency);
  return {8, "boosts are isometries and commute with midpoints", ok, detail.str()};
}

CriterionResult centroid_optimality(std::uint64_t seed) {
  std::mt19937_64 rng(seed * 49979687ULL + 7ULL);
  std::uniform_int_distribution<std::size_t> dim(1, 4);
  std::uniform_int_distribution<int> count(2, 8);
  std::uniform_real_distribution<double> weight(0.1, 2.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const lorentz::Space space(-1.0);
  int wins = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = dim(rng);
    const int m = count(rng);
    Matrix pts(m, static_cast<Eigen::Index>(d + 1));
    std::vector<double> w(static_cast<std::size_t>(m));
    for (int k = 0; k < m; ++k) {
      pts.row(k) = random_point(rng, space, d, 1.0).transpose();
      w[static_cast<std::size_t>(k)] = weight(rng);
    }
    auto objective = [&](const Vector& y) {
      double s = 0.0;
      for (int k = 0; k < m; ++k) {
        s += w[static_cast<std::size_t>(k)] * space.squared_lorentzian_distance(pts.row(k).transpose(), y);
      }
      return s;
    };
    const Vector mu = space.weighted_midpoint(pts, w);
    const double best = objective(mu);
    bool beaten = false;
    for (int p = 0; p < 1000 && !beaten; ++p) {
      Vector u(static_cast<Eigen::Index>(d + 1));
      for (auto& x : u) x = normal(rng);
      u = space.project_tangent(mu, u);
      const double norm = std::sqrt(std::max(0.0, lorentz::minkowski_inner(u, u)));
      if (norm == 0.0) continue;
      const Vector y = space.exp_map(mu, u * (1e-2 / norm));
      beaten = objective(y) < best;
    }
    wins += beaten ? 0 : 1;
  }
  return {9, "weighted midpoint minimizes squared distance", wins == 100,
          std::to_string(wins) + "/100 trials unbeaten"};
}

CriterionResult gradient_correctness(std::uint64_t seed) {
  // No two nodes share a closed neighbourhood: twins embed identically and
  // their exact distance ties make the kNN support jump under perturbation.
  const std::vector<Edge> edges = {{0, 1, 1.0}, {1, 2, 1.5}, {2, 3, 1.0}, {3, 4, 0.5},
                                   {4, 5, 1.0}, {5, 0, 2.0}, {0, 3, 1.0}};
  const Graph g = Graph::from_edges(6, edges);
  TrainConfig cfg;
  cfg.knn = 2;
  cfg.widths = {3};
  cfg.hidden = 4;
  cfg.seed = seed;
  Trainer trainer(g, cfg);
  // A couple of updates move the boost off zero so every branch is exercised.
  trainer.step(0);
  trainer.step(1);
  const auto report = ad::gradient_check([&](ad::Tape& t) { return trainer.augmented_pass(t, 2).loss; },
                                         trainer.model().parameter_ptrs(), 1e-5);
  double worst = 0.0;
  std::string worst_name;
  for (const auto& e : report) {
    if (e.relative_error > worst) {
      worst = e.relative_error;
      worst_name = e.name;
    }
  }
  return {10, "augmented objective gradient matches finite differences", worst <= 1e-3,
          fmt("max relative error %.3e", worst) + (worst_name.empty() ? "" : " (" + worst_name + ")") + " over " +
              std::to_string(report.size()) + " tensors"};
}

CriterionResult identifiability() {
  const Graph g = fixtures::identifiability_graph();
  auto height2 = [&](const std::vector<std::vector<NodeId>>& modules) {
    PartitionTree t(g.node_count());
    for (const auto& m : modules) {
      const TreeNodeId id = t.add_child(t.root(), m, std::nullopt);
      for (NodeId v : m) t.add_child(id, {v}, std::nullopt);
    }
    return tree_si(g, t);
  };
  const double three = height2({fixtures::range(0, 20), fixtures::range(20, 40), fixtures::range(40, 44)});
  auto merged_module = fixtures::range(0, 20);
  for (NodeId v = 40; v < 44; ++v) merged_module.push_back(v);
  const double merged = height2({merged_module, fixtures::range(20, 40)});
  return {11, "minority clique is kept apart", three < merged, fmt("si three %.9f vs merged %.9f", three, merged)};
}

double dense_conductance(const Matrix& w, const std::vector<NodeId>& s) {
  return subset_conductance(w, s);
}

CriterionResult fused_conductance(std::uint64_t seed) {
  std::mt19937_64 rng(seed * 86028121ULL + 13ULL);
  std::uniform_int_distribution<std::size_t> size(3, 10);
  std::uniform_real_distribution<double> boost(1.0, 3.0);
  int fallbacks = 0;
  long checked = 0;
  long violations = 0;
  for (int i = 0; i < 20; ++i) {
    const std::size_t n = size(rng);
    const Graph g = random_graph(rng, n, 0.4);
    const Matrix a = g.dense_adjacency();
    std::uniform_int_distribution<int> cluster(0, 2);
    std::vector<int> label(n);
    for (auto& l : label) l = cluster(rng);

    // Intra-cluster reweighting; falls back to added self-loop mass when the
    // premise fails for some subset.
    Matrix virt = a;
    for (std::size_t u = 0; u < n; ++u) {
      for (std::size_t v = u + 1; v < n; ++v) {
        if (label[u] == label[v] && a(u, v) > 0) virt(u, v) = virt(v, u) = a(u, v) * boost(rng);
      }
    }
    std::vector<std::vector<NodeId>> subsets;
    for (std::uint32_t mask = 1; mask + 1 < (1u << n); ++mask) {
      std::vector<NodeId> s;
      for (std::size_t v = 0; v < n; ++v) {
        if (mask & (1u << v)) s.push_back(static_cast<NodeId>(v));
      }
      const double vs = volume(g, s);
      if (vs > 0.0 && vs < g.volume()) subsets.push_back(std::move(s));
    }
    auto premise = [&](const Matrix& m) {
      for (const auto& s : subsets) {
        if (dense_conductance(m, s) > dense_conductance(a, s) + 1e-12) return false;
      }
      return true;
    };
    if (!premise(virt)) {
      ++fallbacks;
      virt = a;
      for (std::size_t v = 0; v < n; ++v) virt(v, v) += g.degree(static_cast<NodeId>(v)) * boost(rng);
      if (!premise(virt)) throw StateError("fallback virtual graph violates the premise");
    }
    for (double gamma : {0.25, 0.5, 1.0}) {
      const Matrix fused = (1.0 - gamma) * a + gamma * virt;
      for (const auto& s : subsets) {
        ++checked;
        if (dense_conductance(fused, s) > dense_conductance(a, s) + 1e-12) ++violations;
      }
    }
  }
  std::ostringstream detail;
  detail << violations << " violations over " << checked << " subset checks, " << fallbacks
         << " self-loop fallbacks";
  return {12, "fusion never raises conductance", violations == 0, detail.str()};
}

}  // namespace

std::vector<int> invariant_ids() { return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}; }

CriterionResult run_invariant(int id, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  if (id < 1 || id > 12) throw ValidationError("unknown invariant " + std::to_string(id));
  CriterionResult r;
  try {
    switch (id) {
      case 1: r = equivalence(seed); break;
      case 2: r = nodewise(seed); break;
      case 3: r = additivity(seed); break;
      case 4: r = conductance_bound(seed); break;
      case 5: r = flexibility(seed); break;
      case 6: r = greedy_optimality(); break;
      case 7: r = monotone_height(seed); break;
      case 8: r = lorentz_algebra(seed); break;
      case 9: r = centroid_optimality(seed); break;
      case 10: r = gradient_correctness(seed); break;
      case 11: r = identifiability(); break;
      case 12: r = fused_conductance(seed); break;
    }
  } catch (const std::exception& e) {
    r = {id, "invariant " + std::to_string(id), false, std::string("threw: ") + e.what()};
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (id == 1 && r.seconds >= 10.0) {
    r.pass = false;
    r.detail += " (too slow)";
  }
  return r;
}

std::vector<CriterionResult> run_invariants(std::uint64_t seed) {
  std::vector<CriterionResult> out;
  for (int id : invariant_ids()) out.push_back(run_invariant(id, seed));
  return out;
}

std::string format_result(const CriterionResult& r) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), " [%.2fs]", r.seconds);
  return std::string(r.pass ? "PASS" : "FAIL") + " " + std::to_string(r.id) + " " + r.name + ": " + r.detail + buf;
}

}  // namespace asil
