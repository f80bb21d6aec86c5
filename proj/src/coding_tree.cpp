#include "asil/coding_tree.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "asil/errors.hpp"

namespace asil {

namespace {

double si_term(double cut, double vol, double parent_vol, double total) {
  if (vol <= 0.0 || parent_vol <= 0.0 || total <= 0.0 || cut == 0.0) return 0.0;
  return -(cut / total) * std::log2(vol / parent_vol);
}

// Mutable tree used while the greedy heuristic runs. Ids [0, N) are the
// graph-node leaves; internal nodes are appended after the root.
struct WorkTree {
  struct Node {
    std::vector<NodeId> module;
    std::size_t parent = 0;
    std::vector<std::size_t> children;
    double vol = 0.0;
    double cut = 0.0;
    bool alive = true;
  };

  const Graph* g = nullptr;
  double total = 0.0;
  std::size_t root = 0;
  std::vector<Node> nodes;

  // Independent recomputation from the graph; the oracle behind verify_deltas.
  double full_si() const {
    double s = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (!nodes[i].alive || i == root) continue;
      const auto& n = nodes[i];
      const double vol = volume(*g, n.module);
      const double pvol = volume(*g, nodes[n.parent].module);
      s += si_term(cut_weight(*g, n.module), vol, pvol, total);
    }
    return s;
  }

  int bottom_up_height(std::size_t id) const {
    int h = 0;
    for (std::size_t c : nodes[id].children) h = std::max(h, bottom_up_height(c) + 1);
    return h;
  }
};

void check_delta(double before, double after, double predicted, const char* stage) {
  if (std::abs((after - before) - predicted) > 1e-9) {
    throw StateError(std::string(stage) + ": cached delta " + std::to_string(predicted) +
                     " disagrees with recomputed " + std::to_string(after - before));
  }
}

void merge_stage(WorkTree& t, bool verify) {
  // Inter-module weights between root children.
  std::map<std::size_t, std::map<std::size_t, double>> w;
  for (const Edge& e : t.g->edges()) {
    w[e.u][e.v] += e.weight;
    w[e.v][e.u] += e.weight;
  }
  while (t.nodes[t.root].children.size() > 2) {
    double best = 0.0;
    std::size_t bi = 0, bj = 0;
    bool found = false;
    for (const auto& [a, row] : w) {
      for (const auto& [b, weight] : row) {
        if (b <= a) continue;
        const double vp = t.nodes[a].vol + t.nodes[b].vol;
        const double red = t.total > 0.0 && vp > 0.0 ? (2.0 * weight / t.total) * std::log2(t.total / vp) : 0.0;
        if (red > best) {
          best = red;
          bi = a;
          bj = b;
          found = true;
        }
      }
    }
    if (!found) {
      // Nothing left to gain; merge the two lowest ids so the root ends binary.
      std::vector<std::size_t> sorted = t.nodes[t.root].children;
      std::sort(sorted.begin(), sorted.end());
      bi = sorted[0];
      bj = sorted[1];
      best = 0.0;
    }
    const double before = verify ? t.full_si() : 0.0;

    WorkTree::Node p;
    p.module = t.nodes[bi].module;
    p.module.insert(p.module.end(), t.nodes[bj].module.begin(), t.nodes[bj].module.end());
    std::sort(p.module.begin(), p.module.end());
    p.parent = t.root;
    p.children = {bi, bj};
    p.vol = t.nodes[bi].vol + t.nodes[bj].vol;
    double wij = 0.0;
    if (auto it = w.find(bi); it != w.end()) {
      if (auto jt = it->second.find(bj); jt != it->second.end()) wij = jt->second;
    }
    p.cut = t.nodes[bi].cut + t.nodes[bj].cut - 2.0 * wij;
    const std::size_t pid = t.nodes.size();
    t.nodes.push_back(std::move(p));
    t.nodes[bi].parent = pid;
    t.nodes[bj].parent = pid;
    auto& rc = t.nodes[t.root].children;
    rc.erase(std::remove_if(rc.begin(), rc.end(), [&](std::size_t c) { return c == bi || c == bj; }),
             rc.end());
    rc.push_back(pid);

    std::map<std::size_t, double> merged;
    for (std::size_t src : {bi, bj}) {
      auto it = w.find(src);
      if (it == w.end()) continue;
      for (const auto& [nb, weight] : it->second) {
        if (nb == bi || nb == bj) continue;
        merged[nb] += weight;
        w[nb].erase(src);
      }
      w.erase(it);
    }
    for (const auto& [nb, weight] : merged) w[nb][pid] = weight;
    if (!merged.empty()) w[pid] = std::move(merged);

    if (verify) check_delta(before, t.full_si(), -best, "merge");
  }
}

void compress_stage(WorkTree& t, int k, bool verify) {
  const std::size_t n = t.g->node_count();
  while (t.bottom_up_height(t.root) > k) {
    double best = 0.0;
    std::size_t pick = 0;
    bool found = false;
    for (std::size_t i = n; i < t.nodes.size(); ++i) {
      const auto& node = t.nodes[i];
      if (!node.alive || i == t.root || node.children.empty()) continue;
      double child_cut = 0.0;
      for (std::size_t c : node.children) child_cut += t.nodes[c].cut;
      const double pvol = t.nodes[node.parent].vol;
      const double inc = node.vol > 0.0 && t.total > 0.0
                             ? ((child_cut - node.cut) / t.total) * std::log2(pvol / node.vol)
                             : 0.0;
      if (!found || inc < best) {
        best = inc;
        pick = i;
        found = true;
      }
    }
    if (!found) throw StateError("compress: no removable internal node");
    const double before = verify ? t.full_si() : 0.0;

    auto& node = t.nodes[pick];
    auto& siblings = t.nodes[node.parent].children;
    auto pos = std::find(siblings.begin(), siblings.end(), pick);
    pos = siblings.erase(pos);
    siblings.insert(pos, node.children.begin(), node.children.end());
    for (std::size_t c : node.children) t.nodes[c].parent = node.parent;
    node.children.clear();
    node.alive = false;

    if (verify) check_delta(before, t.full_si(), best, "compress");
  }
}

void fill_into(const WorkTree& t, std::size_t id, TreeNodeId parent_id, int parent_depth, int k,
               PartitionTree& out) {
  const int depth = k - t.bottom_up_height(id);
  TreeNodeId attach = parent_id;
  for (int d = parent_depth + 1; d < depth; ++d) attach = out.add_child(attach, t.nodes[id].module);
  const TreeNodeId self = out.add_child(attach, t.nodes[id].module);
  for (std::size_t c : t.nodes[id].children) fill_into(t, c, self, depth, k, out);
}

}  // namespace

double node_si(const Graph& g, const PartitionTree& t, TreeNodeId alpha) {
  const TreeNode& n = t.node(alpha);
  if (!n.parent) throw ValidationError("node_si is undefined for the root");
  if (n.module.empty()) return 0.0;
  const double vol = volume(g, n.module);
  const double pvol = volume(g, t.node(*n.parent).module);
  return si_term(cut_weight(g, n.module), vol, pvol, g.volume());
}

double tree_si(const Graph& g, const PartitionTree& t) {
  if (t.graph_nodes() != g.node_count()) {
    throw ValidationError("tree covers " + std::to_string(t.graph_nodes()) + " nodes, graph has " +
                          std::to_string(g.node_count()));
  }
  t.validate(true);
  double s = 0.0;
  for (const TreeNode& n : t.nodes()) {
    if (n.parent) s += node_si(g, t, n.id);
  }
  return s;
}

OptimalTree brute_force_optimal_tree(const Graph& g, int height) {
  if (height != 2) throw ValidationError("brute force search supports height 2 only");
  const std::size_t n = g.node_count();
  if (n > 10) throw CapacityError("brute force search is limited to 10 nodes, got " + std::to_string(n));
  if (n == 0) throw ValidationError("empty graph");
  const double total = g.volume();
  const Vector& deg = g.degrees();

  std::vector<int> label(n, 0);
  std::vector<int> best_label;
  double best = 0.0;
  std::vector<double> vol(n), internal(n);
  // Restricted growth strings enumerate each set partition once.
  std::vector<int> prefix_max(n, 0);
  while (true) {
    const int blocks = *std::max_element(label.begin(), label.end()) + 1;
    std::fill(vol.begin(), vol.begin() + blocks, 0.0);
    std::fill(internal.begin(), internal.begin() + blocks, 0.0);
    for (std::size_t i = 0; i < n; ++i) vol[label[i]] += deg[static_cast<Eigen::Index>(i)];
    for (const Edge& e : g.edges()) {
      if (label[e.u] == label[e.v]) internal[label[e.u]] += 2.0 * e.weight;
    }
    double si = 0.0;
    for (int b = 0; b < blocks; ++b) si += si_term(vol[b] - internal[b], vol[b], total, total);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = deg[static_cast<Eigen::Index>(i)];
      si += si_term(d, d, vol[label[i]], total);
    }
    if (best_label.empty() || si < best) {
      best = si;
      best_label = label;
    }

    // Next restricted growth string.
    std::size_t i = n;
    while (i-- > 1) {
      const int limit = prefix_max[i - 1] + 1;
      if (label[i] < limit) break;
    }
    if (i == 0) break;
    ++label[i];
    prefix_max[i] = std::max(prefix_max[i - 1], label[i]);
    for (std::size_t j = i + 1; j < n; ++j) {
      label[j] = 0;
      prefix_max[j] = prefix_max[j - 1];
    }
  }

  OptimalTree out{PartitionTree(n), best};
  const int blocks = *std::max_element(best_label.begin(), best_label.end()) + 1;
  for (int b = 0; b < blocks; ++b) {
    std::vector<NodeId> module;
    for (std::size_t i = 0; i < n; ++i) {
      if (best_label[i] == b) module.push_back(static_cast<NodeId>(i));
    }
    const TreeNodeId mid = out.tree.add_child(out.tree.root(), module);
    for (NodeId v : module) out.tree.add_child(mid, {v});
  }
  return out;
}

PartitionTree greedy_coding_tree(const Graph& g, int k, GreedyOptions options) {
  if (k < 2) throw ValidationError("coding tree height must be at least 2");
  const std::size_t n = g.node_count();
  if (n < 2) throw ValidationError("coding tree needs at least two graph nodes");

  WorkTree t;
  t.g = &g;
  t.total = g.volume();
  t.nodes.resize(n + 1);
  t.root = n;
  for (std::size_t i = 0; i < n; ++i) {
    auto& leaf = t.nodes[i];
    leaf.module = {static_cast<NodeId>(i)};
    leaf.parent = t.root;
    leaf.vol = g.degree(static_cast<NodeId>(i));
    leaf.cut = leaf.vol;
    t.nodes[t.root].children.push_back(i);
    t.nodes[t.root].module.push_back(static_cast<NodeId>(i));
  }
  t.nodes[t.root].vol = t.total;

  merge_stage(t, options.verify_deltas);
  compress_stage(t, k, options.verify_deltas);

  PartitionTree out(n);
  for (std::size_t c : t.nodes[t.root].children) fill_into(t, c, out.root(), 0, k, out);
  out.validate();
  return out;
}

}  // namespace asil
