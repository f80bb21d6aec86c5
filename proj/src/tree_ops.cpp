#include "asil/tree_ops.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <string>

#include "asil/errors.hpp"
#include "asil/lorentz.hpp"

namespace asil {

namespace {

std::vector<Eigen::Index> row_argmax(const Matrix& m) {
  std::vector<Eigen::Index> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < m.cols(); ++j) {
      if (m(i, j) > m(i, best)) best = j;
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

std::optional<Vector> coords_of(const std::vector<Matrix>& z, int h, Eigen::Index row) {
  if (z.empty()) return std::nullopt;
  return z[static_cast<std::size_t>(h)].row(row).transpose();
}

void copy_pruned(const PartitionTree& src, TreeNodeId id, TreeNodeId new_parent, PartitionTree& dst) {
  auto nonempty_children = [&](TreeNodeId u) {
    std::vector<TreeNodeId> out;
    for (TreeNodeId c : src.node(u).children) {
      if (!src.node(c).module.empty()) out.push_back(c);
    }
    return out;
  };
  TreeNodeId u = id;
  while (true) {
    const auto kids = nonempty_children(u);
    if (kids.size() == 1 && src.node(kids[0]).module == src.node(u).module) {
      u = kids[0];
      continue;
    }
    break;
  }
  const TreeNode& n = src.node(u);
  const TreeNodeId self = dst.add_child(new_parent, n.module, n.coords);
  for (TreeNodeId c : nonempty_children(u)) copy_pruned(src, c, self, dst);
}

struct Item {
  std::vector<NodeId> module;
  Vector coords;
  double dist = 0.0;
  // Tree node behind the item; merged items have none.
  std::optional<TreeNodeId> node;
};

void sort_items(std::vector<Item>& items) {
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    return a.module.front() < b.module.front();
  });
}

// Merges the two items farthest from the root until `target` remain.
void merge_farthest(std::vector<Item>& items, std::size_t target, const lorentz::Space& space,
                    const Vector& root) {
  while (items.size() > target) {
    sort_items(items);
    Item v = std::move(items.back());
    items.pop_back();
    Item u = std::move(items.back());
    items.pop_back();
    Item p;
    p.module = u.module;
    p.module.insert(p.module.end(), v.module.begin(), v.module.end());
    std::sort(p.module.begin(), p.module.end());
    Matrix pts(2, u.coords.size());
    pts.row(0) = u.coords.transpose();
    pts.row(1) = v.coords.transpose();
    const double w[] = {1.0, 1.0};
    p.coords = space.weighted_midpoint(pts, w);
    p.dist = space.distance(root, p.coords);
    items.push_back(std::move(p));
  }
  sort_items(items);
}

}  // namespace

LevelAssignment harden(const LevelAssignment& c) {
  LevelAssignment out;
  for (const Matrix& m : c.c) {
    Matrix h = Matrix::Zero(m.rows(), m.cols());
    const auto arg = row_argmax(m);
    for (std::size_t i = 0; i < arg.size(); ++i) h(static_cast<Eigen::Index>(i), arg[i]) = 1.0;
    out.c.push_back(std::move(h));
  }
  return out;
}

PartitionTree decode_tree(const LevelAssignment& c, const std::vector<Matrix>& embeddings) {
  const int height = c.height();
  if (height < 1) throw ValidationError("assignment has no levels");
  if (!embeddings.empty() && embeddings.size() != static_cast<std::size_t>(height + 1)) {
    throw DimensionError("expected embeddings for levels 0.." + std::to_string(height));
  }
  const auto n = static_cast<std::size_t>(c.c.back().rows());
  // ancestor[h][i]: index at level h of graph node i's ancestor.
  std::vector<std::vector<Eigen::Index>> ancestor(static_cast<std::size_t>(height + 1),
                                                  std::vector<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) ancestor[static_cast<std::size_t>(height)][i] = static_cast<Eigen::Index>(i);
  for (int h = height; h >= 1; --h) {
    const auto arg = row_argmax(c.level(h));
    for (std::size_t i = 0; i < n; ++i) {
      ancestor[static_cast<std::size_t>(h - 1)][i] =
          arg[static_cast<std::size_t>(ancestor[static_cast<std::size_t>(h)][i])];
    }
  }

  PartitionTree t(n);
  if (!embeddings.empty()) t.node(t.root()).coords = embeddings[0].row(0).transpose();
  struct Pending {
    TreeNodeId id;
    int level;
  };
  std::vector<Pending> queue{{t.root(), 0}};
  for (std::size_t q = 0; q < queue.size(); ++q) {
    const Pending cur = queue[q];
    if (cur.level == height) continue;
    const int h = cur.level + 1;
    // Preimages at level h restricted to this node's module, by ascending index.
    std::map<Eigen::Index, std::vector<NodeId>> groups;
    for (NodeId i : t.node(cur.id).module) groups[ancestor[static_cast<std::size_t>(h)][i]].push_back(i);
    for (auto& [k, members] : groups) {
      const TreeNodeId child = t.add_child(cur.id, std::move(members), coords_of(embeddings, h, k));
      queue.push_back({child, h});
    }
  }
  return t;
}

PartitionTree prune(const PartitionTree& t) {
  t.validate(true);
  PartitionTree out(t.graph_nodes());
  out.node(out.root()).coords = t.node(t.root()).coords;
  for (TreeNodeId c : t.node(t.root()).children) {
    if (!t.node(c).module.empty()) copy_pruned(t, c, out.root(), out);
  }
  return out;
}

Labels canonical_labels(const Labels& labels) {
  std::map<int, int> remap;
  Labels out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = remap.try_emplace(labels[i], static_cast<int>(remap.size()));
    out[i] = it->second;
  }
  return out;
}

Labels clusters_natural(const PartitionTree& t) {
  Labels labels(t.graph_nodes(), -1);
  int next = 0;
  for (TreeNodeId c : t.node(t.root()).children) {
    const auto& m = t.node(c).module;
    if (m.empty()) continue;
    for (NodeId v : m) labels[v] = next;
    ++next;
  }
  for (int l : labels) {
    if (l < 0) throw ValidationError("tree does not cover every graph node");
  }
  return canonical_labels(labels);
}

Labels clusters_with_k(const PartitionTree& t, std::size_t k, double kappa) {
  const std::size_t n = t.graph_nodes();
  if (k == 0 || k > n) {
    throw ValidationError("cluster count must lie in [1, " + std::to_string(n) + "], got " + std::to_string(k));
  }
  const lorentz::Space space(kappa);
  auto coords = [&](TreeNodeId id) {
    const auto& c = t.node(id).coords;
    if (!c) throw ValidationError("tree node " + std::to_string(id) + " has no coordinates");
    return *c;
  };
  const Vector root = t.node(t.root()).coords ? *t.node(t.root()).coords : space.origin(static_cast<std::size_t>(coords(t.node(t.root()).children.front()).size()));
  auto make_item = [&](TreeNodeId id) {
    Item it;
    it.module = t.node(id).module;
    it.coords = coords(id);
    it.dist = space.distance(root, it.coords);
    it.node = id;
    return it;
  };
  auto splittable = [&](const Item& it) {
    if (!it.node) return false;
    std::size_t nonempty = 0;
    for (TreeNodeId c : t.node(*it.node).children) nonempty += t.node(c).module.empty() ? 0 : 1;
    return nonempty >= 2;
  };

  std::vector<Item> items;
  for (TreeNodeId c : t.node(t.root()).children) {
    if (!t.node(c).module.empty()) items.push_back(make_item(c));
  }
  sort_items(items);

  if (items.size() > k) merge_farthest(items, k, space, root);
  while (items.size() < k) {
    bool split_any = false;
    const std::vector<Item> snapshot = items;
    for (const Item& v : snapshot) {
      if (!splittable(v)) continue;
      std::vector<Item> children;
      for (TreeNodeId c : t.node(*v.node).children) {
        if (!t.node(c).module.empty()) children.push_back(make_item(c));
      }
      const std::size_t others = items.size() - 1;
      if (others + children.size() > k) merge_farthest(children, k - others, space, root);
      items.erase(std::find_if(items.begin(), items.end(),
                               [&](const Item& it) { return it.node == v.node && it.module == v.module; }));
      for (Item& c : children) items.push_back(std::move(c));
      split_any = true;
      if (items.size() >= k) break;
    }
    sort_items(items);
    if (!split_any) {
      throw CapacityError("tree cannot be split into " + std::to_string(k) + " clusters; reached " +
                          std::to_string(items.size()));
    }
  }

  Labels labels(n, -1);
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (NodeId v : items[i].module) labels[v] = static_cast<int>(i);
  }
  return canonical_labels(labels);
}

}  // namespace asil
