#include "asil/partition_tree.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "asil/errors.hpp"

namespace asil {

PartitionTree::PartitionTree(std::size_t graph_nodes) : graph_nodes_(graph_nodes) {
  TreeNode root;
  root.module.resize(graph_nodes);
  std::iota(root.module.begin(), root.module.end(), NodeId{0});
  nodes_.push_back(std::move(root));
}

const TreeNode& PartitionTree::node(TreeNodeId id) const {
  if (id >= nodes_.size()) throw ValidationError("tree node " + std::to_string(id) + " does not exist");
  return nodes_[id];
}

TreeNode& PartitionTree::node(TreeNodeId id) {
  if (id >= nodes_.size()) throw ValidationError("tree node " + std::to_string(id) + " does not exist");
  return nodes_[id];
}

TreeNodeId PartitionTree::add_child(TreeNodeId parent, std::vector<NodeId> module,
                                    std::optional<Vector> coords) {
  const int depth = node(parent).height + 1;
  std::sort(module.begin(), module.end());
  TreeNode n;
  n.id = nodes_.size();
  n.module = std::move(module);
  n.parent = parent;
  n.height = depth;
  n.coords = std::move(coords);
  nodes_.push_back(std::move(n));
  nodes_[parent].children.push_back(nodes_.back().id);
  return nodes_.back().id;
}

TreeNodeId PartitionTree::insert_above(TreeNodeId child) {
  if (child == root()) throw ValidationError("cannot insert above the root");
  const TreeNodeId parent = *node(child).parent;
  TreeNode n;
  n.id = nodes_.size();
  n.module = nodes_[child].module;
  n.parent = parent;
  n.children = {child};
  n.height = nodes_[parent].height + 1;
  n.coords = nodes_[child].coords;
  nodes_.push_back(std::move(n));
  const TreeNodeId id = nodes_.back().id;
  auto& siblings = nodes_[parent].children;
  *std::find(siblings.begin(), siblings.end(), child) = id;
  nodes_[child].parent = id;
  refresh_depths(child);
  return id;
}

void PartitionTree::refresh_depths(TreeNodeId from) {
  std::vector<TreeNodeId> stack{from};
  while (!stack.empty()) {
    const TreeNodeId id = stack.back();
    stack.pop_back();
    nodes_[id].height = nodes_[*nodes_[id].parent].height + 1;
    for (TreeNodeId c : nodes_[id].children) stack.push_back(c);
  }
}

int PartitionTree::height() const {
  int h = 0;
  for (const TreeNode& n : nodes_) h = std::max(h, n.height);
  return h;
}

std::vector<TreeNodeId> PartitionTree::at_height(int depth) const {
  std::vector<TreeNodeId> out;
  for (const TreeNode& n : nodes_) {
    if (n.height == depth) out.push_back(n.id);
  }
  return out;
}

std::vector<TreeNodeId> PartitionTree::leaves() const {
  std::vector<TreeNodeId> out;
  for (const TreeNode& n : nodes_) {
    if (n.is_leaf()) out.push_back(n.id);
  }
  return out;
}

void PartitionTree::validate(bool relaxed) const {
  auto fail = [](TreeNodeId id, const std::string& what) {
    throw ValidationError("tree node " + std::to_string(id) + ": " + what);
  };
  const TreeNode& r = nodes_.at(0);
  if (r.parent) fail(0, "root has a parent");
  if (r.height != 0) fail(0, "root depth must be 0");
  if (r.module.size() != graph_nodes_) fail(0, "root module must contain every graph node");
  for (std::size_t i = 0; i < r.module.size(); ++i) {
    if (r.module[i] != i) fail(0, "root module must contain every graph node");
  }

  const int h = height();
  std::vector<char> seen(graph_nodes_);
  for (const TreeNode& n : nodes_) {
    if (n.id != 0) {
      if (!n.parent || *n.parent >= nodes_.size()) fail(n.id, "missing parent");
      const TreeNode& p = nodes_[*n.parent];
      if (std::find(p.children.begin(), p.children.end(), n.id) == p.children.end()) {
        fail(n.id, "not listed among its parent's children");
      }
      if (n.height != p.height + 1) fail(n.id, "depth is not parent depth + 1");
    }
    if (n.is_leaf()) {
      if (n.module.size() > 1 || (n.module.empty() && !relaxed)) {
        fail(n.id, "leaf module must be a singleton");
      }
      if (!relaxed && n.height != h) fail(n.id, "leaf not at the tree height");
      continue;
    }
    // Children modules must partition this module.
    std::vector<NodeId> merged;
    for (TreeNodeId c : n.children) {
      if (c >= nodes_.size() || nodes_[c].parent != n.id) fail(n.id, "inconsistent child link");
      const auto& m = nodes_[c].module;
      merged.insert(merged.end(), m.begin(), m.end());
    }
    std::sort(merged.begin(), merged.end());
    if (merged != n.module) fail(n.id, "children modules do not partition the module");
  }
  for (const TreeNode& n : nodes_) {
    if (!n.is_leaf()) continue;
    for (NodeId v : n.module) {
      if (v >= graph_nodes_ || seen[v]) fail(n.id, "graph node appears in two leaves");
      seen[v] = 1;
    }
  }
}

}  // namespace asil
