#pragma once

#include <optional>
#include <span>
#include <vector>

#include "asil/types.hpp"

namespace asil {

using TreeNodeId = std::size_t;

struct TreeNode {
  TreeNodeId id = 0;
  // Sorted graph-node ids.
  std::vector<NodeId> module;
  std::optional<TreeNodeId> parent;
  std::vector<TreeNodeId> children;
  // Depth below the root (root = 0).
  int height = 0;
  std::optional<Vector> coords;

  bool is_leaf() const { return children.empty(); }
};

// Rooted tree of modules over graph nodes [0, n). The root is always id 0 and
// carries every graph node. Nodes are only ever added; structural edits that
// delete nodes rebuild a fresh tree.
class PartitionTree {
 public:
  explicit PartitionTree(std::size_t graph_nodes = 0);

  // Appends a child under `parent`; the module is sorted on insertion.
  TreeNodeId add_child(TreeNodeId parent, std::vector<NodeId> module,
                       std::optional<Vector> coords = std::nullopt);

  // Splices a new node carrying `child`'s module between `child` and its parent.
  TreeNodeId insert_above(TreeNodeId child);

  TreeNodeId root() const { return 0; }
  std::size_t graph_nodes() const { return graph_nodes_; }
  std::size_t size() const { return nodes_.size(); }
  const TreeNode& node(TreeNodeId id) const;
  TreeNode& node(TreeNodeId id);
  std::span<const TreeNode> nodes() const { return nodes_; }

  // Maximum depth over all nodes.
  int height() const;
  std::vector<TreeNodeId> at_height(int depth) const;
  std::vector<TreeNodeId> leaves() const;

  // Strict: children partition their parent, leaves are singletons and all
  // leaves sit at depth height(). Relaxed additionally allows empty leaves and
  // leaves at uneven depth. Throws ValidationError describing the first defect.
  void validate(bool relaxed = false) const;

 private:
  void refresh_depths(TreeNodeId from);

  std::size_t graph_nodes_ = 0;
  std::vector<TreeNode> nodes_;
};

}  // namespace asil
