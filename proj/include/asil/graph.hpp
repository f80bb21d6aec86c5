#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "asil/types.hpp"

namespace asil {

struct Edge {
  NodeId u;
  NodeId v;
  double weight;
};

struct Neighbor {
  NodeId node;
  double weight;
};

// Weighted undirected simple graph. Immutable after construction.
//
// Edges are stored once with u < v; the CSR neighbor lists hold both
// orientations so degree and cut computations are a single pass.
class Graph {
 public:
  Graph() = default;

  // Duplicate undirected edges (in either orientation) are merged by summing
  // weights. Throws ValidationError on self-loops, non-positive or non-finite
  // weights, and out-of-range endpoints.
  static Graph from_edges(std::size_t node_count, std::span<const Edge> edges);

  // Symmetric nonnegative matrix with zero diagonal; zero entries are non-edges.
  static Graph from_dense(const Matrix& adjacency);

  std::size_t node_count() const { return node_count_; }
  std::size_t edge_count() const { return edges_.size(); }
  std::span<const Edge> edges() const { return edges_; }
  std::span<const Neighbor> neighbors(NodeId v) const;

  double degree(NodeId v) const { return degrees_[v]; }
  const Vector& degrees() const { return degrees_; }
  double volume() const { return volume_; }

  Matrix dense_adjacency() const;

  const std::optional<Matrix>& attributes() const { return attributes_; }
  const std::optional<Labels>& labels() const { return labels_; }

  // Throws DimensionError when the row count / length differs from N.
  Graph with_attributes(Matrix attributes) const;
  Graph with_labels(Labels labels) const;

  // Attribute matrix if present, otherwise the N x N identity (one-hot ids).
  Matrix features_or_identity() const;

 private:
  std::size_t node_count_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::size_t> offsets_;
  std::vector<Neighbor> adjacency_;
  Vector degrees_;
  double volume_ = 0.0;
  std::optional<Matrix> attributes_;
  std::optional<Labels> labels_;
};

Graph load_graph(const std::filesystem::path& edge_list,
                 const std::optional<std::filesystem::path>& attributes = std::nullopt,
                 const std::optional<std::filesystem::path>& labels = std::nullopt);

// "node label" pairs, one per line; every node in [0, n) must appear once.
Labels load_labels(const std::filesystem::path& path, std::size_t node_count);

// Throws ValidationError on out-of-range or duplicate members.
void validate_subset(std::size_t node_count, std::span<const NodeId> subset);

double volume(const Graph& g, std::span<const NodeId> subset);
double cut_weight(const Graph& g, std::span<const NodeId> subset);

// cut(S) / min(Vol(S), Vol(V \ S)); DomainError when either volume is zero.
double subset_conductance(const Graph& g, std::span<const NodeId> subset);

// Same quantity on a dense weight matrix. Diagonal entries count towards the
// volume but never towards the cut, so self-loop mass is allowed here.
double subset_conductance(const Matrix& weights, std::span<const NodeId> subset);

// Base-2 one-dimensional structural entropy; DomainError for edgeless graphs.
double one_dim_entropy(const Graph& g);

// Keep the k largest off-diagonal entries per row (ties to the lower column),
// then symmetrize with max(w_ij, w_ji). Requires k < N.
Matrix knn_sparsify(const Matrix& weights, std::size_t k);

// (1 - gamma) * a + gamma * virtual_adjacency, gamma in (0, 1].
Matrix fuse_adjacency(const Matrix& a, const Matrix& virtual_adjacency, double gamma);
Graph fuse_adjacency(const Graph& a, const Graph& virtual_graph, double gamma);

}  // namespace asil
