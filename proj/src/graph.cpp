#include "asil/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

#include "asil/errors.hpp"

namespace asil {

namespace {

bool is_blank_or_comment(const std::string& line) {
  auto pos = line.find_first_not_of(" \t\r");
  return pos == std::string::npos || line[pos] == '#';
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return in;
}

}  // namespace

Graph Graph::from_edges(std::size_t node_count, std::span<const Edge> edges) {
  if (node_count == 0) throw ValidationError("graph must have at least one node");
  std::map<std::pair<NodeId, NodeId>, double> merged;
  for (const Edge& e : edges) {
    if (e.u >= node_count || e.v >= node_count) {
      throw ValidationError("edge (" + std::to_string(e.u) + ", " + std::to_string(e.v) +
                            ") references a node >= " + std::to_string(node_count));
    }
    if (e.u == e.v) throw ValidationError("self-loop on node " + std::to_string(e.u));
    if (!std::isfinite(e.weight) || e.weight <= 0.0) {
      throw ValidationError("edge weight must be positive and finite, got " +
                            std::to_string(e.weight));
    }
    merged[{std::min(e.u, e.v), std::max(e.u, e.v)}] += e.weight;
  }

  Graph g;
  g.node_count_ = node_count;
  g.edges_.reserve(merged.size());
  for (const auto& [key, w] : merged) g.edges_.push_back({key.first, key.second, w});

  std::vector<std::size_t> counts(node_count, 0);
  for (const Edge& e : g.edges_) {
    ++counts[e.u];
    ++counts[e.v];
  }
  g.offsets_.assign(node_count + 1, 0);
  std::partial_sum(counts.begin(), counts.end(), g.offsets_.begin() + 1);
  g.adjacency_.resize(g.offsets_.back());
  std::vector<std::size_t> cursor(g.offsets_.begin(), g.offsets_.end() - 1);
  g.degrees_ = Vector::Zero(static_cast<Eigen::Index>(node_count));
  for (const Edge& e : g.edges_) {
    g.adjacency_[cursor[e.u]++] = {e.v, e.weight};
    g.adjacency_[cursor[e.v]++] = {e.u, e.weight};
    g.degrees_[e.u] += e.weight;
    g.degrees_[e.v] += e.weight;
  }
  for (std::size_t v = 0; v < node_count; ++v) {
    std::sort(g.adjacency_.begin() + static_cast<std::ptrdiff_t>(g.offsets_[v]),
              g.adjacency_.begin() + static_cast<std::ptrdiff_t>(g.offsets_[v + 1]),
              [](const Neighbor& a, const Neighbor& b) { return a.node < b.node; });
  }
  g.volume_ = g.degrees_.sum();
  return g;
}

Graph Graph::from_dense(const Matrix& adjacency) {
  if (adjacency.rows() != adjacency.cols()) throw DimensionError("adjacency must be square");
  const auto n = static_cast<std::size_t>(adjacency.rows());
  std::vector<Edge> edges;
  for (Eigen::Index i = 0; i < adjacency.rows(); ++i) {
    if (adjacency(i, i) != 0.0) throw ValidationError("dense adjacency has a nonzero diagonal");
    for (Eigen::Index j = i + 1; j < adjacency.cols(); ++j) {
      const double w = adjacency(i, j);
      if (std::abs(w - adjacency(j, i)) > 1e-12 * std::max(1.0, std::abs(w))) {
        throw ValidationError("dense adjacency is not symmetric");
      }
      if (w < 0.0) throw ValidationError("dense adjacency has a negative entry");
      if (w > 0.0) edges.push_back({static_cast<NodeId>(i), static_cast<NodeId>(j), w});
    }
  }
  return from_edges(n, edges);
}

std::span<const Neighbor> Graph::neighbors(NodeId v) const {
  return {adjacency_.data() + offsets_[v], offsets_[v + 1] - offsets_[v]};
}

Matrix Graph::dense_adjacency() const {
  const auto n = static_cast<Eigen::Index>(node_count_);
  Matrix a = Matrix::Zero(n, n);
  for (const Edge& e : edges_) {
    a(e.u, e.v) = e.weight;
    a(e.v, e.u) = e.weight;
  }
  return a;
}

Graph Graph::with_attributes(Matrix attributes) const {
  if (static_cast<std::size_t>(attributes.rows()) != node_count_) {
    throw DimensionError("attribute rows (" + std::to_string(attributes.rows()) +
                         ") != node count (" + std::to_string(node_count_) + ")");
  }
  Graph g = *this;
  g.attributes_ = std::move(attributes);
  return g;
}

Graph Graph::with_labels(Labels labels) const {
  if (labels.size() != node_count_) {
    throw DimensionError("label count (" + std::to_string(labels.size()) +
                         ") != node count (" + std::to_string(node_count_) + ")");
  }
  Graph g = *this;
  g.labels_ = std::move(labels);
  return g;
}

Matrix Graph::features_or_identity() const {
  if (attributes_) return *attributes_;
  const auto n = static_cast<Eigen::Index>(node_count_);
  return Matrix::Identity(n, n);
}

Graph load_graph(const std::filesystem::path& edge_list,
                 const std::optional<std::filesystem::path>& attributes,
                 const std::optional<std::filesystem::path>& labels) {
  auto in = open_or_throw(edge_list);
  std::vector<Edge> edges;
  std::size_t max_id = 0;
  bool any = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank_or_comment(line)) continue;
    std::istringstream ss(line);
    long long src = -1, dst = -1;
    double w = 1.0;
    if (!(ss >> src >> dst)) throw ParseError("expected 'src dst [weight]'", line_no);
    if (src < 0 || dst < 0) throw ParseError("negative node id", line_no);
    std::string rest;
    if (ss >> rest) {
      try {
        std::size_t used = 0;
        w = std::stod(rest, &used);
        if (used != rest.size()) throw ParseError("bad weight '" + rest + "'", line_no);
      } catch (const std::logic_error&) {
        throw ParseError("bad weight '" + rest + "'", line_no);
      }
      if (ss >> rest) throw ParseError("trailing tokens", line_no);
    }
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw ValidationError("non-positive weight " + rest + " on line " + std::to_string(line_no));
    }
    if (src == dst) throw ValidationError("self-loop on line " + std::to_string(line_no));
    edges.push_back({static_cast<NodeId>(src), static_cast<NodeId>(dst), w});
    max_id = std::max<std::size_t>(max_id, static_cast<std::size_t>(std::max(src, dst)));
    any = true;
  }
  if (!any) throw ValidationError("edge list " + edge_list.string() + " has no edges");

  Graph g = Graph::from_edges(max_id + 1, edges);

  if (attributes) {
    auto ain = open_or_throw(*attributes);
    std::vector<std::vector<double>> rows;
    line_no = 0;
    while (std::getline(ain, line)) {
      ++line_no;
      if (is_blank_or_comment(line)) continue;
      std::vector<double> row;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) {
        try {
          row.push_back(std::stod(cell));
        } catch (const std::logic_error&) {
          throw ParseError("bad attribute value '" + cell + "'", line_no);
        }
      }
      if (!rows.empty() && row.size() != rows.front().size()) {
        throw ParseError("ragged attribute row", line_no);
      }
      rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DimensionError("attribute file is empty");
    Matrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < rows[i].size(); ++j)
        x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    g = g.with_attributes(std::move(x));
  }
  if (labels) g = g.with_labels(load_labels(*labels, g.node_count()));
  return g;
}

Labels load_labels(const std::filesystem::path& path, std::size_t node_count) {
  auto in = open_or_throw(path);
  std::vector<std::optional<int>> slots(node_count);
  std::string line;
  std::size_t line_no = 0;
  std::size_t seen = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank_or_comment(line)) continue;
    std::istringstream ss(line);
    long long node = -1;
    int label = 0;
    if (!(ss >> node >> label)) throw ParseError("expected 'node label'", line_no);
    if (node < 0 || static_cast<std::size_t>(node) >= node_count) {
      throw DimensionError("label line " + std::to_string(line_no) + " names node " +
                           std::to_string(node) + " outside [0, " + std::to_string(node_count) +
                           ")");
    }
    if (slots[node]) throw ParseError("duplicate label for node " + std::to_string(node), line_no);
    slots[node] = label;
    ++seen;
  }
  if (seen != node_count) {
    throw DimensionError("labels cover " + std::to_string(seen) + " of " +
                         std::to_string(node_count) + " nodes");
  }
  Labels out(node_count);
  for (std::size_t i = 0; i < node_count; ++i) out[i] = *slots[i];
  return out;
}

void validate_subset(std::size_t node_count, std::span<const NodeId> subset) {
  std::vector<bool> seen(node_count, false);
  for (NodeId v : subset) {
    if (v >= node_count) throw ValidationError("subset member " + std::to_string(v) + " >= N");
    if (seen[v]) throw ValidationError("duplicate subset member " + std::to_string(v));
    seen[v] = true;
  }
}

double volume(const Graph& g, std::span<const NodeId> subset) {
  validate_subset(g.node_count(), subset);
  double vol = 0.0;
  for (NodeId v : subset) vol += g.degree(v);
  return vol;
}

double cut_weight(const Graph& g, std::span<const NodeId> subset) {
  validate_subset(g.node_count(), subset);
  std::vector<bool> inside(g.node_count(), false);
  for (NodeId v : subset) inside[v] = true;
  double cut = 0.0;
  for (NodeId v : subset)
    for (const Neighbor& nb : g.neighbors(v))
      if (!inside[nb.node]) cut += nb.weight;
  return cut;
}

double subset_conductance(const Graph& g, std::span<const NodeId> subset) {
  const double vol = volume(g, subset);
  const double denom = std::min(vol, g.volume() - vol);
  if (!(denom > 0.0)) throw DomainError("conductance undefined: zero volume on one side");
  return cut_weight(g, subset) / denom;
}

double subset_conductance(const Matrix& weights, std::span<const NodeId> subset) {
  const auto n = static_cast<std::size_t>(weights.rows());
  validate_subset(n, subset);
  std::vector<bool> inside(n, false);
  for (NodeId v : subset) inside[v] = true;
  double vol_in = 0.0, vol_out = 0.0, cut = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double row = weights.row(r).sum();
    (inside[i] ? vol_in : vol_out) += row;
    if (!inside[i]) continue;
    for (std::size_t j = 0; j < n; ++j)
      if (!inside[j]) cut += weights(r, static_cast<Eigen::Index>(j));
  }
  const double denom = std::min(vol_in, vol_out);
  if (!(denom > 0.0)) throw DomainError("conductance undefined: zero volume on one side");
  return cut / denom;
}

double one_dim_entropy(const Graph& g) {
  const double vol = g.volume();
  if (!(vol > 0.0)) throw DomainError("one-dimensional entropy of an edgeless graph");
  double h = 0.0;
  for (Eigen::Index v = 0; v < g.degrees().size(); ++v) {
    const double p = g.degrees()[v] / vol;
    if (p > 0.0) h -= p * std::log2(p);
  }
  return h;
}

Matrix knn_sparsify(const Matrix& weights, std::size_t k) {
  if (weights.rows() != weights.cols()) throw DimensionError("knn_sparsify needs a square matrix");
  const auto n = static_cast<std::size_t>(weights.rows());
  if (k == 0 || k >= n) {
    throw ValidationError("knn k must satisfy 1 <= k < N (k=" + std::to_string(k) +
                          ", N=" + std::to_string(n) + ")");
  }
  Matrix kept = Matrix::Zero(weights.rows(), weights.cols());
  std::vector<Eigen::Index> cols;
  for (Eigen::Index i = 0; i < weights.rows(); ++i) {
    cols.clear();
    for (Eigen::Index j = 0; j < weights.cols(); ++j)
      if (j != i) cols.push_back(j);
    std::stable_sort(cols.begin(), cols.end(), [&](Eigen::Index a, Eigen::Index b) {
      return weights(i, a) > weights(i, b);
    });
    for (std::size_t t = 0; t < k; ++t) kept(i, cols[t]) = weights(i, cols[t]);
  }
  return kept.cwiseMax(kept.transpose());
}

Matrix fuse_adjacency(const Matrix& a, const Matrix& virtual_adjacency, double gamma) {
  if (a.rows() != virtual_adjacency.rows() || a.cols() != virtual_adjacency.cols()) {
    throw DimensionError("fuse_adjacency: shape mismatch");
  }
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ValidationError("gamma must lie in (0, 1]");
  return (1.0 - gamma) * a + gamma * virtual_adjacency;
}

Graph fuse_adjacency(const Graph& a, const Graph& virtual_graph, double gamma) {
  if (a.node_count() != virtual_graph.node_count()) {
    throw DimensionError("fuse_adjacency: node count mismatch");
  }
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ValidationError("gamma must lie in (0, 1]");
  std::vector<Edge> edges;
  for (const Edge& e : a.edges())
    if (gamma < 1.0) edges.push_back({e.u, e.v, (1.0 - gamma) * e.weight});
  for (const Edge& e : virtual_graph.edges()) edges.push_back({e.u, e.v, gamma * e.weight});
  Graph fused = Graph::from_edges(a.node_count(), edges);
  if (a.attributes()) fused = fused.with_attributes(*a.attributes());
  if (a.labels()) fused = fused.with_labels(*a.labels());
  return fused;
}

}  // namespace asil
