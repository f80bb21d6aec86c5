#pragma once

#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <vector>

#include "asil/autodiff.hpp"
#include "asil/dsi.hpp"
#include "asil/graph.hpp"

namespace asil {

struct ModelConfig {
  int height = 2;
  // [N_{H-1}, ..., N_1]; empty means the default schedule for the graph size.
  std::vector<std::size_t> widths;
  std::size_t embed_dim = 2;
  double kappa = -1.0;
  std::size_t hidden = 32;
  double leaky_slope = 0.2;
  std::uint64_t seed = 0;

  // Explicit widths if given, otherwise N_1 = 10 for H = 2 and
  // max(2, round(N^{h/H})) capped at 512 for deeper trees.
  std::vector<std::size_t> resolved_widths(std::size_t node_count) const;
  void validate() const;
};

// Features lifted onto the hyperboloid row by row with project_origin.
Matrix lift_features(const Matrix& features, double kappa);

// Pattern with every diagonal entry added, and a column marking those entries.
ad::PatternPtr with_diagonal(const ad::SparsePattern& pattern);
Matrix diagonal_indicator(const ad::SparsePattern& pattern);

// Graph adjacency on a pattern that includes the diagonal (zero weight there).
SparseAdjacency graph_adjacency(ad::Tape& tape, const Graph& g);
// Same for a dense symmetric weight matrix; zero off-diagonal entries are non-edges.
SparseAdjacency dense_adjacency(ad::Tape& tape, const Matrix& weights);

struct LLinearParams {
  ad::Tensor* w1 = nullptr;
  ad::Tensor* b1 = nullptr;
  ad::Tensor* w2 = nullptr;
  ad::Tensor* b2 = nullptr;
  ad::Tensor* v = nullptr;
  ad::Tensor* c = nullptr;
  // Log of the largest spatial norm.
  ad::Tensor* scale = nullptr;
};

struct AttentionParams {
  LLinearParams query;
  LLinearParams key;
  // 1 x 2(d+1): scores [q_i || k_j].
  ad::Tensor* w = nullptr;
};

struct AssignerParams {
  AttentionParams att;
  ad::Tensor* mlp_w1 = nullptr;
  ad::Tensor* mlp_b1 = nullptr;
  ad::Tensor* mlp_w2 = nullptr;
  ad::Tensor* mlp_b2 = nullptr;
};

struct LevelOutputs {
  int height = 0;
  // z[h] for h = 0..H; z[0] is the root at the origin.
  std::vector<ad::Var> z;
  // c[h-1] = C^h.
  std::vector<ad::Var> c;
  // a[h] = dense A^h for h = 0..H-1; the leaf level stays sparse.
  std::vector<ad::Var> a;
  SparseAdjacency leaf_adjacency;
  // dead[h][j]: parent j at level h received no assignment mass.
  std::vector<std::vector<char>> dead;

  LevelAssignment assignment() const;
  std::vector<Matrix> embeddings() const;
};

class Lsenet {
 public:
  // Allocates and initializes every parameter for a graph of `node_count`
  // nodes with `feature_dim` input features.
  Lsenet(const ModelConfig& config, std::size_t node_count, std::size_t feature_dim);
  Lsenet(const Lsenet&) = delete;
  Lsenet& operator=(const Lsenet&) = delete;

  const ModelConfig& config() const { return config_; }
  const std::vector<std::size_t>& widths() const { return widths_; }
  std::size_t node_count() const { return node_count_; }
  std::size_t feature_dim() const { return feature_dim_; }

  std::deque<ad::Tensor>& parameters() { return params_; }
  const std::deque<ad::Tensor>& parameters() const { return params_; }
  std::vector<ad::Tensor*> parameter_ptrs();
  ad::Tensor& parameter(const std::string& name);
  // Boost velocity pre-image; unused by the forward pass itself.
  ad::Tensor& boost() { return *boost_; }

  ad::Var llinear(const ad::Var& x, const LLinearParams& p) const;
  // Row-normalized attention on the pattern support (nnz x 1). Every row must
  // have at least one entry.
  ad::Var latt(const ad::Var& x, const ad::PatternPtr& support, const AttentionParams& p) const;
  // Row-wise weighted midpoint of x under the sparse weights.
  ad::Var lagg(const ad::PatternPtr& support, const ad::Var& weights, const ad::Var& x) const;
  // Leaf embeddings; `adjacency` must contain the diagonal.
  ad::Var lconv(const ad::Var& x, const SparseAdjacency& adjacency) const;
  // C^level. Attention over the support is scaled by the edge weights (self
  // weight 1) and renormalized per row before mixing the MLP distributions.
  ad::Var assign(const ad::Var& z, const SparseAdjacency& adjacency, int level) const;

  // Full bottom-up pass over a graph given as lifted features + adjacency.
  LevelOutputs forward(ad::Tape& tape, const Matrix& lifted, const SparseAdjacency& adjacency) const;
  // Convenience: leaf embeddings from a precomputed Z^H.
  LevelOutputs levels_from(ad::Tape& tape, const ad::Var& leaves, const SparseAdjacency& adjacency) const;

 private:
  ad::Tensor& add_param(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                        std::size_t fan_in);
  LLinearParams make_llinear(const std::string& prefix, std::size_t in, std::size_t out);
  AttentionParams make_attention(const std::string& prefix, std::size_t in);

  ModelConfig config_;
  std::size_t node_count_;
  std::size_t feature_dim_;
  std::vector<std::size_t> widths_;
  std::deque<ad::Tensor> params_;
  std::mt19937_64 rng_;
  LLinearParams value_;
  AttentionParams conv_att_;
  // assigners_[h - 2] serves level h (h = 2..H).
  std::vector<AssignerParams> assigners_;
  ad::Tensor* boost_ = nullptr;
};

}  // namespace asil
