#pragma once

#include <cstdint>
#include <vector>

#include "asil/autodiff.hpp"
#include "asil/dsi.hpp"
#include "asil/graph.hpp"
#include "asil/lsenet.hpp"

namespace asil {

struct TrainConfig {
  int height = 2;
  double gamma = 0.01;
  std::size_t knn = 8;
  double temperature = 1.0;
  double lr = 0.003;
  int epochs = 200;
  std::uint64_t seed = 0;
  std::vector<std::size_t> widths;
  double kappa = -1.0;
  std::size_t embed_dim = 2;
  std::size_t hidden = 32;
  // Ablations.
  bool learn_boost = true;
  double tcl_weight = 0.0;
  double tcl_drop = 0.2;

  void validate() const;
  ModelConfig model_config() const;
  // gamma clamped to its 1e-9 floor.
  double effective_gamma() const;
};

// kNN support chosen on plain doubles: each row keeps its k nearest other
// points (ties to the lower index), then the pattern is made symmetric.
std::vector<std::pair<NodeId, NodeId>> knn_pairs(const Matrix& distances, std::size_t k);

// Pairwise geodesic distances between rows.
Matrix pairwise_distances(const Matrix& points, double kappa);

// exp(-d(L z_i, L z_j) / t) on the symmetrized kNN support, zero diagonal.
// ValidationError when k >= N.
Matrix virtual_adjacency(const Matrix& z, const Vector& beta, double temperature, std::size_t k,
                         double kappa = -1.0);

// Differentiable boost velocity 0.99 tanh(r) / sqrt(d), inside the unit ball.
ad::Var boost_velocity(const ad::Var& r);
// Boost matrix built on the tape from a velocity column.
ad::Var boost_matrix(const ad::Var& beta);
// Geodesic distance between rows a[row[e]] and b[col[e]] for every pattern entry.
ad::Var support_distances(const ad::Var& a, const ad::Var& b, const ad::SparsePattern& pattern,
                          double kappa);

// Mean over i of exp(d(L z_i, L z'_i)) / sum_j w_ij exp(d(L z_i, L z'_j)).
ad::Var tcl_loss(const ad::Var& z, const ad::Var& z_prime, const ad::Var& weights,
                 const ad::Var& boost, double kappa);

// One augmented forward pass: leaf embeddings on A, the virtual graph from
// them, fusion, and the level outputs plus objective on the fused graph.
struct AugmentedPass {
  LevelOutputs levels;
  SparseAdjacency fused;
  // Virtual-graph weights on the fused pattern (zero off the kNN support).
  ad::Var virtual_values;
  ad::Var loss;
  ad::Var dsi;
  ad::Var tcl;
  ad::Var beta;
};

class Trainer {
 public:
  Trainer(const Graph& g, const TrainConfig& config);

  AugmentedPass augmented_pass(ad::Tape& tape, int epoch);
  // One optimizer step; returns the loss before the update.
  double step(int epoch);

  Lsenet& model() { return model_; }
  const Lsenet& model() const { return model_; }
  const TrainConfig& config() const { return config_; }
  const Matrix& lifted() const { return lifted_; }

 private:
  const Graph& graph_;
  TrainConfig config_;
  Lsenet model_;
  Matrix lifted_;
  ad::Adam adam_;
};

struct TrainResult {
  int height = 0;
  // Z^h for h = 0..H and C^h for h = 1..H over the fused graph.
  std::vector<Matrix> embeddings;
  LevelAssignment assignment;
  std::vector<double> loss_trace;
  Matrix virtual_adjacency;
  Matrix fused_adjacency;
  Vector beta;
  double final_loss = 0.0;
  double seconds = 0.0;
};

TrainResult train(const Graph& g, const TrainConfig& config);

}  // namespace asil
