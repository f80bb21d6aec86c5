#include "asil/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "asil/errors.hpp"
#include "asil/lorentz.hpp"

namespace asil {

namespace {

using ad::Var;

constexpr double kGammaFloor = 1e-9;

Matrix minkowski_sign(Eigen::Index rows, Eigen::Index cols) {
  Matrix s = Matrix::Ones(rows, cols);
  s.col(0).setConstant(-1.0);
  return s;
}

}  // namespace

void TrainConfig::validate() const {
  if (height < 2) throw ValidationError("height must be at least 2");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ValidationError("gamma must lie in [0, 1]");
  if (knn < 1) throw ValidationError("knn must be at least 1");
  if (!(temperature > 0.0)) throw ValidationError("temperature must be positive");
  if (!(lr > 0.0)) throw ValidationError("learning rate must be positive");
  if (epochs < 0) throw ValidationError("epochs must be nonnegative");
  if (!(kappa < 0.0)) throw ValidationError("curvature must be negative");
  if (!(tcl_weight >= 0.0)) throw ValidationError("tcl weight must be nonnegative");
  if (!(tcl_drop >= 0.0 && tcl_drop < 1.0)) throw ValidationError("tcl drop rate must lie in [0, 1)");
  model_config().validate();
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.height = height;
  m.widths = widths;
  m.embed_dim = embed_dim;
  m.kappa = kappa;
  m.hidden = hidden;
  m.seed = seed;
  return m;
}

double TrainConfig::effective_gamma() const { return std::max(gamma, kGammaFloor); }

std::vector<std::pair<NodeId, NodeId>> knn_pairs(const Matrix& distances, std::size_t k) {
  const auto n = static_cast<std::size_t>(distances.rows());
  if (distances.cols() != distances.rows()) throw DimensionError("distance matrix must be square");
  if (k < 1 || k >= n) {
    throw ValidationError("knn must satisfy 1 <= k < N (k = " + std::to_string(k) + ", N = " +
                          std::to_string(n) + ")");
  }
  std::vector<std::pair<NodeId, NodeId>> pairs;
  pairs.reserve(2 * n * k);
  std::vector<NodeId> order;
  for (std::size_t i = 0; i < n; ++i) {
    order.resize(n);
    std::iota(order.begin(), order.end(), NodeId{0});
    order.erase(order.begin() + static_cast<std::ptrdiff_t>(i));
    const auto row = static_cast<Eigen::Index>(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](NodeId a, NodeId b) { return distances(row, a) < distances(row, b); });
    for (std::size_t m = 0; m < k; ++m) {
      pairs.emplace_back(static_cast<NodeId>(i), order[m]);
      pairs.emplace_back(order[m], static_cast<NodeId>(i));
    }
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  return pairs;
}

Matrix pairwise_distances(const Matrix& points, double kappa) {
  const lorentz::Space space(kappa);
  const Eigen::Index n = points.rows();
  Matrix d = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      d(i, j) = d(j, i) = space.distance(points.row(i).transpose(), points.row(j).transpose());
    }
  }
  return d;
}

Matrix virtual_adjacency(const Matrix& z, const Vector& beta, double temperature, std::size_t k,
                         double kappa) {
  if (!(temperature > 0.0)) throw ValidationError("temperature must be positive");
  if (beta.size() != z.cols() - 1) throw DimensionError("boost velocity must match the spatial dimension");
  const Matrix boosted = lorentz::LorentzBoost::from_beta(beta).apply_rows(z);
  const Matrix d = pairwise_distances(boosted, kappa);
  Matrix w = Matrix::Zero(z.rows(), z.rows());
  for (const auto& [i, j] : knn_pairs(d, k)) w(i, j) = std::exp(-d(i, j) / temperature);
  return w;
}

Var boost_velocity(const Var& r) {
  const double scale = 0.99 / std::sqrt(static_cast<double>(r.rows()));
  // tanh(x) = 2 sigmoid(2x) - 1
  const Var t = ad::add_scalar(ad::mul_scalar(ad::sigmoid(ad::mul_scalar(r, 2.0)), 2.0), -1.0);
  return ad::mul_scalar(t, scale);
}

Var boost_matrix(const Var& beta) {
  if (beta.cols() != 1) throw DimensionError("boost velocity must be a column");
  ad::Tape& tape = beta.tape();
  const Eigen::Index d = beta.rows();
  const Var bt = ad::transpose(beta);
  const Var one_minus = ad::add_scalar(ad::neg(ad::sum(ad::square(beta))), 1.0);
  const Var w = tape.scalar(1.0) / ad::sqrt(one_minus);
  // (w - 1)/|b|^2 written as w^2/(w + 1), finite at b = 0.
  const Var coef = ad::square(w) / ad::add_scalar(w, 1.0);
  const Var top_parts[] = {w, ad::broadcast(ad::neg(w), 1, d) * bt};
  const Var bottom_parts[] = {
      ad::broadcast(ad::neg(w), d, 1) * beta,
      tape.constant(Matrix::Identity(d, d)) + ad::broadcast(coef, d, d) * ad::matmul(beta, bt)};
  const Var rows[] = {ad::concat_cols(top_parts), ad::concat_cols(bottom_parts)};
  return ad::concat_rows(rows);
}

Var support_distances(const Var& a, const Var& b, const ad::SparsePattern& pattern, double kappa) {
  if (a.cols() != b.cols()) throw DimensionError("point sets differ in dimension");
  const Var ga = ad::gather_rows(a, pattern.row);
  const Var gb = ad::gather_rows(b, pattern.col);
  const Var sign = a.tape().constant(minkowski_sign(ga.rows(), ga.cols()));
  // Chord form: no cancellation for nearby points.
  const Var diff = ga - gb;
  const Var chord = ad::sum_rows(diff * diff * sign);
  return ad::mul_scalar(ad::asinh_sqrt(ad::mul_scalar(chord, -kappa / 4.0)), 2.0 / std::sqrt(-kappa));
}

Var tcl_loss(const Var& z, const Var& z_prime, const Var& weights, const Var& boost, double kappa) {
  if (z.rows() != z_prime.rows() || z.cols() != z_prime.cols()) {
    throw DimensionError("contrastive views must have equal shapes");
  }
  const Eigen::Index n = z.rows();
  if (weights.rows() != n || weights.cols() != n) throw DimensionError("contrastive weights must be N x N");
  ad::Tape& tape = z.tape();
  const Var lt = ad::transpose(boost);
  const Var lz = ad::matmul(z, lt);
  const Var lzp = ad::matmul(z_prime, lt);
  const Var inner = ad::matmul(lz * tape.constant(minkowski_sign(n, z.cols())), ad::transpose(lzp));
  const Var dist = ad::mul_scalar(ad::acosh_stable(ad::mul_scalar(inner, kappa)), 1.0 / std::sqrt(-kappa));
  const Var e = ad::exp(dist);
  const Var num = ad::sum_rows(e * tape.constant(Matrix::Identity(n, n)));
  const Var den = ad::sum_rows(weights * e);
  return ad::mean(num / den);
}

Trainer::Trainer(const Graph& g, const TrainConfig& config)
    : graph_(g),
      config_((config.validate(), config)),
      model_(config.model_config(), g.node_count(), g.attributes() ? static_cast<std::size_t>(g.attributes()->cols()) : g.node_count()),
      lifted_(lift_features(g.features_or_identity(), config.kappa)),
      adam_(model_.parameter_ptrs(), ad::AdamOptions{config.lr}) {
  if (!config_.learn_boost) model_.boost().requires_grad = false;
}

AugmentedPass Trainer::augmented_pass(ad::Tape& tape, int epoch) {
  AugmentedPass out;
  const double kappa = config_.kappa;
  const double gamma = config_.effective_gamma();
  const std::size_t n = graph_.node_count();

  const SparseAdjacency base = graph_adjacency(tape, graph_);
  const Var x = tape.constant(lifted_);
  const Var z0 = model_.lconv(x, base);

  const Var r = tape.leaf(model_.boost());
  out.beta = boost_velocity(r);
  const Var boost = boost_matrix(out.beta);

  // Support selection is discrete and made on plain values.
  const Vector beta_value = out.beta.value().col(0);
  const Matrix boosted = lorentz::LorentzBoost::from_beta(beta_value).apply_rows(z0.value());
  const auto knn = knn_pairs(pairwise_distances(boosted, kappa), config_.knn);

  std::vector<std::pair<NodeId, NodeId>> pairs = knn;
  for (const Edge& e : graph_.edges()) {
    pairs.emplace_back(e.u, e.v);
    pairs.emplace_back(e.v, e.u);
  }
  for (std::size_t i = 0; i < n; ++i) pairs.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(i));
  const ad::PatternPtr pattern = ad::SparsePattern::from_pairs(n, n, std::move(pairs));

  Matrix knn_mask = Matrix::Zero(static_cast<Eigen::Index>(pattern->nnz()), 1);
  for (const auto& [i, j] : knn) knn_mask(static_cast<Eigen::Index>(pattern->find(i, j)), 0) = 1.0;
  const Matrix a_values = adjacency_values(graph_, *pattern);

  const Var lz = ad::matmul(z0, ad::transpose(boost));
  const Var dist = support_distances(lz, lz, *pattern, kappa);
  out.virtual_values = ad::exp(ad::mul_scalar(dist, -1.0 / config_.temperature)) * tape.constant(knn_mask);
  out.fused.pattern = pattern;
  out.fused.values = tape.constant(a_values * (1.0 - gamma)) + ad::mul_scalar(out.virtual_values, gamma);

  out.levels = model_.forward(tape, lifted_, out.fused);
  out.dsi = total_dsi(out.fused, out.levels.c);
  out.loss = out.dsi;

  if (config_.tcl_weight > 0.0) {
    std::mt19937_64 rng(config_.seed * 1000003ULL + static_cast<std::uint64_t>(epoch));
    std::bernoulli_distribution keep(1.0 - config_.tcl_drop);
    std::vector<Edge> kept;
    for (const Edge& e : graph_.edges()) {
      if (keep(rng)) kept.push_back(e);
    }
    const Graph view = Graph::from_edges(n, kept);
    const Var z_prime = model_.lconv(x, graph_adjacency(tape, view));
    const Var& c_leaf = out.levels.c.back();
    const Var weights = ad::matmul(c_leaf, ad::transpose(c_leaf));
    out.tcl = tcl_loss(out.levels.z.back(), z_prime, weights, boost, kappa);
    out.loss = out.loss + ad::mul_scalar(out.tcl, config_.tcl_weight);
  }
  return out;
}

double Trainer::step(int epoch) {
  adam_.zero_grad();
  ad::Tape tape;
  const AugmentedPass pass = augmented_pass(tape, epoch);
  const double loss = pass.loss.item();
  if (!std::isfinite(loss)) throw TrainingError("non-finite loss at epoch " + std::to_string(epoch));
  tape.backward(pass.loss);
  adam_.step();
  for (const ad::Tensor& t : model_.parameters()) {
    if (!t.data.allFinite()) {
      throw TrainingError("parameter '" + t.name + "' became non-finite at epoch " + std::to_string(epoch));
    }
  }
  return loss;
}

TrainResult train(const Graph& g, const TrainConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  Trainer trainer(g, config);
  TrainResult result;
  for (int e = 0; e < config.epochs; ++e) result.loss_trace.push_back(trainer.step(e));

  ad::Tape tape;
  const AugmentedPass pass = trainer.augmented_pass(tape, config.epochs);
  result.height = config.height;
  result.embeddings = pass.levels.embeddings();
  result.assignment = pass.levels.assignment();
  result.final_loss = pass.loss.item();
  result.beta = pass.beta.value().col(0);

  const auto& p = *pass.fused.pattern;
  const auto n = static_cast<Eigen::Index>(g.node_count());
  result.fused_adjacency = Matrix::Zero(n, n);
  result.virtual_adjacency = Matrix::Zero(n, n);
  for (std::size_t k = 0; k < p.nnz(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    result.fused_adjacency(p.row[k], p.col[k]) = pass.fused.values.value()(kk, 0);
    result.virtual_adjacency(p.row[k], p.col[k]) = pass.virtual_values.value()(kk, 0);
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace asil
