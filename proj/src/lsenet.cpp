#include "asil/lsenet.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "asil/errors.hpp"
#include "asil/lorentz.hpp"

namespace asil {

namespace {

using ad::Var;

Var bias_rows(const Var& b, Eigen::Index rows) { return ad::broadcast_rows(b, rows); }

std::size_t diagonal_count(const ad::SparsePattern& p) {
  std::size_t n = 0;
  for (std::size_t k = 0; k < p.nnz(); ++k) n += p.row[k] == p.col[k] ? 1 : 0;
  return n;
}

}  // namespace

std::vector<std::size_t> ModelConfig::resolved_widths(std::size_t node_count) const {
  if (!widths.empty()) return widths;
  if (height == 2) return {10};
  std::vector<std::size_t> out;
  for (int h = height - 1; h >= 1; --h) {
    const double w = std::round(std::pow(static_cast<double>(node_count),
                                         static_cast<double>(h) / static_cast<double>(height)));
    out.push_back(std::min<std::size_t>(512, std::max<std::size_t>(2, static_cast<std::size_t>(w))));
  }
  return out;
}

void ModelConfig::validate() const {
  if (height < 2) throw ValidationError("model height must be at least 2");
  if (!widths.empty()) {
    if (widths.size() != static_cast<std::size_t>(height - 1)) {
      throw ValidationError("expected " + std::to_string(height - 1) + " level widths, got " +
                            std::to_string(widths.size()));
    }
    for (std::size_t w : widths) {
      if (w == 0) throw ValidationError("level widths must be positive");
    }
    if (widths.back() < 2) throw ValidationError("N_1 must be at least 2");
  }
  if (embed_dim == 0) throw ValidationError("embedding dimension must be positive");
  if (hidden == 0) throw ValidationError("hidden width must be positive");
  if (!(kappa < 0.0)) throw ValidationError("curvature must be negative");
}

Matrix lift_features(const Matrix& features, double kappa) {
  const lorentz::Space space(kappa);
  Matrix out(features.rows(), features.cols() + 1);
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    out.row(i) = space.project_origin(features.row(i).transpose()).transpose();
  }
  return out;
}

ad::PatternPtr with_diagonal(const ad::SparsePattern& pattern) {
  if (pattern.rows != pattern.cols) throw DimensionError("diagonal needs a square pattern");
  std::vector<std::pair<NodeId, NodeId>> pairs;
  pairs.reserve(pattern.nnz() + pattern.rows);
  for (std::size_t k = 0; k < pattern.nnz(); ++k) pairs.emplace_back(pattern.row[k], pattern.col[k]);
  for (std::size_t i = 0; i < pattern.rows; ++i) pairs.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(i));
  return ad::SparsePattern::from_pairs(pattern.rows, pattern.cols, std::move(pairs));
}

Matrix diagonal_indicator(const ad::SparsePattern& pattern) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(pattern.nnz()), 1);
  for (std::size_t k = 0; k < pattern.nnz(); ++k) {
    if (pattern.row[k] == pattern.col[k]) m(static_cast<Eigen::Index>(k), 0) = 1.0;
  }
  return m;
}

SparseAdjacency graph_adjacency(ad::Tape& tape, const Graph& g) {
  SparseAdjacency a;
  a.pattern = with_diagonal(*adjacency_pattern(g));
  a.values = tape.constant(adjacency_values(g, *a.pattern));
  return a;
}

SparseAdjacency dense_adjacency(ad::Tape& tape, const Matrix& weights) {
  if (weights.rows() != weights.cols()) throw DimensionError("adjacency must be square");
  std::vector<std::pair<NodeId, NodeId>> pairs;
  for (Eigen::Index i = 0; i < weights.rows(); ++i) {
    for (Eigen::Index j = 0; j < weights.cols(); ++j) {
      if (i == j || weights(i, j) != 0.0) pairs.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(j));
    }
  }
  SparseAdjacency a;
  a.pattern = ad::SparsePattern::from_pairs(static_cast<std::size_t>(weights.rows()),
                                            static_cast<std::size_t>(weights.cols()), std::move(pairs));
  Matrix v(static_cast<Eigen::Index>(a.pattern->nnz()), 1);
  for (std::size_t k = 0; k < a.pattern->nnz(); ++k) {
    v(static_cast<Eigen::Index>(k), 0) = weights(a.pattern->row[k], a.pattern->col[k]);
  }
  a.values = tape.constant(std::move(v));
  return a;
}

LevelAssignment LevelOutputs::assignment() const {
  LevelAssignment out;
  for (const Var& v : c) out.c.push_back(v.value());
  return out;
}

std::vector<Matrix> LevelOutputs::embeddings() const {
  std::vector<Matrix> out;
  for (const Var& v : z) out.push_back(v.value());
  return out;
}

Lsenet::Lsenet(const ModelConfig& config, std::size_t node_count, std::size_t feature_dim)
    : config_(config), node_count_(node_count), feature_dim_(feature_dim), rng_(config.seed) {
  config_.validate();
  if (node_count == 0) throw ValidationError("graph has no nodes");
  if (feature_dim == 0) throw ValidationError("feature dimension must be positive");
  widths_ = config_.resolved_widths(node_count);
  config_.widths = widths_;
  config_.validate();

  const std::size_t d = config_.embed_dim;
  value_ = make_llinear("lconv.value", feature_dim + 1, d);
  conv_att_ = make_attention("lconv.att", feature_dim + 1);
  for (int h = 2; h <= config_.height; ++h) {
    const std::string prefix = "assign" + std::to_string(h);
    // Parent width N_{h-1}.
    const std::size_t parents = widths_[static_cast<std::size_t>(config_.height - h)];
    AssignerParams a;
    a.att = make_attention(prefix + ".att", d + 1);
    a.mlp_w1 = &add_param(prefix + ".mlp.w1", static_cast<Eigen::Index>(d + 1),
                          static_cast<Eigen::Index>(config_.hidden), d + 1);
    a.mlp_b1 = &add_param(prefix + ".mlp.b1", 1, static_cast<Eigen::Index>(config_.hidden), d + 1);
    a.mlp_w2 = &add_param(prefix + ".mlp.w2", static_cast<Eigen::Index>(config_.hidden),
                          static_cast<Eigen::Index>(parents), config_.hidden);
    a.mlp_b2 = &add_param(prefix + ".mlp.b2", 1, static_cast<Eigen::Index>(parents), config_.hidden);
    assigners_.push_back(a);
  }
  params_.emplace_back("boost.r", Matrix::Zero(static_cast<Eigen::Index>(d), 1));
  boost_ = &params_.back();
}

ad::Tensor& Lsenet::add_param(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                              std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng_);
  params_.emplace_back(name, std::move(m));
  return params_.back();
}

LLinearParams Lsenet::make_llinear(const std::string& prefix, std::size_t in, std::size_t out) {
  const auto h = static_cast<Eigen::Index>(config_.hidden);
  const auto i = static_cast<Eigen::Index>(in);
  const auto o = static_cast<Eigen::Index>(out);
  LLinearParams p;
  p.w1 = &add_param(prefix + ".w1", i, h, in);
  p.b1 = &add_param(prefix + ".b1", 1, h, in);
  p.w2 = &add_param(prefix + ".w2", h, o, config_.hidden);
  p.b2 = &add_param(prefix + ".b2", 1, o, config_.hidden);
  p.v = &add_param(prefix + ".v", i, 1, in);
  p.c = &add_param(prefix + ".c", 1, 1, in);
  params_.emplace_back(prefix + ".scale", Matrix::Constant(1, 1, std::log(10.0)));
  p.scale = &params_.back();
  return p;
}

AttentionParams Lsenet::make_attention(const std::string& prefix, std::size_t in) {
  AttentionParams a;
  a.query = make_llinear(prefix + ".query", in, config_.embed_dim);
  a.key = make_llinear(prefix + ".key", in, config_.embed_dim);
  const std::size_t width = 2 * (config_.embed_dim + 1);
  a.w = &add_param(prefix + ".w", 1, static_cast<Eigen::Index>(width), width);
  return a;
}

std::vector<ad::Tensor*> Lsenet::parameter_ptrs() {
  std::vector<ad::Tensor*> out;
  for (ad::Tensor& t : params_) out.push_back(&t);
  return out;
}

ad::Tensor& Lsenet::parameter(const std::string& name) {
  for (ad::Tensor& t : params_) {
    if (t.name == name) return t;
  }
  throw ValidationError("no parameter named '" + name + "'");
}

Var Lsenet::llinear(const Var& x, const LLinearParams& p) const {
  ad::Tape& tape = x.tape();
  if (x.cols() != p.w1->data.rows()) {
    throw DimensionError("llinear expects " + std::to_string(p.w1->data.rows()) + " input columns, got " +
                         std::to_string(x.cols()));
  }
  const Eigen::Index n = x.rows();
  const Var hidden = ad::leaky_relu(ad::matmul(x, tape.leaf(*p.w1)) + bias_rows(tape.leaf(*p.b1), n),
                                    config_.leaky_slope);
  const Var spatial = ad::matmul(hidden, tape.leaf(*p.w2)) + bias_rows(tape.leaf(*p.b2), n);
  const Var gate = ad::sigmoid(ad::matmul(x, tape.leaf(*p.v)) + ad::broadcast(tape.leaf(*p.c), n, 1));
  // Direction from the hidden network, norm exp(scale) * gate.
  const Var norm = ad::sqrt(ad::add_scalar(ad::sum_rows(ad::square(spatial)), 1e-12));
  const Var radius = gate * ad::broadcast(ad::exp(tape.leaf(*p.scale)), n, 1) / norm;
  const Var s = spatial * ad::broadcast_cols(radius, spatial.cols());
  // <y,y> = 1/kappa  =>  y0 = sqrt(|s|^2 - 1/kappa).
  const Var time = ad::sqrt(ad::add_scalar(ad::sum_rows(ad::square(s)), -1.0 / config_.kappa));
  const Var parts[] = {time, s};
  return ad::concat_cols(parts);
}

Var Lsenet::latt(const Var& x, const ad::PatternPtr& support, const AttentionParams& p) const {
  if (support->rows != static_cast<std::size_t>(x.rows()) || support->cols != support->rows) {
    throw DimensionError("attention support does not match the node count");
  }
  for (std::size_t r = 0; r < support->rows; ++r) {
    if (support->row_offsets[r] == support->row_offsets[r + 1]) {
      throw ValidationError("attention row " + std::to_string(r) + " has an empty mask");
    }
  }
  ad::Tape& tape = x.tape();
  const Var q = llinear(x, p.query);
  const Var k = llinear(x, p.key);
  const Var w = tape.leaf(*p.w);
  const Eigen::Index width = q.cols();
  const Var sq = ad::matmul(q, ad::transpose(ad::slice_cols(w, 0, width)));
  const Var sk = ad::matmul(k, ad::transpose(ad::slice_cols(w, width, width)));
  const Var scores = ad::leaky_relu(ad::gather_rows(sq, support->row) + ad::gather_rows(sk, support->col),
                                    config_.leaky_slope);
  return ad::segment_softmax(scores, support);
}

Var Lsenet::lagg(const ad::PatternPtr& support, const Var& weights, const Var& x) const {
  const Matrix& w = weights.value();
  if ((w.array() < 0.0).any()) throw ValidationError("aggregation weights must be nonnegative");
  for (std::size_t r = 0; r < support->rows; ++r) {
    double s = 0.0;
    for (std::size_t k = support->row_offsets[r]; k < support->row_offsets[r + 1]; ++k) {
      s += w(static_cast<Eigen::Index>(k), 0);
    }
    if (!(s > 0.0)) throw ValidationError("aggregation row " + std::to_string(r) + " has zero weight");
  }
  return ad::lorentz_normalize_rows(ad::spmm(support, weights, x), config_.kappa);
}

Var Lsenet::lconv(const Var& x, const SparseAdjacency& adjacency) const {
  const auto& pattern = adjacency.pattern;
  if (diagonal_count(*pattern) != pattern->rows) {
    throw ValidationError("convolution adjacency must include every diagonal entry");
  }
  ad::Tape& tape = x.tape();
  const Var with_self = adjacency.values + tape.constant(diagonal_indicator(*pattern));
  const Var omega = latt(x, pattern, conv_att_);
  return lagg(pattern, omega * with_self, llinear(x, value_));
}

Var Lsenet::assign(const Var& z, const SparseAdjacency& adjacency, int level) const {
  if (level < 2 || level > config_.height) throw ValidationError("no assigner for level " + std::to_string(level));
  const AssignerParams& p = assigners_[static_cast<std::size_t>(level - 2)];
  const auto& support = adjacency.pattern;
  if (diagonal_count(*support) != support->rows) {
    throw ValidationError("assigner support must include every diagonal entry");
  }
  ad::Tape& tape = z.tape();
  const Eigen::Index n = z.rows();
  // Attention scaled by edge weight (self weight 1), renormalized per row.
  const Var weighted = latt(z, support, p.att) * (adjacency.values + tape.constant(diagonal_indicator(*support)));
  const Var omega = weighted / ad::gather_rows(ad::segment_sum(weighted, support), support->row);
  const Var hidden = ad::leaky_relu(ad::matmul(z, tape.leaf(*p.mlp_w1)) + bias_rows(tape.leaf(*p.mlp_b1), n),
                                    config_.leaky_slope);
  const Var logits = ad::matmul(hidden, tape.leaf(*p.mlp_w2)) + bias_rows(tape.leaf(*p.mlp_b2), n);
  return ad::spmm(support, omega, ad::softmax_rows(logits));
}

LevelOutputs Lsenet::forward(ad::Tape& tape, const Matrix& lifted, const SparseAdjacency& adjacency) const {
  if (static_cast<std::size_t>(lifted.rows()) != node_count_ ||
      static_cast<std::size_t>(lifted.cols()) != feature_dim_ + 1) {
    throw DimensionError("lifted features must be " + std::to_string(node_count_) + " x " +
                         std::to_string(feature_dim_ + 1));
  }
  const Var x = tape.constant(lifted);
  return levels_from(tape, lconv(x, adjacency), adjacency);
}

LevelOutputs Lsenet::levels_from(ad::Tape& tape, const Var& leaves, const SparseAdjacency& adjacency) const {
  const int height = config_.height;
  const auto hs = static_cast<std::size_t>(height);
  LevelOutputs out;
  out.height = height;
  out.z.resize(hs + 1);
  out.c.resize(hs);
  out.a.resize(hs);
  out.dead.resize(hs + 1);
  out.leaf_adjacency = adjacency;
  out.z[hs] = leaves;
  out.dead[hs].assign(static_cast<std::size_t>(leaves.rows()), 0);

  SparseAdjacency level_adjacency = adjacency;
  for (int h = height; h >= 2; --h) {
    const auto hu = static_cast<std::size_t>(h);
    const Var c = assign(out.z[hu], level_adjacency, h);
    const Var ct = ad::transpose(c);
    out.c[hu - 1] = c;
    out.z[hu - 1] = ad::lorentz_normalize_rows(ad::matmul(ct, out.z[hu]), config_.kappa);
    out.a[hu - 1] = h == height ? ad::matmul(ct, ad::spmm(adjacency.pattern, adjacency.values, c))
                                : ad::matmul(ad::matmul(ct, out.a[hu]), c);
    const Eigen::Index parents = c.cols();
    out.dead[hu - 1].assign(static_cast<std::size_t>(parents), 0);
    const Matrix col_mass = c.value().colwise().sum();
    for (Eigen::Index j = 0; j < parents; ++j) out.dead[hu - 1][static_cast<std::size_t>(j)] = col_mass(0, j) > 0.0 ? 0 : 1;
    level_adjacency.pattern = ad::SparsePattern::full(static_cast<std::size_t>(parents), static_cast<std::size_t>(parents));
    level_adjacency.values = ad::reshape(out.a[hu - 1], parents * parents, 1);
  }
  const Eigen::Index n1 = out.z[1].rows();
  out.c[0] = tape.constant(Matrix::Ones(n1, 1));
  out.a[0] = ad::matmul(ad::matmul(ad::transpose(out.c[0]), out.a[1]), out.c[0]);
  const lorentz::Space space(config_.kappa);
  out.z[0] = tape.constant(space.origin(config_.embed_dim + 1).transpose());
  out.dead[0] = {0};
  return out;
}

}  // namespace asil
