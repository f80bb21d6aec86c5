#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "asil/types.hpp"

// Reverse-mode automatic differentiation over dense rank-2 tensors.
//
// A Tape records every operation of one forward pass; backward() walks it in
// reverse once and accumulates gradients into the trainable Tensors that were
// registered as leaves. There is no implicit broadcasting: apart from the
// *_scalar helpers every shape expansion goes through an explicit
// broadcast_* op so the recorded graph stays auditable.
namespace asil::ad {

// Trainable parameter: the persistent storage behind a tape leaf.
struct Tensor {
  std::string name;
  Matrix data;
  Matrix grad;
  bool requires_grad = true;

  Tensor() = default;
  Tensor(std::string name, Matrix data, bool requires_grad = true);
  void zero_grad();
};

// Fixed sparsity structure, COO sorted by (row, col) with CSR row offsets.
struct SparsePattern {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<NodeId> row;
  std::vector<NodeId> col;
  std::vector<std::size_t> row_offsets;

  std::size_t nnz() const { return row.size(); }

  // Sorts and deduplicates the (row, col) pairs.
  static std::shared_ptr<const SparsePattern> from_pairs(
      std::size_t rows, std::size_t cols, std::vector<std::pair<NodeId, NodeId>> entries);
  // Every (i, j) in row-major order; matches reshape of a dense rows x cols matrix.
  static std::shared_ptr<const SparsePattern> full(std::size_t rows, std::size_t cols);
  // Position of (r, c) or npos.
  std::size_t find(NodeId r, NodeId c) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};
using PatternPtr = std::shared_ptr<const SparsePattern>;

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  // Value of a 1x1 tensor.
  double item() const;
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const;
  std::size_t index() const { return index_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var scalar(double value);
  // Registers a trainable tensor; backward() accumulates into tensor.grad.
  Var leaf(Tensor& tensor);

  // Populates the grads of every leaf reachable from `loss`. The loss must be
  // 1x1 (ValidationError) and a tape can be consumed only once (StateError).
  void backward(const Var& loss);

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  // Op plumbing. requires_grad of the new node is the OR over its inputs.
  Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward);
  const Matrix& value(std::size_t i) const { return nodes_[i].value; }
  bool requires_grad(std::size_t i) const { return nodes_[i].requires_grad; }
  const Matrix& grad(std::size_t i) const { return nodes_[i].grad; }
  // Zero-initialised on first access.
  Matrix& grad_slot(std::size_t i);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Tensor* leaf = nullptr;
    BackwardFn backward;
  };

  void check_live(const Var& v) const;

  std::deque<Node> nodes_;
  bool consumed_ = false;
};

// Elementwise, equal shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var maximum(const Var& a, const Var& b);
Var maximum(const Var& a, double floor);
Var neg(const Var& a);
Var exp(const Var& a);
// DomainError for nonpositive entries.
Var log2(const Var& a);
// DomainError for negative entries.
Var sqrt(const Var& a);
Var square(const Var& a);
Var sigmoid(const Var& a);
Var leaky_relu(const Var& a, double slope);
// arccosh with the value sqrt(2(a-1)) on [1, 1+1e-7] and 0 below 1. The
// derivative is 1/sqrt(a^2-1) above the band and held at its band-edge value
// inside it, so coincident points produce bounded gradients.
Var acosh_stable(const Var& a);
// asinh(sqrt(u)); zero value and zero gradient for u <= 0.
Var asinh_sqrt(const Var& u);

Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
// 1x1 -> rows x cols.
Var broadcast(const Var& scalar, Eigen::Index rows, Eigen::Index cols);
// 1 x M -> rows x M.
Var broadcast_rows(const Var& row, Eigen::Index rows);
// N x 1 -> N x cols.
Var broadcast_cols(const Var& col, Eigen::Index cols);

Var sum(const Var& a);
Var mean(const Var& a);
// N x M -> N x 1.
Var sum_rows(const Var& a);
// N x M -> 1 x M.
Var sum_cols(const Var& a);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols);
Var softmax_rows(const Var& a);

// out[e, :] = a[index[e], :]
Var gather_rows(const Var& a, std::span<const NodeId> index);
// Softmax of an nnz x 1 vector within each pattern row.
Var segment_softmax(const Var& values, const PatternPtr& pattern);
// Row sums of the sparse matrix (pattern, values): rows x 1.
Var segment_sum(const Var& values, const PatternPtr& pattern);
// (pattern, values) * dense, where values is nnz x 1 and dense is cols x C.
Var spmm(const PatternPtr& pattern, const Var& values, const Var& dense);

// Row-wise m / (sqrt(-kappa) * sqrt(-<m,m>_L)). Rows with no timelike mass
// (dead parents) map to the origin and pass no gradient.
Var lorentz_normalize_rows(const Var& m, double kappa);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(const Var& a, double s) { return mul_scalar(a, s); }
inline Var operator*(double s, const Var& a) { return mul_scalar(a, s); }
inline Var operator+(const Var& a, double s) { return add_scalar(a, s); }

struct GradCheckEntry {
  std::string name;
  double relative_error = 0.0;
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
};

// Compares backward() against central differences for every entry of every
// tensor. relative_error = |g_ad - g_fd| / max(|g_ad|, |g_fd|, floor) using
// Frobenius norms per tensor.
std::vector<GradCheckEntry> gradient_check(const std::function<Var(Tape&)>& loss_fn,
                                           std::span<Tensor* const> params, double step = 1e-5,
                                           double floor = 1e-7);

struct AdamOptions {
  double lr = 0.003;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Tensor*> params, AdamOptions options = {});

  // Bias-corrected update. TrainingError naming the tensor on a non-finite grad.
  void step();
  void zero_grad();
  std::size_t steps() const { return t_; }
  const AdamOptions& options() const { return options_; }

 private:
  std::vector<Tensor*> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  AdamOptions options_;
  std::size_t t_ = 0;
};

}  // namespace asil::ad
