#include "asil/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "asil/errors.hpp"

namespace asil::ad {

namespace {

constexpr double kAcoshBand = 1e-7;

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape " + shape(a.value()) + " vs " +
                         shape(b.value()));
  }
}

void same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw StateError("vars belong to different tapes");
}

// Records an elementwise unary op whose local derivative is computed from the
// input and output values.
template <typename Fwd, typename Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv) {
  Tape& t = a.tape();
  Matrix out = a.value().unaryExpr(fwd);
  const std::size_t ia = a.index();
  return t.record(std::move(out), {a}, [ia, deriv](Tape& tp, std::size_t self) {
    if (!tp.requires_grad(ia)) return;
    const Matrix& x = tp.value(ia);
    const Matrix& y = tp.value(self);
    const Matrix& g = tp.grad(self);
    Matrix& ga = tp.grad_slot(ia);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      ga.data()[i] += g.data()[i] * deriv(x.data()[i], y.data()[i]);
    }
  });
}

}  // namespace

Tensor::Tensor(std::string n, Matrix d, bool rg)
    : name(std::move(n)), data(std::move(d)), requires_grad(rg) {
  grad = Matrix::Zero(data.rows(), data.cols());
}

void Tensor::zero_grad() { grad = Matrix::Zero(data.rows(), data.cols()); }

std::shared_ptr<const SparsePattern> SparsePattern::from_pairs(
    std::size_t rows, std::size_t cols, std::vector<std::pair<NodeId, NodeId>> entries) {
  std::sort(entries.begin(), entries.end());
  entries.erase(std::unique(entries.begin(), entries.end()), entries.end());
  auto p = std::make_shared<SparsePattern>();
  p->rows = rows;
  p->cols = cols;
  p->row.reserve(entries.size());
  p->col.reserve(entries.size());
  p->row_offsets.assign(rows + 1, 0);
  for (const auto& [r, c] : entries) {
    if (r >= rows || c >= cols) throw DimensionError("sparse entry out of range");
    p->row.push_back(r);
    p->col.push_back(c);
    ++p->row_offsets[r + 1];
  }
  for (std::size_t r = 0; r < rows; ++r) p->row_offsets[r + 1] += p->row_offsets[r];
  return p;
}

std::shared_ptr<const SparsePattern> SparsePattern::full(std::size_t rows, std::size_t cols) {
  auto p = std::make_shared<SparsePattern>();
  p->rows = rows;
  p->cols = cols;
  p->row.reserve(rows * cols);
  p->col.reserve(rows * cols);
  p->row_offsets.resize(rows + 1);
  for (std::size_t r = 0; r < rows; ++r) {
    p->row_offsets[r] = r * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      p->row.push_back(static_cast<NodeId>(r));
      p->col.push_back(static_cast<NodeId>(c));
    }
  }
  p->row_offsets[rows] = rows * cols;
  return p;
}

std::size_t SparsePattern::find(NodeId r, NodeId c) const {
  if (r >= rows) return npos;
  const auto first = col.begin() + static_cast<std::ptrdiff_t>(row_offsets[r]);
  const auto last = col.begin() + static_cast<std::ptrdiff_t>(row_offsets[r + 1]);
  const auto it = std::lower_bound(first, last, c);
  if (it == last || *it != c) return npos;
  return static_cast<std::size_t>(it - col.begin());
}

const Matrix& Var::value() const { return tape().value(index_); }

double Var::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw DimensionError("item() on a " + shape(v) + " tensor");
  return v(0, 0);
}

bool Var::requires_grad() const { return tape().requires_grad(index_); }

Tape& Var::tape() const {
  if (tape_ == nullptr) throw StateError("use of an uninitialised Var");
  return *tape_;
}

void Tape::check_live(const Var& v) const {
  if (&v.tape() != this) throw StateError("var belongs to a different tape");
}

Var Tape::constant(Matrix value) {
  if (consumed_) throw StateError("tape already consumed by backward()");
  nodes_.push_back(Node{std::move(value), Matrix(), false, nullptr, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::scalar(double value) {
  Matrix m(1, 1);
  m(0, 0) = value;
  return constant(std::move(m));
}

Var Tape::leaf(Tensor& tensor) {
  if (consumed_) throw StateError("tape already consumed by backward()");
  if (tensor.grad.rows() != tensor.data.rows() || tensor.grad.cols() != tensor.data.cols()) {
    tensor.zero_grad();
  }
  nodes_.push_back(Node{tensor.data, Matrix(), tensor.requires_grad, &tensor, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward) {
  if (consumed_) throw StateError("tape already consumed by backward()");
  bool rg = false;
  for (const Var& v : inputs) {
    check_live(v);
    rg = rg || nodes_[v.index()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), Matrix(), rg, nullptr,
                        rg ? std::move(backward) : BackwardFn()});
  return Var(this, nodes_.size() - 1);
}

Matrix& Tape::grad_slot(std::size_t i) {
  Node& n = nodes_[i];
  if (n.grad.size() == 0 && n.value.size() != 0) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

void Tape::backward(const Var& loss) {
  check_live(loss);
  if (consumed_) throw StateError("backward() called twice on the same tape");
  if (loss.value().size() != 1) {
    throw ValidationError("backward() needs a scalar loss, got " + shape(loss.value()));
  }
  consumed_ = true;
  if (!nodes_[loss.index()].requires_grad) return;
  grad_slot(loss.index())(0, 0) = 1.0;
  for (std::size_t i = loss.index() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, i);
    if (n.leaf != nullptr) n.leaf->grad += n.grad;
  }
  for (Node& n : nodes_) n.grad.resize(0, 0);
}

Var add(const Var& a, const Var& b) {
  same_tape(a, b);
  same_shape(a, b, "add");
  const std::size_t ia = a.index(), ib = b.index();
  return a.tape().record(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, std::size_t s) {
    if (t.requires_grad(ia)) t.grad_slot(ia) += t.grad(s);
    if (t.requires_grad(ib)) t.grad_slot(ib) += t.grad(s);
  });
}

Var sub(const Var& a, const Var& b) {
  same_tape(a, b);
  same_shape(a, b, "sub");
  const std::size_t ia = a.index(), ib = b.index();
  return a.tape().record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, std::size_t s) {
    if (t.requires_grad(ia)) t.grad_slot(ia) += t.grad(s);
    if (t.requires_grad(ib)) t.grad_slot(ib) -= t.grad(s);
  });
}

Var mul(const Var& a, const Var& b) {
  same_tape(a, b);
  same_shape(a, b, "mul");
  const std::size_t ia = a.index(), ib = b.index();
  return a.tape().record(a.value().cwiseProduct(b.value()), {a, b},
                         [ia, ib](Tape& t, std::size_t s) {
                           if (t.requires_grad(ia))
                             t.grad_slot(ia) += t.grad(s).cwiseProduct(t.value(ib));
                           if (t.requires_grad(ib))
                             t.grad_slot(ib) += t.grad(s).cwiseProduct(t.value(ia));
                         });
}

Var div(const Var& a, const Var& b) {
  same_tape(a, b);
  same_shape(a, b, "div");
  const std::size_t ia = a.index(), ib = b.index();
  return a.tape().record(a.value().cwiseQuotient(b.value()), {a, b},
                         [ia, ib](Tape& t, std::size_t s) {
                           const Matrix& g = t.grad(s);
                           const Matrix& bv = t.value(ib);
                           if (t.requires_grad(ia)) t.grad_slot(ia) += g.cwiseQuotient(bv);
                           if (t.requires_grad(ib)) {
                             t.grad_slot(ib) -=
                                 g.cwiseProduct(t.value(s)).cwiseQuotient(bv);
                           }
                         });
}

Var maximum(const Var& a, const Var& b) {
  same_tape(a, b);
  same_shape(a, b, "maximum");
  const std::size_t ia = a.index(), ib = b.index();
  return a.tape().record(a.value().cwiseMax(b.value()), {a, b}, [ia, ib](Tape& t, std::size_t s) {
    const Matrix& g = t.grad(s);
    const Matrix& av = t.value(ia);
    const Matrix& bv = t.value(ib);
    // Ties route the gradient to the first argument.
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const bool first = av.data()[i] >= bv.data()[i];
      if (first && t.requires_grad(ia)) t.grad_slot(ia).data()[i] += g.data()[i];
      if (!first && t.requires_grad(ib)) t.grad_slot(ib).data()[i] += g.data()[i];
    }
  });
}

Var maximum(const Var& a, double floor) {
  return unary(
      a, [floor](double x) { return std::max(x, floor); },
      [floor](double x, double) { return x >= floor ? 1.0 : 0.0; });
}

Var neg(const Var& a) { return mul_scalar(a, -1.0); }

Var exp(const Var& a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log2(const Var& a) {
  if ((a.value().array() <= 0.0).any()) throw DomainError("log2 of a nonpositive value");
  return unary(
      a, [](double x) { return std::log2(x); },
      [](double x, double) { return 1.0 / (x * std::log(2.0)); });
}

Var sqrt(const Var& a) {
  if ((a.value().array() < 0.0).any()) throw DomainError("sqrt of a negative value");
  return unary(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Var square(const Var& a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sigmoid(const Var& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var leaky_relu(const Var& a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var acosh_stable(const Var& a) {
  static const double cap = 1.0 / std::sqrt(kAcoshBand * (2.0 + kAcoshBand));
  return unary(
      a,
      [](double x) {
        if (!(x > 1.0)) return 0.0;
        if (x - 1.0 <= kAcoshBand) return std::sqrt(2.0 * (x - 1.0));
        return std::acosh(x);
      },
      [](double x, double) {
        if (!(x > 1.0)) return 0.0;
        if (x - 1.0 <= kAcoshBand) return cap;
        return 1.0 / std::sqrt(x * x - 1.0);
      });
}

Var asinh_sqrt(const Var& u) {
  return unary(
      u, [](double x) { return x > 0.0 ? std::asinh(std::sqrt(x)) : 0.0; },
      [](double x, double) { return x > 0.0 ? 0.5 / std::sqrt(x * (1.0 + x)) : 0.0; });
}

Var add_scalar(const Var& a, double s) {
  return unary(
      a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var mul_scalar(const Var& a, double s) {
  const std::size_t ia = a.index();
  return a.tape().record(a.value() * s, {a}, [ia, s](Tape& t, std::size_t self) {
    if (t.requires_grad(ia)) t.grad_slot(ia) += s * t.grad(self);
  });
}

Var broadcast(const Var& scalar, Eigen::Index rows, Eigen::Index cols) {
  if (scalar.value().size() != 1) throw DimensionError("broadcast needs a 1x1 input");
  const std::size_t ia = scalar.index();
  return scalar.tape().record(Matrix::Constant(rows, cols, scalar.item()), {scalar},
                              [ia](Tape& t, std::size_t s) {
                                if (t.requires_grad(ia)) t.grad_slot(ia)(0, 0) += t.grad(s).sum();
                              });
}

Var broadcast_rows(const Var& row, Eigen::Index rows) {
  if (row.rows() != 1) throw DimensionError("broadcast_rows needs a 1 x M input");
  const std::size_t ia = row.index();
  return row.tape().record(row.value().replicate(rows, 1), {row}, [ia](Tape& t, std::size_t s) {
    if (t.requires_grad(ia)) t.grad_slot(ia) += t.grad(s).colwise().sum();
  });
}

Var broadcast_cols(const Var& col, Eigen::Index cols) {
  if (col.cols() != 1) throw DimensionError("broadcast_cols needs an N x 1 input");
  const std::size_t ia = col.index();
  return col.tape().record(col.value().replicate(1, cols), {col}, [ia](Tape& t, std::size_t s) {
    if (t.requires_grad(ia)) t.grad_slot(ia) += t.grad(s).rowwise().sum();
  });
}

Var sum(const Var& a) {
  const std::size_t ia = a.index();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::size_t s) {
    if (t.requires_grad(ia)) t.grad_slot(ia).array() += t.grad(s)(0, 0);
  });
}

Var mean(const Var& a) {
  if (a.value().size() == 0) throw DimensionError("mean of an empty tensor");
  return mul_scalar(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var sum_rows(const Var& a) {
  const std::size_t ia = a.index();
  const Eigen::Index c = a.cols();
  return a.tape().record(a.value().rowwise().sum(), {a}, [ia, c](Tape& t, std::size_t s) {
    if (t.requires_grad(ia)) t.grad_slot(ia) += t.grad(s).replicate(1, c);
  });
}

Var sum_cols(const Var& a) {
  const std::size_t ia = a.index();
  const Eigen::Index r = a.rows();
  return a.tape().record(a.value().colwise().sum(), {a}, [ia, r](Tape& t, std::size_t s) {
    if (t.requires_grad(ia)) t.grad_slot(ia) += t.grad(s).replicate(r, 1);
  });
}

Var matmul(const Var& a, const Var& b) {
  same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + shape(a.value()) + " * " + shape(b.value()));
  }
  const std::size_t ia = a.index(), ib = b.index();
  return a.tape().record(a.value() * b.value(), {a, b}, [ia, ib](Tape& t, std::size_t s) {
    const Matrix& g = t.grad(s);
    if (t.requires_grad(ia)) t.grad_slot(ia).noalias() += g * t.value(ib).transpose();
    if (t.requires_grad(ib)) t.grad_slot(ib).noalias() += t.value(ia).transpose() * g;
  });
}

Var transpose(const Var& a) {
  const std::size_t ia = a.index();
  return a.tape().record(a.value().transpose(), {a}, [ia](Tape& t, std::size_t s) {
    if (t.requires_grad(ia)) t.grad_slot(ia) += t.grad(s).transpose();
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  Tape& tape = parts[0].tape();
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    if (p.rows() != rows) throw DimensionError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> idx;
  std::vector<Eigen::Index> widths;
  Eigen::Index at = 0;
  const Var* grad_part = nullptr;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
    idx.push_back(p.index());
    widths.push_back(p.cols());
    if (grad_part == nullptr && p.requires_grad()) grad_part = &p;
  }
  if (grad_part == nullptr) return tape.constant(std::move(out));
  // Any differentiable part marks the node; the closure routes to all of them.
  return tape.record(std::move(out), {*grad_part}, [idx, widths](Tape& t, std::size_t s) {
    Eigen::Index off = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (t.requires_grad(idx[k])) t.grad_slot(idx[k]) += t.grad(s).middleCols(off, widths[k]);
      off += widths[k];
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  Tape& tape = parts[0].tape();
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    if (p.cols() != cols) throw DimensionError("concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> idx;
  std::vector<Eigen::Index> heights;
  Eigen::Index at = 0;
  const Var* grad_part = nullptr;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
    idx.push_back(p.index());
    heights.push_back(p.rows());
    if (grad_part == nullptr && p.requires_grad()) grad_part = &p;
  }
  if (grad_part == nullptr) return tape.constant(std::move(out));
  return tape.record(std::move(out), {*grad_part}, [idx, heights](Tape& t, std::size_t s) {
    Eigen::Index off = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (t.requires_grad(idx[k])) t.grad_slot(idx[k]) += t.grad(s).middleRows(off, heights[k]);
      off += heights[k];
    }
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw DimensionError("slice_cols out of range");
  }
  const std::size_t ia = a.index();
  return a.tape().record(a.value().middleCols(start, count), {a},
                         [ia, start, count](Tape& t, std::size_t s) {
                           if (t.requires_grad(ia))
                             t.grad_slot(ia).middleCols(start, count) += t.grad(s);
                         });
}

Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) throw DimensionError("reshape changes element count");
  const std::size_t ia = a.index();
  const Eigen::Index r0 = a.rows(), c0 = a.cols();
  // Row-major storage makes reshape a reinterpretation of the buffer.
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  return a.tape().record(std::move(out), {a}, [ia, r0, c0](Tape& t, std::size_t s) {
    if (t.requires_grad(ia)) t.grad_slot(ia) += Eigen::Map<const Matrix>(t.grad(s).data(), r0, c0);
  });
}

Var softmax_rows(const Var& a) {
  Matrix out = a.value();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double m = out.row(i).maxCoeff();
    out.row(i) = (out.row(i).array() - m).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  const std::size_t ia = a.index();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::size_t s) {
    if (!t.requires_grad(ia)) return;
    const Matrix& y = t.value(s);
    const Matrix& g = t.grad(s);
    Matrix& ga = t.grad_slot(ia);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const double dot = y.row(i).dot(g.row(i));
      ga.row(i).array() += y.row(i).array() * (g.row(i).array() - dot);
    }
  });
}

Var gather_rows(const Var& a, std::span<const NodeId> index) {
  const Matrix& av = a.value();
  Matrix out(static_cast<Eigen::Index>(index.size()), av.cols());
  for (std::size_t e = 0; e < index.size(); ++e) {
    if (index[e] >= static_cast<std::size_t>(av.rows())) {
      throw DimensionError("gather_rows index out of range");
    }
    out.row(static_cast<Eigen::Index>(e)) = av.row(index[e]);
  }
  const std::size_t ia = a.index();
  std::vector<NodeId> idx(index.begin(), index.end());
  return a.tape().record(std::move(out), {a}, [ia, idx = std::move(idx)](Tape& t, std::size_t s) {
    if (!t.requires_grad(ia)) return;
    const Matrix& g = t.grad(s);
    Matrix& ga = t.grad_slot(ia);
    for (std::size_t e = 0; e < idx.size(); ++e) ga.row(idx[e]) += g.row(static_cast<Eigen::Index>(e));
  });
}

Var segment_softmax(const Var& values, const PatternPtr& pattern) {
  if (values.cols() != 1 || static_cast<std::size_t>(values.rows()) != pattern->nnz()) {
    throw DimensionError("segment_softmax: values must be nnz x 1");
  }
  const Matrix& v = values.value();
  Matrix out(v.rows(), 1);
  for (std::size_t r = 0; r < pattern->rows; ++r) {
    const auto b = static_cast<Eigen::Index>(pattern->row_offsets[r]);
    const auto e = static_cast<Eigen::Index>(pattern->row_offsets[r + 1]);
    if (b == e) continue;
    const double m = v.middleRows(b, e - b).maxCoeff();
    double z = 0.0;
    for (Eigen::Index k = b; k < e; ++k) z += (out(k, 0) = std::exp(v(k, 0) - m));
    for (Eigen::Index k = b; k < e; ++k) out(k, 0) /= z;
  }
  const std::size_t ia = values.index();
  return values.tape().record(std::move(out), {values}, [ia, pattern](Tape& t, std::size_t s) {
    if (!t.requires_grad(ia)) return;
    const Matrix& y = t.value(s);
    const Matrix& g = t.grad(s);
    Matrix& ga = t.grad_slot(ia);
    for (std::size_t r = 0; r < pattern->rows; ++r) {
      const auto b = static_cast<Eigen::Index>(pattern->row_offsets[r]);
      const auto e = static_cast<Eigen::Index>(pattern->row_offsets[r + 1]);
      double dot = 0.0;
      for (Eigen::Index k = b; k < e; ++k) dot += y(k, 0) * g(k, 0);
      for (Eigen::Index k = b; k < e; ++k) ga(k, 0) += y(k, 0) * (g(k, 0) - dot);
    }
  });
}

Var segment_sum(const Var& values, const PatternPtr& pattern) {
  if (values.cols() != 1 || static_cast<std::size_t>(values.rows()) != pattern->nnz()) {
    throw DimensionError("segment_sum: values must be nnz x 1");
  }
  const Matrix& v = values.value();
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(pattern->rows), 1);
  for (std::size_t k = 0; k < pattern->nnz(); ++k) {
    out(pattern->row[k], 0) += v(static_cast<Eigen::Index>(k), 0);
  }
  const std::size_t ia = values.index();
  return values.tape().record(std::move(out), {values}, [ia, pattern](Tape& t, std::size_t s) {
    if (!t.requires_grad(ia)) return;
    const Matrix& g = t.grad(s);
    Matrix& ga = t.grad_slot(ia);
    for (std::size_t k = 0; k < pattern->nnz(); ++k) {
      ga(static_cast<Eigen::Index>(k), 0) += g(pattern->row[k], 0);
    }
  });
}

Var spmm(const PatternPtr& pattern, const Var& values, const Var& dense) {
  same_tape(values, dense);
  if (values.cols() != 1 || static_cast<std::size_t>(values.rows()) != pattern->nnz()) {
    throw DimensionError("spmm: values must be nnz x 1");
  }
  if (static_cast<std::size_t>(dense.rows()) != pattern->cols) {
    throw DimensionError("spmm: dense operand has " + std::to_string(dense.rows()) +
                         " rows, pattern has " + std::to_string(pattern->cols) + " columns");
  }
  const Matrix& v = values.value();
  const Matrix& d = dense.value();
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(pattern->rows), d.cols());
  for (std::size_t k = 0; k < pattern->nnz(); ++k) {
    out.row(pattern->row[k]) += v(static_cast<Eigen::Index>(k), 0) * d.row(pattern->col[k]);
  }
  const std::size_t iv = values.index(), id = dense.index();
  return values.tape().record(std::move(out), {values, dense},
                              [iv, id, pattern](Tape& t, std::size_t s) {
                                const Matrix& g = t.grad(s);
                                const bool gv = t.requires_grad(iv);
                                const bool gd = t.requires_grad(id);
                                const Matrix& vv = t.value(iv);
                                const Matrix& dv = t.value(id);
                                for (std::size_t k = 0; k < pattern->nnz(); ++k) {
                                  const auto kk = static_cast<Eigen::Index>(k);
                                  const NodeId r = pattern->row[k];
                                  const NodeId c = pattern->col[k];
                                  if (gv) t.grad_slot(iv)(kk, 0) += g.row(r).dot(dv.row(c));
                                  if (gd) t.grad_slot(id).row(c) += vv(kk, 0) * g.row(r);
                                }
                              });
}

Var lorentz_normalize_rows(const Var& m, double kappa) {
  if (!(kappa < 0.0)) throw ValidationError("curvature must be negative");
  if (m.cols() < 2) throw DimensionError("Lorentz rows need at least two coordinates");
  const Matrix& mv = m.value();
  const Eigen::Index n = mv.rows(), c = mv.cols();
  const double root = std::sqrt(-kappa);
  Matrix out(n, c);
  // Per-row sqrt(-<m,m>); zero marks a row mapped to the origin.
  Vector q(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double inner = -mv(i, 0) * mv(i, 0) + mv.row(i).tail(c - 1).squaredNorm();
    if (inner < 0.0 && mv(i, 0) > 0.0) {
      q[i] = std::sqrt(-inner);
      out.row(i) = mv.row(i) / (root * q[i]);
    } else {
      q[i] = 0.0;
      out.row(i).setZero();
      out(i, 0) = 1.0 / root;
    }
  }
  const std::size_t ia = m.index();
  return m.tape().record(std::move(out), {m}, [ia, q, root, c](Tape& t, std::size_t s) {
    if (!t.requires_grad(ia)) return;
    const Matrix& mv = t.value(ia);
    const Matrix& g = t.grad(s);
    Matrix& ga = t.grad_slot(ia);
    for (Eigen::Index i = 0; i < mv.rows(); ++i) {
      if (q[i] == 0.0) continue;
      // y = m / (root q), q = sqrt(-<m,m>), dq/dm = -eta m / q.
      // dL/dm = g/(root q) + (g.m)/(root q^3) * eta m
      const double gm = g.row(i).dot(mv.row(i));
      const double a = 1.0 / (root * q[i]);
      const double b = gm / (root * q[i] * q[i] * q[i]);
      ga.row(i) += a * g.row(i);
      ga(i, 0) -= b * mv(i, 0);
      ga.row(i).tail(c - 1) += b * mv.row(i).tail(c - 1);
    }
  });
}

std::vector<GradCheckEntry> gradient_check(const std::function<Var(Tape&)>& loss_fn,
                                           std::span<Tensor* const> params, double step,
                                           double floor) {
  for (Tensor* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = loss_fn(tape);
    tape.backward(loss);
  }
  auto eval = [&loss_fn]() {
    Tape tape;
    return loss_fn(tape).item();
  };
  std::vector<GradCheckEntry> report;
  for (Tensor* p : params) {
    Matrix numeric = Matrix::Zero(p->data.rows(), p->data.cols());
    for (Eigen::Index k = 0; k < p->data.size(); ++k) {
      double& x = p->data.data()[k];
      const double saved = x;
      x = saved + step;
      const double up = eval();
      x = saved - step;
      const double down = eval();
      x = saved;
      numeric.data()[k] = (up - down) / (2.0 * step);
    }
    GradCheckEntry e;
    e.name = p->name;
    e.analytic_norm = p->grad.norm();
    e.numeric_norm = numeric.norm();
    const double denom = std::max({e.analytic_norm, e.numeric_norm, floor});
    e.relative_error = (p->grad - numeric).norm() / denom;
    report.push_back(std::move(e));
  }
  return report;
}

Adam::Adam(std::vector<Tensor*> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (Tensor* p : params_) {
    m_.push_back(Matrix::Zero(p->data.rows(), p->data.cols()));
    v_.push_back(Matrix::Zero(p->data.rows(), p->data.cols()));
  }
}

void Adam::step() {
  for (const Tensor* p : params_) {
    if (!p->grad.allFinite()) throw TrainingError("non-finite gradient in parameter '" + p->name + "'");
  }
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = *params_[k];
    if (!p.requires_grad) continue;
    m_[k] = b1 * m_[k] + (1.0 - b1) * p.grad;
    v_[k] = b2 * v_[k] + (1.0 - b2) * p.grad.cwiseProduct(p.grad);
    const Matrix mhat = m_[k] / c1;
    const Matrix vhat = v_[k] / c2;
    p.data.array() -= options_.lr * mhat.array() / (vhat.array().sqrt() + options_.eps);
  }
}

void Adam::zero_grad() {
  for (Tensor* p : params_) p->zero_grad();
}

}  // namespace asil::ad
