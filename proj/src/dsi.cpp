#include "asil/dsi.hpp"

#include <cmath>
#include <string>

#include "asil/errors.hpp"

namespace asil {

namespace {

constexpr double kVolumeFloor = 1e-15;

double log_ratio(double num, double den) {
  return std::log2(std::max(num, kVolumeFloor)) - std::log2(std::max(den, kVolumeFloor));
}

void check_level(int h, int height) {
  if (h < 1 || h > height) {
    throw ValidationError("level " + std::to_string(h) + " outside [1, " + std::to_string(height) + "]");
  }
}

}  // namespace

const Matrix& LevelAssignment::level(int h) const {
  check_level(h, height());
  return c[static_cast<std::size_t>(h - 1)];
}

void LevelAssignment::validate(std::size_t node_count) const {
  if (c.empty()) throw ValidationError("assignment needs at least one level");
  if (c.front().cols() != 1) throw DimensionError("C^1 must have a single root column");
  if (static_cast<std::size_t>(c.back().rows()) != node_count) {
    throw DimensionError("C^H has " + std::to_string(c.back().rows()) + " rows for " +
                         std::to_string(node_count) + " graph nodes");
  }
  for (std::size_t i = 1; i < c.size(); ++i) {
    if (c[i].cols() != c[i - 1].rows()) {
      throw DimensionError("level " + std::to_string(i + 1) + " has " + std::to_string(c[i].cols()) +
                           " columns, level " + std::to_string(i) + " has " +
                           std::to_string(c[i - 1].rows()) + " rows");
    }
  }
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Matrix& m = c[i];
    if (!m.allFinite() || (m.array() < 0.0).any() || (m.array() > 1.0).any()) {
      throw ValidationError("level " + std::to_string(i + 1) + " has entries outside [0, 1]");
    }
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      if (std::abs(m.row(r).sum() - 1.0) > 1e-9) {
        throw ValidationError("level " + std::to_string(i + 1) + " row " + std::to_string(r) +
                              " does not sum to 1");
      }
    }
  }
}

bool LevelAssignment::is_hard() const {
  for (const Matrix& m : c) {
    if (((m.array() != 0.0) && (m.array() != 1.0)).any()) return false;
  }
  return true;
}

AssignmentStack cumulative_assignment(const Graph& g, const LevelAssignment& c) {
  c.validate(g.node_count());
  const int height = c.height();
  const auto n = static_cast<Eigen::Index>(g.node_count());
  AssignmentStack st;
  st.s.resize(static_cast<std::size_t>(height + 1));
  st.volumes.resize(st.s.size());
  st.parent_volumes.resize(st.s.size());
  st.s[static_cast<std::size_t>(height)] = Matrix::Identity(n, n);
  for (int h = height; h >= 1; --h) {
    st.s[static_cast<std::size_t>(h - 1)] = st.s[static_cast<std::size_t>(h)] * c.level(h);
  }
  for (int h = 0; h <= height; ++h) {
    st.volumes[static_cast<std::size_t>(h)] = st.s[static_cast<std::size_t>(h)].transpose() * g.degrees();
  }
  for (int h = 1; h <= height; ++h) {
    st.parent_volumes[static_cast<std::size_t>(h)] = c.level(h) * st.volumes[static_cast<std::size_t>(h - 1)];
  }
  return st;
}

double level_dsi_edgewise(const Graph& g, const AssignmentStack& stack, int h) {
  check_level(h, stack.height());
  const Matrix& s = stack.s[static_cast<std::size_t>(h)];
  const Vector& vol = stack.volumes[static_cast<std::size_t>(h)];
  const Vector& pvol = stack.parent_volumes[static_cast<std::size_t>(h)];
  Vector inner = Vector::Zero(s.cols());
  // Both orientations of each undirected edge.
  for (const Edge& e : g.edges()) {
    inner += (2.0 * e.weight) * s.row(e.u).cwiseProduct(s.row(e.v)).transpose();
  }
  double acc = 0.0;
  for (Eigen::Index k = 0; k < s.cols(); ++k) acc += (vol[k] - inner[k]) * log_ratio(vol[k], pvol[k]);
  return -acc / g.volume();
}

double level_dsi_nodewise(const Graph& g, const LevelAssignment& c, int h, DsiWork* work) {
  c.validate(g.node_count());
  const int height = c.height();
  check_level(h, height);
  std::size_t touched = 0;

  // Walk from the leaves up to level h, keeping d^l and diag(W^l).
  Vector d = g.degrees();
  Vector wdiag = Vector::Zero(d.size());
  Matrix w;  // dense W^l for l < H
  for (int l = height; l > h; --l) {
    const Matrix& cl = c.level(l);
    Matrix next;
    if (l == height) {
      Matrix ac = Matrix::Zero(cl.rows(), cl.cols());
      for (const Edge& e : g.edges()) {
        ac.row(e.u) += e.weight * cl.row(e.v);
        ac.row(e.v) += e.weight * cl.row(e.u);
      }
      touched += 2 * g.edge_count() + static_cast<std::size_t>(cl.size());
      next = cl.transpose() * ac;
    } else {
      touched += static_cast<std::size_t>(w.size() + cl.size());
      next = cl.transpose() * w * cl;
    }
    touched += static_cast<std::size_t>(next.size());
    d = cl.transpose() * d;
    wdiag = next.diagonal();
    w = std::move(next);
  }

  const Matrix& ch = c.level(h);
  const Vector parent_d = ch.transpose() * d;
  const Vector parent_of_k = ch * parent_d;
  touched += static_cast<std::size_t>(ch.size());
  double acc = 0.0;
  for (Eigen::Index k = 0; k < d.size(); ++k) acc += (d[k] - wdiag[k]) * log_ratio(d[k], parent_of_k[k]);
  if (work != nullptr) work->entries += touched;
  return -acc / g.volume();
}

double total_dsi(const Graph& g, const LevelAssignment& c) {
  double s = 0.0;
  for (int h = 1; h <= c.height(); ++h) s += level_dsi_nodewise(g, c, h);
  return s;
}

ad::PatternPtr adjacency_pattern(const Graph& g) {
  std::vector<std::pair<NodeId, NodeId>> pairs;
  pairs.reserve(2 * g.edge_count());
  for (const Edge& e : g.edges()) {
    pairs.emplace_back(e.u, e.v);
    pairs.emplace_back(e.v, e.u);
  }
  return ad::SparsePattern::from_pairs(g.node_count(), g.node_count(), std::move(pairs));
}

Matrix adjacency_values(const Graph& g, const ad::SparsePattern& pattern) {
  Matrix v = Matrix::Zero(static_cast<Eigen::Index>(pattern.nnz()), 1);
  for (const Edge& e : g.edges()) {
    const std::size_t a = pattern.find(e.u, e.v);
    const std::size_t b = pattern.find(e.v, e.u);
    if (a == ad::SparsePattern::npos || b == ad::SparsePattern::npos) {
      throw ValidationError("adjacency pattern is missing an edge");
    }
    v(static_cast<Eigen::Index>(a), 0) = e.weight;
    v(static_cast<Eigen::Index>(b), 0) = e.weight;
  }
  return v;
}

SparseAdjacency constant_adjacency(ad::Tape& tape, const Graph& g) {
  SparseAdjacency a;
  a.pattern = adjacency_pattern(g);
  a.values = tape.constant(adjacency_values(g, *a.pattern));
  return a;
}

ad::Var total_dsi(const SparseAdjacency& adjacency, const std::vector<ad::Var>& levels) {
  if (levels.empty()) throw ValidationError("assignment needs at least one level");
  const auto& pattern = adjacency.pattern;
  ad::Tape& tape = adjacency.values.tape();
  const auto n = static_cast<Eigen::Index>(pattern->rows);
  if (levels.back().rows() != n) throw DimensionError("C^H rows must match the adjacency");
  if (levels.front().cols() != 1) throw DimensionError("C^1 must have a single root column");

  ad::Var d = ad::segment_sum(adjacency.values, pattern);
  const ad::Var total = ad::sum(d);

  Matrix diag_mask = Matrix::Zero(static_cast<Eigen::Index>(pattern->nnz()), 1);
  for (std::size_t k = 0; k < pattern->nnz(); ++k) {
    if (pattern->row[k] == pattern->col[k]) diag_mask(static_cast<Eigen::Index>(k), 0) = 1.0;
  }
  ad::Var wdiag = diag_mask.isZero()
                      ? tape.constant(Matrix::Zero(n, 1))
                      : ad::segment_sum(adjacency.values * tape.constant(diag_mask), pattern);

  ad::Var acc;
  ad::Var w;
  for (int h = static_cast<int>(levels.size()); h >= 1; --h) {
    const ad::Var& c = levels[static_cast<std::size_t>(h - 1)];
    if (c.rows() != d.rows()) {
      throw DimensionError("level " + std::to_string(h) + " has " + std::to_string(c.rows()) +
                           " rows, expected " + std::to_string(d.rows()));
    }
    const ad::Var ct = ad::transpose(c);
    const ad::Var parent_d = ad::matmul(ct, d);
    const ad::Var parent_of_k = ad::matmul(c, parent_d);
    const ad::Var ratio = ad::log2(ad::maximum(d, kVolumeFloor)) -
                          ad::log2(ad::maximum(parent_of_k, kVolumeFloor));
    const ad::Var term = ad::sum((d - wdiag) * ratio);
    acc = acc.valid() ? acc + term : term;
    if (h == 1) break;

    const ad::Var next = h == static_cast<int>(levels.size())
                             ? ad::matmul(ct, ad::spmm(pattern, adjacency.values, c))
                             : ad::matmul(ad::matmul(ct, w), c);
    const Eigen::Index m = next.rows();
    wdiag = ad::sum_rows(next * tape.constant(Matrix::Identity(m, m)));
    w = next;
    d = parent_d;
  }
  return ad::neg(acc / total);
}

double additivity_decomposition(const Graph& g, const LevelAssignment& c) {
  c.validate(g.node_count());
  if (!c.is_hard()) throw ValidationError("additivity decomposition needs a hard assignment");
  const double total = g.volume();
  double s = 0.0;
  Vector vol = g.degrees();
  for (int h = c.height(); h >= 1; --h) {
    const Matrix& ch = c.level(h);
    const Vector pvol = ch.transpose() * vol;
    for (Eigen::Index j = 0; j < ch.cols(); ++j) {
      if (pvol[j] <= 0.0) continue;
      double ent = 0.0;
      for (Eigen::Index k = 0; k < ch.rows(); ++k) {
        const double p = ch(k, j) * vol[k] / pvol[j];
        if (p > 0.0) ent -= p * std::log2(p);
      }
      s += (pvol[j] / total) * ent;
    }
    vol = pvol;
  }
  return s;
}

LevelAssignment hard_assignment(const PartitionTree& t) {
  t.validate();
  const int height = t.height();
  if (height < 1) throw ValidationError("tree has no levels below the root");
  std::vector<std::vector<TreeNodeId>> levels(static_cast<std::size_t>(height + 1));
  std::vector<Eigen::Index> position(t.size());
  for (int h = 0; h <= height; ++h) {
    levels[static_cast<std::size_t>(h)] = t.at_height(h);
    const auto& ids = levels[static_cast<std::size_t>(h)];
    for (std::size_t i = 0; i < ids.size(); ++i) position[ids[i]] = static_cast<Eigen::Index>(i);
  }
  // Leaves are indexed by their graph node.
  for (TreeNodeId id : levels.back()) position[id] = t.node(id).module.front();

  LevelAssignment out;
  for (int h = 1; h <= height; ++h) {
    const auto& rows = levels[static_cast<std::size_t>(h)];
    const auto& cols = levels[static_cast<std::size_t>(h - 1)];
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (TreeNodeId id : rows) m(position[id], position[*t.node(id).parent]) = 1.0;
    out.c.push_back(std::move(m));
  }
  return out;
}

}  // namespace asil
