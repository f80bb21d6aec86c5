#include "asil/metrics.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "asil/errors.hpp"
#include "asil/lorentz.hpp"
#include "asil/tree_ops.hpp"

namespace asil {

namespace {

struct Contingency {
  Matrix table;
  Vector rows;
  Vector cols;
  double n = 0.0;
};

Contingency contingency(const Labels& pred, const Labels& truth) {
  if (pred.size() != truth.size()) {
    throw DimensionError("label lengths differ: " + std::to_string(pred.size()) + " vs " +
                         std::to_string(truth.size()));
  }
  if (pred.empty()) throw ValidationError("labelings are empty");
  const Labels p = canonical_labels(pred);
  const Labels t = canonical_labels(truth);
  const int np = *std::max_element(p.begin(), p.end()) + 1;
  const int nt = *std::max_element(t.begin(), t.end()) + 1;
  Contingency c;
  c.table = Matrix::Zero(np, nt);
  for (std::size_t i = 0; i < p.size(); ++i) c.table(p[i], t[i]) += 1.0;
  c.rows = c.table.rowwise().sum();
  c.cols = c.table.colwise().sum().transpose();
  c.n = static_cast<double>(p.size());
  return c;
}

double entropy(const Vector& counts, double n) {
  double h = 0.0;
  for (double c : counts) {
    if (c > 0) h -= (c / n) * std::log(c / n);
  }
  return h;
}

double choose2(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace

double nmi(const Labels& pred, const Labels& truth) {
  const Contingency c = contingency(pred, truth);
  const double hp = entropy(c.rows, c.n);
  const double ht = entropy(c.cols, c.n);
  if (hp == 0.0 && ht == 0.0) return 1.0;
  double mi = 0.0;
  for (Eigen::Index i = 0; i < c.table.rows(); ++i) {
    for (Eigen::Index j = 0; j < c.table.cols(); ++j) {
      const double nij = c.table(i, j);
      if (nij > 0) mi += (nij / c.n) * std::log(c.n * nij / (c.rows(i) * c.cols(j)));
    }
  }
  return std::clamp(mi / (0.5 * (hp + ht)), 0.0, 1.0);
}

double ari(const Labels& pred, const Labels& truth) {
  const Contingency c = contingency(pred, truth);
  double index = 0.0;
  for (double nij : c.table.reshaped()) index += choose2(nij);
  double a = 0.0;
  double b = 0.0;
  for (double x : c.rows) a += choose2(x);
  for (double x : c.cols) b += choose2(x);
  const double expected = a * b / choose2(c.n);
  const double max_index = 0.5 * (a + b);
  const double denom = max_index - expected;
  if (denom == 0.0) return 1.0;
  return (index - expected) / denom;
}

std::vector<std::size_t> hungarian(const Matrix& cost) {
  if (cost.rows() != cost.cols()) throw DimensionError("assignment cost matrix must be square");
  const auto n = static_cast<std::size_t>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials; p[j] is the row matched to column j.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> out(n, 0);
  for (std::size_t j = 1; j <= n; ++j) {
    if (p[j] != 0) out[p[j] - 1] = j - 1;
  }
  return out;
}

double acc(const Labels& pred, const Labels& truth) {
  const Contingency c = contingency(pred, truth);
  const Eigen::Index m = std::max(c.table.rows(), c.table.cols());
  Matrix cost = Matrix::Zero(m, m);
  cost.topLeftCorner(c.table.rows(), c.table.cols()) = -c.table;
  const auto match = hungarian(cost);
  double hit = 0.0;
  for (Eigen::Index i = 0; i < c.table.rows(); ++i) {
    const auto j = static_cast<Eigen::Index>(match[static_cast<std::size_t>(i)]);
    if (j < c.table.cols()) hit += c.table(i, j);
  }
  return hit / c.n;
}

MetricReport evaluate(const Labels& pred, const Labels& truth, const Graph* g) {
  const auto start = std::chrono::steady_clock::now();
  MetricReport r;
  r.nmi = nmi(pred, truth);
  r.ari = ari(pred, truth);
  r.acc = acc(pred, truth);
  const Labels p = canonical_labels(pred);
  r.clusters = static_cast<std::size_t>(*std::max_element(p.begin(), p.end()) + 1);
  if (g != nullptr) {
    if (g->node_count() != pred.size()) throw DimensionError("labels do not match the graph size");
    std::vector<std::vector<NodeId>> members(r.clusters);
    for (std::size_t i = 0; i < p.size(); ++i) members[static_cast<std::size_t>(p[i])].push_back(static_cast<NodeId>(i));
    double total = 0.0;
    std::size_t counted = 0;
    for (const auto& m : members) {
      const double vs = volume(*g, m);
      if (vs <= 0.0 || vs >= g->volume()) continue;
      total += subset_conductance(*g, m);
      ++counted;
    }
    r.conductance = counted > 0 ? total / static_cast<double>(counted) : 0.0;
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

double distortion_report(const Graph& g, const PartitionTree& t, double kappa) {
  const std::size_t n = g.node_count();
  if (t.graph_nodes() != n) throw DimensionError("tree and graph sizes differ");
  // Deepest tree node holding each graph node.
  std::vector<std::optional<TreeNodeId>> leaf(n);
  for (const TreeNode& node : t.nodes()) {
    for (NodeId v : node.module) {
      if (!leaf[v] || t.node(*leaf[v]).height < node.height) leaf[v] = node.id;
    }
  }
  for (std::size_t v = 0; v < n; ++v) {
    if (!leaf[v]) throw ValidationError("graph node " + std::to_string(v) + " is not in the tree");
    if (!t.node(*leaf[v]).coords) throw ValidationError("tree leaves need coordinates");
  }
  auto tree_distance = [&](TreeNodeId a, TreeNodeId b) {
    double d = 0.0;
    while (a != b) {
      if (t.node(a).height >= t.node(b).height) {
        const auto& p = t.node(a).parent;
        if (!p) throw ValidationError("tree is disconnected");
        a = *p;
      } else {
        const auto& p = t.node(b).parent;
        if (!p) throw ValidationError("tree is disconnected");
        b = *p;
      }
      d += 1.0;
    }
    return d;
  };
  const lorentz::Space space(kappa);
  std::vector<std::pair<double, double>> pairs;
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double dl = space.distance(*t.node(*leaf[i]).coords, *t.node(*leaf[j]).coords);
      if (dl <= 0.0) continue;
      const double dt = tree_distance(*leaf[i], *leaf[j]);
      pairs.emplace_back(dt, dl);
      num += dt * dl;
      den += dl * dl;
    }
  }
  if (pairs.empty() || num <= 0.0) return 0.0;
  const double scale = num / den;
  double total = 0.0;
  for (auto [dt, dl] : pairs) total += std::abs(dt / (scale * dl) - 1.0);
  return total / static_cast<double>(n * n);
}

}  // namespace asil
