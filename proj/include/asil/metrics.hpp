#pragma once

#include <optional>

#include "asil/graph.hpp"
#include "asil/partition_tree.hpp"

namespace asil {

// All three throw DimensionError on length mismatch and ValidationError on
// empty input.
// Mutual information over the arithmetic mean of both entropies.
double nmi(const Labels& pred, const Labels& truth);
double ari(const Labels& pred, const Labels& truth);
// Accuracy under the best one-to-one matching of predicted to true labels.
double acc(const Labels& pred, const Labels& truth);

// Minimum-cost assignment on a square cost matrix; result[row] = column.
std::vector<std::size_t> hungarian(const Matrix& cost);

struct MetricReport {
  double nmi = 0.0;
  double ari = 0.0;
  double acc = 0.0;
  std::size_t clusters = 0;
  // Mean conductance of the predicted clusters; absent without a graph.
  std::optional<double> conductance;
  double seconds = 0.0;
};

MetricReport evaluate(const Labels& pred, const Labels& truth, const Graph* g = nullptr);

// Mean over ordered leaf pairs of |d_T / (s d_L) - 1| / N^2, where d_T counts
// tree edges, d_L is the geodesic distance of the leaf coordinates and s the
// least-squares scale. Coincident pairs are skipped.
double distortion_report(const Graph& g, const PartitionTree& t, double kappa = -1.0);

}  // namespace asil
