// Prints one PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "asil/invariants.hpp"
#include "asil/metrics.hpp"
#include "asil/train.hpp"
#include "asil/tree_ops.hpp"
#include "cli.hpp"

using namespace asil;
namespace fs = std::filesystem;

namespace {

double since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[200];
  std::snprintf(buf, sizeof(buf), f, a, b, c);
  return buf;
}

CriterionResult two_clique_clustering() {
  const auto start = std::chrono::steady_clock::now();
  const Graph g = fixtures::two_cliques(8, 1);
  TrainConfig cfg;
  const TrainResult r = train(g, cfg);
  const PartitionTree t = prune(decode_tree(harden(r.assignment), r.embeddings));
  const Labels pred = clusters_natural(t);
  Labels truth(16, 0);
  for (std::size_t i = 8; i < 16; ++i) truth[i] = 1;
  const int clusters = *std::max_element(pred.begin(), pred.end()) + 1;
  const double n = nmi(pred, truth);
  const double a = ari(pred, truth);
  const double secs = since(start);
  const bool ok = clusters == 2 && n == 1.0 && a == 1.0 && r.final_loss < r.loss_trace.front() && secs < 60.0;
  return {13, "two K8 cliques recovered end to end", ok,
          std::to_string(clusters) + " clusters, " + fmt("nmi %.4f ari %.4f, ", n, a) +
              fmt("loss %.5f -> %.5f", r.loss_trace.front(), r.final_loss),
          secs};
}

CriterionResult karate_smoke() {
  const auto start = std::chrono::steady_clock::now();
  const Graph g = load_graph(fs::path(ASIL_DATA_DIR) / "karate.tsv");
  double learned = 0.0;
  double random = 0.0;
  double slowest = 0.0;
  for (std::uint64_t seed : {0, 1, 2}) {
    TrainConfig cfg;
    cfg.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    const TrainResult r = train(g, cfg);
    slowest = std::max(slowest, since(t0));
    const LevelAssignment hard = harden(r.assignment);
    learned += total_dsi(g, hard);
    // Uniform random hard assignment with the same level widths.
    std::mt19937_64 rng(seed + 4242);
    LevelAssignment rnd;
    for (const Matrix& m : hard.c) {
      std::uniform_int_distribution<Eigen::Index> pick(0, m.cols() - 1);
      Matrix c = Matrix::Zero(m.rows(), m.cols());
      for (Eigen::Index i = 0; i < m.rows(); ++i) c(i, pick(rng)) = 1.0;
      rnd.c.push_back(std::move(c));
    }
    random += total_dsi(g, rnd);
  }
  learned /= 3.0;
  random /= 3.0;
  std::ostringstream sink;
  const int check = cli::run({"check"}, sink, sink);
  const double ratio = learned / random;
  const bool ok = slowest < 120.0 && ratio <= 0.85 && check == 0;
  return {14, "karate smoke", ok,
          fmt("dsi learned %.4f vs random %.4f (ratio %.3f), ", learned, random, ratio) +
              fmt("slowest seed %.1fs, ", slowest) + "check exit " + std::to_string(check),
          since(start)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

CriterionResult determinism() {
  const auto start = std::chrono::steady_clock::now();
  const fs::path base = fs::temp_directory_path() / "asil_acceptance_determinism";
  fs::remove_all(base);
  const std::string graph = (fs::path(ASIL_DATA_DIR) / "karate.tsv").string();
  std::ostringstream sink;
  int codes = 0;
  for (const char* run : {"a", "b"}) {
    codes += cli::run({"fit", "--graph", graph, "--seed", "0", "--out", (base / run).string()}, sink, sink);
  }
  bool same = codes == 0;
  for (const char* file : {"tree.json", "loss.csv"}) {
    const std::string a = slurp(base / "a" / file);
    same = same && !a.empty() && a == slurp(base / "b" / file);
  }
  fs::remove_all(base);
  return {15, "fit is byte-for-byte reproducible", same,
          same ? "tree.json and loss.csv identical" : "outputs differ or fit failed", since(start)};
}

}  // namespace

int main() {
  bool ok = true;
  auto report = [&](const CriterionResult& r) {
    ok = ok && r.pass;
    std::cout << format_result(r) << std::endl;
  };
  for (int id : invariant_ids()) report(run_invariant(id));
  report(two_clique_clustering());
  report(karate_smoke());
  report(determinism());
  return ok ? 0 : 1;
}
