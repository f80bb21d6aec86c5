#include "cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "asil/coding_tree.hpp"
#include "asil/errors.hpp"
#include "asil/invariants.hpp"
#include "asil/io.hpp"
#include "asil/metrics.hpp"
#include "asil/train.hpp"
#include "asil/tree_ops.hpp"

namespace asil::cli {

namespace fs = std::filesystem;
using io::Json;

namespace {

struct TrainFlags {
  int height = 2;
  double gamma = 0.01;
  std::size_t knn = 8;
  double temp = 1.0;
  double lr = 0.003;
  int epochs = 200;
  std::uint64_t seed = 0;
  CLI::Option* o_height = nullptr;
  CLI::Option* o_gamma = nullptr;
  CLI::Option* o_knn = nullptr;
  CLI::Option* o_temp = nullptr;
  CLI::Option* o_lr = nullptr;
  CLI::Option* o_epochs = nullptr;
  CLI::Option* o_seed = nullptr;

  void attach(CLI::App* app) {
    o_height = app->add_option("--height", height, "Tree height H");
    o_gamma = app->add_option("--gamma", gamma, "Fusion weight in (0, 1]");
    o_knn = app->add_option("--knn", knn, "Neighbours per node in the virtual graph");
    o_temp = app->add_option("--temp", temp, "Distance temperature t");
    o_lr = app->add_option("--lr", lr, "Adam learning rate");
    o_epochs = app->add_option("--epochs", epochs, "Training epochs");
    o_seed = app->add_option("--seed", seed, "Random seed");
  }

  // Flags given on the command line override the config file.
  void apply(TrainConfig& cfg) const {
    if (o_height->count()) cfg.height = height;
    if (o_gamma->count()) cfg.gamma = gamma;
    if (o_knn->count()) cfg.knn = knn;
    if (o_temp->count()) cfg.temperature = temp;
    if (o_lr->count()) cfg.lr = lr;
    if (o_epochs->count()) cfg.epochs = epochs;
    if (o_seed->count()) cfg.seed = seed;
  }
};

struct Paths {
  std::string graph;
  std::string attrs;
  std::string labels;
  std::string config;
  std::string out;
};

Graph load_input_graph(const Paths& p) {
  std::optional<fs::path> attrs;
  std::optional<fs::path> labels;
  if (!p.attrs.empty()) attrs = p.attrs;
  if (!p.labels.empty()) labels = p.labels;
  return load_graph(p.graph, attrs, labels);
}

TrainConfig resolve_config(const Paths& p, const TrainFlags& flags) {
  TrainConfig cfg;
  if (!p.config.empty()) io::apply_config_json(io::read_json(p.config), cfg);
  flags.apply(cfg);
  cfg.validate();
  return cfg;
}

// Config-file keys for the path flags, used when the flag itself is absent.
void fill_paths_from_config(Paths& p) {
  if (p.config.empty()) return;
  const Json j = io::read_json(p.config);
  auto take = [&](const char* key, std::string& dst) {
    if (dst.empty() && j.contains(key)) dst = j.at(key).get<std::string>();
  };
  take("graph", p.graph);
  take("attrs", p.attrs);
  take("labels", p.labels);
  take("out", p.out);
}

Labels cluster_tree(const PartitionTree& t, std::optional<std::size_t> k, double kappa) {
  return k ? clusters_with_k(t, *k, kappa) : clusters_natural(t);
}

int cmd_fit(const Paths& p, const TrainFlags& flags, std::optional<std::size_t> k, std::ostream& out) {
  const Graph g = load_input_graph(p);
  const TrainConfig cfg = resolve_config(p, flags);
  const TrainResult result = train(g, cfg);
  const PartitionTree tree = prune(decode_tree(harden(result.assignment), result.embeddings));
  const Labels labels = cluster_tree(tree, k, cfg.kappa);

  const fs::path dir = p.out.empty() ? fs::path("run") : fs::path(p.out);
  fs::create_directories(dir);
  io::write_json(dir / "tree.json", io::tree_to_json(tree, cfg.height));
  io::write_text(dir / "labels.txt", io::labels_text(labels));
  io::write_text(dir / "loss.csv", io::loss_csv(result.loss_trace));
  io::write_json(dir / "levels.json", io::levels_to_json(result.embeddings, result.assignment));
  io::write_json(dir / "config.json", io::config_to_json(cfg));

  Json summary{{"nodes", g.node_count()},
               {"clusters", *std::max_element(labels.begin(), labels.end()) + 1},
               {"final_loss", result.final_loss},
               {"dsi", total_dsi(g, harden(result.assignment))},
               {"seconds", result.seconds}};
  if (g.labels()) {
    const MetricReport m = evaluate(labels, *g.labels(), &g);
    summary["nmi"] = m.nmi;
    summary["ari"] = m.ari;
    summary["acc"] = m.acc;
  }
  out << summary.dump() << "\n";
  return 0;
}

int cmd_coding_tree(const Paths& p, int height, std::ostream& out) {
  const Graph g = load_input_graph(p);
  const PartitionTree tree = greedy_coding_tree(g, height);
  const Labels labels = clusters_natural(tree);
  if (!p.out.empty()) {
    const fs::path dir(p.out);
    fs::create_directories(dir);
    io::write_json(dir / "tree.json", io::tree_to_json(tree, height));
    io::write_text(dir / "labels.txt", io::labels_text(labels));
  }
  Json summary{{"si", tree_si(g, tree)},
               {"clusters", *std::max_element(labels.begin(), labels.end()) + 1}};
  if (g.labels()) summary["nmi"] = nmi(labels, *g.labels());
  out << summary.dump() << "\n";
  return 0;
}

int cmd_decode(const std::string& levels, const std::string& dest, std::ostream& out) {
  std::vector<Matrix> z;
  LevelAssignment c;
  io::levels_from_json(io::read_json(levels), z, c);
  const PartitionTree tree = prune(decode_tree(harden(c), z));
  const Json j = io::tree_to_json(tree, c.height());
  if (dest.empty()) out << j.dump(2) << "\n";
  else io::write_json(dest, j);
  return 0;
}

int cmd_cluster(const std::string& tree_path, std::optional<std::size_t> k, const std::string& dest,
                std::ostream& out) {
  const PartitionTree tree = io::tree_from_json(io::read_json(tree_path));
  const Labels labels = cluster_tree(tree, k, -1.0);
  if (dest.empty()) out << io::labels_text(labels);
  else io::write_text(dest, io::labels_text(labels));
  return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& truth_path, const Paths& p,
             const std::string& tree_path, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  std::optional<Graph> g;
  if (!p.graph.empty()) g = load_input_graph(p);
  // Without a graph the node count is the number of truth lines.
  auto count_lines = [](const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line)) {
      const auto first = line.find_first_not_of(" \t\r");
      if (first != std::string::npos && line[first] != '#') ++n;
    }
    return n;
  };
  const std::size_t n = g ? g->node_count() : count_lines(truth_path);
  const Labels pred = load_labels(pred_path, n);
  const Labels truth = load_labels(truth_path, n);
  MetricReport m = evaluate(pred, truth, g ? &*g : nullptr);
  Json j{{"nmi", m.nmi}, {"ari", m.ari}, {"acc", m.acc}, {"clusters", m.clusters}};
  if (m.conductance) j["conductance"] = *m.conductance;
  if (!tree_path.empty()) {
    if (!g) throw ValidationError("--tree needs --graph for the distortion report");
    j["distortion"] = distortion_report(*g, io::tree_from_json(io::read_json(tree_path)));
  }
  j["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out << j.dump(2) << "\n";
  return 0;
}

int cmd_check(std::uint64_t seed, std::ostream& out) {
  bool ok = true;
  for (int id : invariant_ids()) {
    const CriterionResult r = run_invariant(id, seed);
    ok = ok && r.pass;
    out << format_result(r) << "\n" << std::flush;
  }
  return ok ? 0 : 1;
}

int cmd_viz(const std::string& tree_path, const std::string& dest, const std::string& svg, std::ostream& out) {
  const PartitionTree tree = io::tree_from_json(io::read_json(tree_path));
  const Json j = io::viz_json(tree);
  if (dest.empty()) out << j.dump(2) << "\n";
  else io::write_json(dest, j);
  if (!svg.empty()) io::write_text(svg, io::viz_svg(tree));
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Augmented structural information learning on graphs"};
  app.require_subcommand(1);

  Paths paths;
  TrainFlags flags;
  std::size_t k_value = 0;
  std::string pred;
  std::string truth;
  std::string tree;
  std::string levels;
  std::string svg;

  auto add_graph = [&](CLI::App* sub, bool required) {
    auto* o = sub->add_option("--graph", paths.graph, "Edge list: src dst [weight]");
    if (required) o->required();
    sub->add_option("--attrs", paths.attrs, "Node attribute CSV");
    sub->add_option("--labels", paths.labels, "Ground-truth labels");
  };

  CLI::App* fit = app.add_subcommand("fit", "Train and write tree.json, labels.txt and loss.csv");
  add_graph(fit, false);
  flags.attach(fit);
  fit->add_option("--config", paths.config, "JSON config; keys mirror the flags");
  fit->add_option("--out", paths.out, "Output directory");
  CLI::Option* fit_k = fit->add_option("--k", k_value, "Target cluster count");

  CLI::App* coding = app.add_subcommand("coding-tree", "Greedy discrete coding tree");
  add_graph(coding, true);
  int coding_height = 2;
  coding->add_option("--height", coding_height, "Tree height k");
  coding->add_option("--out", paths.out, "Output directory");

  CLI::App* decode = app.add_subcommand("decode", "Decode a tree from levels.json");
  decode->add_option("--levels", levels, "levels.json written by fit")->required();
  decode->add_option("--out", paths.out, "Output tree.json (stdout if absent)");

  CLI::App* cluster = app.add_subcommand("cluster", "Labels from a tree");
  cluster->add_option("--tree", tree, "tree.json")->required();
  CLI::Option* cluster_k = cluster->add_option("--k", k_value, "Target cluster count");
  cluster->add_option("--out", paths.out, "Output labels (stdout if absent)");

  CLI::App* eval = app.add_subcommand("eval", "Compare predicted and true labels");
  eval->add_option("--pred", pred, "Predicted labels")->required();
  eval->add_option("--truth", truth, "True labels")->required();
  add_graph(eval, false);
  eval->add_option("--tree", tree, "tree.json with coordinates for the distortion report");

  CLI::App* check = app.add_subcommand("check", "Run the invariant suite");
  std::uint64_t check_seed = 0;
  check->add_option("--seed", check_seed, "Seed for the random corpora");

  CLI::App* viz = app.add_subcommand("viz", "Poincare disc coordinates of a tree");
  viz->add_option("--tree", tree, "tree.json")->required();
  viz->add_option("--out", paths.out, "Output JSON (stdout if absent)");
  viz->add_option("--svg", svg, "Optional SVG scatter");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (fit->parsed()) {
      fill_paths_from_config(paths);
      if (paths.graph.empty()) {
        err << "usage error: fit needs --graph (or a graph key in --config)\n";
        return 2;
      }
      std::optional<std::size_t> k;
      if (fit_k->count()) k = k_value;
      return cmd_fit(paths, flags, k, out);
    }
    if (coding->parsed()) return cmd_coding_tree(paths, coding_height, out);
    if (decode->parsed()) return cmd_decode(levels, paths.out, out);
    if (cluster->parsed()) {
      std::optional<std::size_t> k;
      if (cluster_k->count()) k = k_value;
      return cmd_cluster(tree, k, paths.out, out);
    }
    if (eval->parsed()) return cmd_eval(pred, truth, paths, tree, out);
    if (check->parsed()) return cmd_check(check_seed, out);
    if (viz->parsed()) return cmd_viz(tree, paths.out, svg, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"asil"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace asil::cli
