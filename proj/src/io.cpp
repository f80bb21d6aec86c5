#include "asil/io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "asil/errors.hpp"
#include "asil/lorentz.hpp"

namespace asil::io {

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

Json vector_json(const Vector& v) {
  Json out = Json::array();
  for (double x : v) out.push_back(x);
  return out;
}

Vector vector_from(const Json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

template <typename T>
T need(const Json& j, const char* key) {
  if (!j.contains(key)) throw ValidationError(std::string("missing key '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad value for '") + key + "': " + e.what());
  }
}

std::vector<unsigned char> to_bytes(const Matrix& m) {
  static_assert(std::endian::native == std::endian::little, "checkpoint buffers assume little-endian");
  std::vector<unsigned char> out(static_cast<std::size_t>(m.size()) * sizeof(double));
  if (!out.empty()) std::memcpy(out.data(), m.data(), out.size());
  return out;
}

Vector disc_point(const Vector& x, const lorentz::Space& space) {
  const Vector p = space.to_poincare(x);
  Vector xy = Vector::Zero(2);
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(2, p.size()); ++i) xy(i) = p(i);
  return xy;
}

}  // namespace

Json tree_to_json(const PartitionTree& t, int height) {
  Json nodes = Json::array();
  for (const TreeNode& n : t.nodes()) {
    Json node;
    node["id"] = n.id;
    node["height"] = n.height;
    node["parent"] = n.parent ? Json(*n.parent) : Json(nullptr);
    node["children"] = n.children;
    node["module"] = n.module;
    node["coords"] = n.coords ? vector_json(*n.coords) : Json(nullptr);
    nodes.push_back(std::move(node));
  }
  return Json{{"height", height}, {"nodes", std::move(nodes)}};
}

PartitionTree tree_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("nodes")) throw ValidationError("missing key 'nodes'");
  const Json& nodes = j.at("nodes");
  if (!nodes.is_array() || nodes.empty()) throw ValidationError("tree has no nodes");
  auto coords_of = [](const Json& n) -> std::optional<Vector> {
    if (!n.contains("coords") || n.at("coords").is_null()) return std::nullopt;
    return vector_from(n.at("coords"));
  };
  std::map<std::size_t, const Json*> by_id;
  const Json* root = nullptr;
  for (const Json& n : nodes) {
    const auto id = need<std::size_t>(n, "id");
    if (!by_id.emplace(id, &n).second) throw ValidationError("duplicate tree node id " + std::to_string(id));
    if (!n.contains("parent")) throw ValidationError("tree node " + std::to_string(id) + " has no parent key");
    if (n.at("parent").is_null()) {
      if (root != nullptr) throw ValidationError("tree has more than one root");
      root = &n;
    }
  }
  if (root == nullptr) throw ValidationError("tree has no root");
  const auto module = need<std::vector<NodeId>>(*root, "module");
  PartitionTree t(module.size());
  t.node(t.root()).coords = coords_of(*root);
  std::vector<std::pair<const Json*, TreeNodeId>> queue{{root, t.root()}};
  for (std::size_t q = 0; q < queue.size(); ++q) {
    const auto [src, dst] = queue[q];
    for (std::size_t c : need<std::vector<std::size_t>>(*src, "children")) {
      const auto it = by_id.find(c);
      if (it == by_id.end()) throw ValidationError("unknown child id " + std::to_string(c));
      const Json& child = *it->second;
      const TreeNodeId id = t.add_child(dst, need<std::vector<NodeId>>(child, "module"), coords_of(child));
      queue.emplace_back(&child, id);
    }
  }
  if (queue.size() != nodes.size()) throw ValidationError("tree nodes are not all reachable from the root");
  t.validate(true);
  return t;
}

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const Json& j) {
  if (!j.is_array()) throw ValidationError("matrix must be an array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = rows == 0 ? 0 : j[0].size();
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (j[i].size() != cols) throw DimensionError("ragged matrix row " + std::to_string(i));
    for (std::size_t k = 0; k < cols; ++k) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j[i][k].get<double>();
    }
  }
  return m;
}

Json levels_to_json(const std::vector<Matrix>& embeddings, const LevelAssignment& c) {
  Json z = Json::array();
  for (const Matrix& m : embeddings) z.push_back(matrix_to_json(m));
  Json a = Json::array();
  for (const Matrix& m : c.c) a.push_back(matrix_to_json(m));
  return Json{{"height", c.height()}, {"embeddings", std::move(z)}, {"assignment", std::move(a)}};
}

void levels_from_json(const Json& j, std::vector<Matrix>& embeddings, LevelAssignment& c) {
  embeddings.clear();
  c.c.clear();
  for (const Json& m : j.at("embeddings")) embeddings.push_back(matrix_from_json(m));
  for (const Json& m : j.at("assignment")) c.c.push_back(matrix_from_json(m));
  if (c.height() != need<int>(j, "height")) throw ValidationError("level count does not match height");
}

Json config_to_json(const TrainConfig& cfg) {
  Json j;
  j["height"] = cfg.height;
  j["gamma"] = cfg.gamma;
  j["knn"] = cfg.knn;
  j["temp"] = cfg.temperature;
  j["lr"] = cfg.lr;
  j["epochs"] = cfg.epochs;
  j["seed"] = cfg.seed;
  j["widths"] = cfg.widths;
  j["kappa"] = cfg.kappa;
  j["embed_dim"] = cfg.embed_dim;
  j["hidden"] = cfg.hidden;
  j["learn_boost"] = cfg.learn_boost;
  j["tcl_weight"] = cfg.tcl_weight;
  j["tcl_drop"] = cfg.tcl_drop;
  return j;
}

void apply_config_json(const Json& j, TrainConfig& cfg) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  // Path-like keys belong to the command line, not the model.
  static const std::set<std::string> passthrough = {"graph", "attrs", "labels", "out", "k", "config"};
  for (const auto& [key, value] : j.items()) {
    if (key == "height") cfg.height = need<int>(j, "height");
    else if (key == "gamma") cfg.gamma = need<double>(j, "gamma");
    else if (key == "knn") cfg.knn = need<std::size_t>(j, "knn");
    else if (key == "temp") cfg.temperature = need<double>(j, "temp");
    else if (key == "lr") cfg.lr = need<double>(j, "lr");
    else if (key == "epochs") cfg.epochs = need<int>(j, "epochs");
    else if (key == "seed") cfg.seed = need<std::uint64_t>(j, "seed");
    else if (key == "widths") cfg.widths = need<std::vector<std::size_t>>(j, "widths");
    else if (key == "kappa") cfg.kappa = need<double>(j, "kappa");
    else if (key == "embed_dim") cfg.embed_dim = need<std::size_t>(j, "embed_dim");
    else if (key == "hidden") cfg.hidden = need<std::size_t>(j, "hidden");
    else if (key == "learn_boost") cfg.learn_boost = need<bool>(j, "learn_boost");
    else if (key == "tcl_weight") cfg.tcl_weight = need<double>(j, "tcl_weight");
    else if (key == "tcl_drop") cfg.tcl_drop = need<double>(j, "tcl_drop");
    else if (!passthrough.contains(key)) throw ValidationError("unknown config key '" + key + "'");
  }
}

std::string base64_encode(std::span<const unsigned char> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const unsigned v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const unsigned v = bytes[i] << 16;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    const unsigned v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  std::array<int, 256> lookup;
  lookup.fill(-1);
  for (int i = 0; i < 64; ++i) lookup[static_cast<unsigned char>(kAlphabet[i])] = i;
  if (text.size() % 4 != 0) throw ValidationError("base64 length is not a multiple of 4");
  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    unsigned v = 0;
    int pad = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      const char ch = text[i + k];
      if (ch == '=' && i + 4 == text.size() && k >= 2) {
        ++pad;
        v <<= 6;
        continue;
      }
      const int d = lookup[static_cast<unsigned char>(ch)];
      if (d < 0 || pad > 0) throw ValidationError("invalid base64 character");
      v = (v << 6) | static_cast<unsigned>(d);
    }
    out.push_back(static_cast<unsigned char>((v >> 16) & 255));
    if (pad < 2) out.push_back(static_cast<unsigned char>((v >> 8) & 255));
    if (pad < 1) out.push_back(static_cast<unsigned char>(v & 255));
  }
  return out;
}

Json checkpoint_to_json(const TrainConfig& cfg, const Lsenet& model) {
  Json params = Json::array();
  for (const ad::Tensor& t : model.parameters()) {
    params.push_back(Json{{"name", t.name},
                          {"rows", t.data.rows()},
                          {"cols", t.data.cols()},
                          {"data", base64_encode(to_bytes(t.data))}});
  }
  return Json{{"format", "asil-checkpoint"},
              {"version", 1},
              {"config", config_to_json(cfg)},
              {"nodes", model.node_count()},
              {"features", model.feature_dim()},
              {"parameters", std::move(params)}};
}

TrainConfig checkpoint_config(const Json& j) {
  if (need<std::string>(j, "format") != "asil-checkpoint") throw ValidationError("not a checkpoint file");
  TrainConfig cfg;
  apply_config_json(j.at("config"), cfg);
  return cfg;
}

void load_checkpoint(const Json& j, Lsenet& model) {
  if (need<std::size_t>(j, "nodes") != model.node_count() || need<std::size_t>(j, "features") != model.feature_dim()) {
    throw DimensionError("checkpoint was written for a different graph size");
  }
  const Json& params = j.at("parameters");
  if (params.size() != model.parameters().size()) throw DimensionError("checkpoint parameter count differs");
  for (const Json& p : params) {
    ad::Tensor& t = model.parameter(need<std::string>(p, "name"));
    const auto rows = need<Eigen::Index>(p, "rows");
    const auto cols = need<Eigen::Index>(p, "cols");
    if (rows != t.data.rows() || cols != t.data.cols()) throw DimensionError("shape mismatch for " + t.name);
    const auto bytes = base64_decode(need<std::string>(p, "data"));
    if (bytes.size() != static_cast<std::size_t>(rows * cols) * sizeof(double)) {
      throw DimensionError("buffer size mismatch for " + t.name);
    }
    if (!bytes.empty()) std::memcpy(t.data.data(), bytes.data(), bytes.size());
  }
}

Json viz_json(const PartitionTree& t, double kappa) {
  const lorentz::Space space(kappa);
  Json out = Json::array();
  for (const TreeNode& n : t.nodes()) {
    if (!n.coords) throw ValidationError("tree node " + std::to_string(n.id) + " has no coordinates");
    const Vector xy = disc_point(*n.coords, space);
    out.push_back(Json{{"id", n.id}, {"height", n.height}, {"xy", {xy(0), xy(1)}}});
  }
  return out;
}

std::string viz_svg(const PartitionTree& t, double kappa) {
  static const char* palette[] = {"#222222", "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  const lorentz::Space space(kappa);
  const double size = 600.0;
  const double r = size / 2.0 - 10.0;
  auto px = [&](const Vector& xy) { return std::pair{size / 2.0 + r * xy(0), size / 2.0 - r * xy(1)}; };
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\">\n";
  svg << "<circle cx=\"" << size / 2 << "\" cy=\"" << size / 2 << "\" r=\"" << r
      << "\" fill=\"none\" stroke=\"#999999\"/>\n";
  std::vector<Vector> xy(t.size());
  for (const TreeNode& n : t.nodes()) {
    if (!n.coords) throw ValidationError("tree node " + std::to_string(n.id) + " has no coordinates");
    xy[n.id] = disc_point(*n.coords, space);
  }
  for (const TreeNode& n : t.nodes()) {
    if (!n.parent) continue;
    const auto [x1, y1] = px(xy[*n.parent]);
    const auto [x2, y2] = px(xy[n.id]);
    svg << "<line x1=\"" << x1 << "\" y1=\"" << y1 << "\" x2=\"" << x2 << "\" y2=\"" << y2
        << "\" stroke=\"#cccccc\"/>\n";
  }
  for (const TreeNode& n : t.nodes()) {
    const auto [x, y] = px(xy[n.id]);
    const double radius = n.is_leaf() ? 3.0 : 6.0;
    svg << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"" << radius << "\" fill=\""
        << palette[static_cast<std::size_t>(n.height) % std::size(palette)] << "\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string labels_text(const Labels& labels) {
  std::string out;
  for (std::size_t i = 0; i < labels.size(); ++i) out += std::to_string(i) + " " + std::to_string(labels[i]) + "\n";
  return out;
}

std::string loss_csv(const std::vector<double>& trace) {
  std::string out = "epoch,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < trace.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, trace[i]);
    out += buf;
  }
  return out;
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
}

void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace asil::io
