#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "asil/lsenet.hpp"
#include "asil/partition_tree.hpp"
#include "asil/train.hpp"

namespace asil::io {

using Json = nlohmann::json;

// {"height", "nodes": [{"id", "height", "parent", "children", "module", "coords"}]}.
// "height" is the nominal tree height; node "height" is the depth from the root.
Json tree_to_json(const PartitionTree& t, int height);
PartitionTree tree_from_json(const Json& j);

Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);

// {"height", "embeddings": [Z^0..Z^H], "assignment": [C^1..C^H]}
Json levels_to_json(const std::vector<Matrix>& embeddings, const LevelAssignment& c);
void levels_from_json(const Json& j, std::vector<Matrix>& embeddings, LevelAssignment& c);

// Keys mirror the long CLI flags without dashes.
Json config_to_json(const TrainConfig& cfg);
// Only keys present in `j` are applied; unknown keys throw ValidationError.
void apply_config_json(const Json& j, TrainConfig& cfg);

std::string base64_encode(std::span<const unsigned char> bytes);
std::vector<unsigned char> base64_decode(const std::string& text);

// Config plus every parameter tensor as little-endian float64 in base64.
Json checkpoint_to_json(const TrainConfig& cfg, const Lsenet& model);
// Copies tensors into `model` by name; DimensionError on shape mismatch.
void load_checkpoint(const Json& j, Lsenet& model);
TrainConfig checkpoint_config(const Json& j);

// [{"id", "height", "xy"}] with Poincare disc coordinates of every node.
Json viz_json(const PartitionTree& t, double kappa = -1.0);
std::string viz_svg(const PartitionTree& t, double kappa = -1.0);

std::string labels_text(const Labels& labels);
std::string loss_csv(const std::vector<double>& trace);

Json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
// Pretty-printed with two-space indent and a trailing newline.
void write_json(const std::filesystem::path& path, const Json& j);

}  // namespace asil::io
