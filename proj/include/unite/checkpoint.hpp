#pragma once

// Checkpoints: a JSON manifest (hyperparameters, ordered parameter names,
// shapes, element table) next to a binary blob of little-endian float64
// values concatenated in manifest order. Round-trips are bit-exact.

#include <string>

#include "unite/training.hpp"

namespace unite {

// Path of the value blob belonging to a manifest path ("x.json" -> "x.bin").
std::string checkpoint_blob_path(const std::string& manifest_path);

void save_checkpoint(const Model& model, const std::string& manifest_path);
Model load_checkpoint(const std::string& manifest_path);

}  // namespace unite
