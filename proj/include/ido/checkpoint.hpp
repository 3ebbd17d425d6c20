#pragma once

#include <filesystem>
#include <vector>

#include "ido/pipeline.hpp"

namespace ido::checkpoint {

// Binary layout: magic "IDOCKPT1", u32 header length, UTF-8 JSON header
// {"stage", "model", "arrays": [{"name", "shape"}]}, then every array as
// little-endian float64 in header order.
void save(const std::filesystem::path& path, Stage stage, const ModelConfig& config,
          const std::vector<const nn::ParamSet*>& params);
void save(const std::filesystem::path& path, const Model& model, Stage stage);

struct Header {
  Stage stage = Stage::Flow;
  ModelConfig model;
};
Header read_header(const std::filesystem::path& path);

// Copies stored values into `model`'s parameters for the checkpoint's stage.
// Names and shapes must match exactly.
void load(const std::filesystem::path& path, Model& model);

}  // namespace ido::checkpoint
