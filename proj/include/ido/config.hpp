#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ido/dataset.hpp"
#include "ido/pipeline.hpp"
#include "ido/training.hpp"

namespace ido::config {

using Json = nlohmann::ordered_json;

// Missing keys keep their defaults; unknown keys raise ConfigError.
Json to_json(const ModelConfig& c);
ModelConfig model_from_json(const Json& j);
Json to_json(const training::TrainConfig& c);
training::TrainConfig train_from_json(const Json& j);
Json to_json(const data::SyntheticConfig& c);
data::SyntheticConfig synthetic_from_json(const Json& j);

struct EvalOptions {
  int skip = 1;
  std::vector<double> times{0.5};
  int max_samples = 0;  // 0: all
};

// One document per run.
struct PipelineConfig {
  std::filesystem::path dataset_root = "data";
  std::filesystem::path checkpoint_dir = "checkpoints";
  std::filesystem::path output_dir = "out";
  ModelConfig model;
  training::TrainConfig train;
  data::SyntheticConfig synthetic;
  EvalOptions eval;
  double event_threshold = 0.2;
};

Json to_json(const PipelineConfig& c);
PipelineConfig pipeline_from_json(const Json& j);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

// Applies the IDO_SEED environment variable, if set, to every seed in `c`.
void apply_seed_override(PipelineConfig& c);

}  // namespace ido::config
