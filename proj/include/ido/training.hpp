#pragma once

#include <cstdint>
#include <filesystem>
#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ido/dataset.hpp"
#include "ido/pipeline.hpp"

namespace ido::training {

// Per-stage replacements for the shared schedule fields.
struct StageOverride {
  std::optional<int> epochs;
  std::optional<double> lr_initial;
  std::optional<double> lr_decayed;
  std::optional<int> lr_decay_epoch;
};

struct TrainConfig {
  double lambda = 2e-4;        // weight of the FLOPs term
  double lr_initial = 1e-4;
  double lr_decayed = 1e-5;
  int lr_decay_epoch = 10;     // epochs run at lr_initial
  int epochs = 15;             // per stage
  int batch_size = 4;
  int max_steps = 0;           // per stage; 0 means no cap
  double flops_unit = 1e6;     // G enters the loss in these units
  double gate_temperature = 1.0;
  std::uint64_t seed = 0;
  std::array<StageOverride, 4> overrides{};  // indexed by Stage

  // This config with the stage's overrides applied.
  TrainConfig for_stage(Stage stage) const;
  void validate() const;  // throws ConfigError
};

// Rate used during 1-based `epoch`.
double learning_rate(const TrainConfig& config, int epoch);

// Mean absolute error plus lambda * G.
double loss(const Image& pred, const Image& gt, double flops, double lambda);
nn::Var loss(const nn::Var& pred, const nn::Var& gt, const nn::Var& flops, double lambda);

struct LossParts {
  nn::Var total, l1, flops_term;
};

// Gate objective: per-region rough-warp error kept by regions left static,
// summed over regions, plus lambda * expected cost / flops_unit.
// `region_error` holds one value per region; `sample` is the (2, G, G) class sample.
LossParts gate_loss(const nn::Var& sample, const std::vector<double>& region_error, const gating::CostModel& cost,
                    double lambda, double flops_unit);

// Mean over channels and footprint of 0.5 (|I0_warp - gt| + |I1_warp - gt|).
std::vector<double> region_errors(const Tensor& i0_warp, const Tensor& i1_warp, const Tensor& gt,
                                  const std::vector<gating::Region>& regions);

struct StepLog {
  long step = 0;
  Stage stage = Stage::Flow;
  int epoch = 1;
  double loss = 0.0, l1 = 0.0, flops_term = 0.0, lr = 0.0;
};
std::string to_json_line(const StepLog& log);

// Trains one stage of `model` in place with the other stages frozen.
class Trainer {
public:
  Trainer(Model& model, const TrainConfig& config);
  std::vector<StepLog> train_stage(Stage stage, const data::Dataset& data, std::ostream* log = nullptr);

private:
  Model& model_;
  TrainConfig config_;
};

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, Stage stage);

// Loads prerequisite checkpoints from `dir` (DependencyError when missing),
// trains `stage`, and writes its checkpoint to `dir`.
std::vector<StepLog> staged_train(const ModelConfig& model_config, const TrainConfig& config,
                                  const data::Dataset& data, Stage stage, const std::filesystem::path& dir,
                                  std::ostream* log = nullptr);

// Loads every checkpoint up to and including `last`.
Model load_model(const std::filesystem::path& dir, Stage last = Stage::Fusion);

}  // namespace ido::training
