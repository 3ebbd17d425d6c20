#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ido/events.hpp"
#include "ido/flow_net.hpp"
#include "ido/fusion.hpp"
#include "ido/gating.hpp"
#include "ido/residual.hpp"

namespace ido {

struct ModelConfig {
  int image_channels = 1;
  int voxel_bins = 5;
  FlowNetConfig flow;
  gating::GatingConfig gate;
  residual::ResidualConfig residual;
  fusion::FusionConfig fusion;
  std::uint64_t seed = 0;

  // Flow config with channel counts taken from this config.
  FlowNetConfig flow_config() const;
  void validate() const;
};

enum class Stage { Flow = 0, Gate = 1, Residual = 2, Fusion = 3 };
inline constexpr Stage kStages[] = {Stage::Flow, Stage::Gate, Stage::Residual, Stage::Fusion};
std::string_view stage_name(Stage stage);
Stage parse_stage(std::string_view name);  // throws ConfigError

// Table rows: no refinement, every region refined, gate decides.
enum class Variant { NoRefinement, AllRegions, Gated };
std::string_view variant_name(Variant v);        // "none", "all", "gated"
std::string_view variant_label(Variant v);       // report row label
Variant parse_variant(std::string_view name);    // throws ConfigError

// All four sub-networks with initial weights derived from config.seed.
class Model {
public:
  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  std::vector<nn::ParamSet*> stage_params(Stage stage);
  std::vector<const nn::ParamSet*> stage_params(Stage stage) const;
  // Marks `stage` trainable and every other stage frozen; nullopt freezes all.
  void set_trainable(std::optional<Stage> stage);

  void check_input_size(int height, int width) const;
  // Fixed cost (flow + gate + fusion) and per-region residual cost.
  gating::CostModel cost_model(int height, int width) const;
  std::vector<metrics::LayerCost> cost(int height, int width, const gating::BinaryMask& mask) const;

  FlowNet flow;
  gating::GatingNet gate;
  residual::ResidualModule residual;
  fusion::FusionNet fusion;

private:
  ModelConfig config_;
};

// Network-ready voxel grids for one target time.
struct TimeVoxels {
  Tensor v0t;  // events in [0, t]
  Tensor v1t;  // events in [t, 1], time-reversed with flipped polarity
};
TimeVoxels split_voxels(const events::EventStream& stream, double t, int bins, int height, int width);

// Everything that depends only on the boundary frames and the full event stream.
struct FlowPass {
  nn::Var i0, i1, v01;
  FlowNet::Splines splines;
  Tensor importance0, importance1;  // constant softmax-splatting weights
};

FlowPass run_flow(const Model& model, const Image& i0, const Image& i1, const events::EventStream& stream);

struct RunOptions {
  Variant variant = Variant::Gated;
  Stage until = Stage::Fusion;
  gating::GateOptions gate;
};

struct StepTrace {
  double t = 0.0;
  nn::Var v0t, v1t;
  nn::Var f0t, f1t;
  nn::Var i0_warp, i1_warp;
  std::optional<gating::GateResult> gate;
  gating::BinaryMask mask;
  std::optional<residual::RefinedFlows> refined;
  std::optional<residual::RefinedFrames> refined_frames;
  nn::Var output;
};

StepTrace run_step(const Model& model, const FlowPass& pass, const events::EventStream& stream, double t,
                   const RunOptions& options);

// Convenience: the final frame at each t from a single flow pass.
struct InterpolationResult {
  std::vector<StepTrace> steps;
  double compute_seconds = 0.0;
};
InterpolationResult interpolate(const Model& model, const Image& i0, const Image& i1,
                                const events::EventStream& stream, const std::vector<double>& times,
                                Variant variant = Variant::Gated);

}  // namespace ido
