#include "ido/pipeline.hpp"

#include <chrono>

#include "ido/error.hpp"

namespace ido {

FlowNetConfig ModelConfig::flow_config() const {
  FlowNetConfig f = flow;
  f.image_channels = image_channels;
  f.voxel_bins = voxel_bins;
  return f;
}

void ModelConfig::validate() const {
  if (image_channels != 1 && image_channels != 3) throw ConfigError("image_channels must be 1 or 3");
  if (voxel_bins < 2) throw ConfigError("voxel_bins must be at least 2");
  try {
    flow_config().validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  if (gate.base_channels < 1 || gate.temperature <= 0.0) throw ConfigError("invalid gate config");
  if (residual.base_channels < 1 || residual.attention_channels < 1) throw ConfigError("invalid residual config");
  if (fusion.base_channels < 1 || fusion.heads < 1 || fusion.window < 1 ||
      (2 * fusion.base_channels) % fusion.heads != 0)
    throw ConfigError("invalid fusion config");
}

std::string_view stage_name(Stage stage) {
  switch (stage) {
    case Stage::Flow: return "flow";
    case Stage::Gate: return "gate";
    case Stage::Residual: return "residual";
    case Stage::Fusion: return "fusion";
  }
  return "?";
}

Stage parse_stage(std::string_view name) {
  for (Stage s : kStages)
    if (stage_name(s) == name) return s;
  throw ConfigError("unknown stage: " + std::string(name));
}

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::NoRefinement: return "none";
    case Variant::AllRegions: return "all";
    case Variant::Gated: return "gated";
  }
  return "?";
}

std::string_view variant_label(Variant v) {
  switch (v) {
    case Variant::NoRefinement: return "Without refinement";
    case Variant::AllRegions: return "All regions process";
    case Variant::Gated: return "Ours";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : {Variant::NoRefinement, Variant::AllRegions, Variant::Gated})
    if (variant_name(v) == name) return v;
  throw ConfigError("unknown variant: " + std::string(name));
}

namespace {

ModelConfig validated(const ModelConfig& c) {
  c.validate();
  return c;
}

// Distinct, stable init seeds per sub-network.
std::uint64_t sub_seed(std::uint64_t seed, int k) { return seed * 0x9E3779B97F4A7C15ULL + 0x1000u * (k + 1); }

}  // namespace

Model::Model(const ModelConfig& config)
    : flow(validated(config).flow_config(), sub_seed(config.seed, 0)),
      gate(config.gate, sub_seed(config.seed, 1), gating::region_grid(config.residual.layout)),
      residual(config.residual, config.image_channels, config.voxel_bins, sub_seed(config.seed, 2)),
      fusion(config.fusion, config.image_channels, config.voxel_bins, sub_seed(config.seed, 3)),
      config_(config) {}

std::vector<nn::ParamSet*> Model::stage_params(Stage stage) {
  switch (stage) {
    case Stage::Flow: return {&flow.params()};
    case Stage::Gate: return {&gate.params()};
    case Stage::Residual: return residual.param_sets();
    case Stage::Fusion: return {&fusion.params()};
  }
  return {};
}

std::vector<const nn::ParamSet*> Model::stage_params(Stage stage) const {
  auto sets = const_cast<Model*>(this)->stage_params(stage);
  return {sets.begin(), sets.end()};
}

void Model::set_trainable(std::optional<Stage> stage) {
  for (Stage s : kStages)
    for (auto* p : stage_params(s)) p->set_trainable(stage && *stage == s);
}

void Model::check_input_size(int height, int width) const {
  flow.check_input_size(height, width);
  fusion.check_input_size(height, width);
  require(height % 8 == 0 && width % 8 == 0, "frame size must be divisible by 8 for the gate");
}

gating::CostModel Model::cost_model(int height, int width) const {
  gating::CostModel cm;
  cm.base_flops = metrics::total_flops(flow.cost(height, width)) + metrics::total_flops(gate.cost(height, width)) +
                  metrics::total_flops(fusion.cost(height, width));
  cm.region_flops.assign(static_cast<std::size_t>(residual.regions()), residual.region_flops(height, width));
  return cm;
}

std::vector<metrics::LayerCost> Model::cost(int height, int width, const gating::BinaryMask& mask) const {
  std::vector<metrics::LayerCost> out;
  auto append = [&](const std::string& prefix, const std::vector<metrics::LayerCost>& layers) {
    for (const auto& l : layers) out.push_back({prefix + l.name, l.macs});
  };
  append("flow/", flow.cost(height, width));
  append("gate/", gate.cost(height, width));
  append("residual/", residual.cost(height, width, mask));
  append("fusion/", fusion.cost(height, width));
  return out;
}

TimeVoxels split_voxels(const events::EventStream& stream, double t, int bins, int height, int width) {
  require(t >= stream.t_start && t <= stream.t_end, "target time outside event interval");
  auto [before, after] = events::split_stream(stream, t);
  TimeVoxels out;
  out.v0t = events::voxelize(before, bins, height, width).data;
  out.v1t = events::voxelize(events::reverse_stream(after), bins, height, width).data;
  return out;
}

FlowPass run_flow(const Model& model, const Image& i0, const Image& i1, const events::EventStream& stream) {
  require(i0.same_shape(i1), "boundary frames differ in shape");
  const int h = i0.height(), w = i0.width();
  model.check_input_size(h, w);
  FlowPass pass;
  pass.i0 = nn::constant(i0.tensor());
  pass.i1 = nn::constant(i1.tensor());
  pass.v01 = nn::constant(events::voxelize(stream, model.config().voxel_bins, h, w).data);
  pass.splines = model.flow.forward(pass.i0, pass.i1, pass.v01);
  const warp::MotionSpline s01{pass.splines.cx01->value, pass.splines.cy01->value};
  const warp::MotionSpline s10{pass.splines.cx10->value, pass.splines.cy10->value};
  pass.importance0 = warp::photometric_importance(i0, i1, warp::sample_flow(s01, 1.0));
  pass.importance1 = warp::photometric_importance(i1, i0, warp::sample_flow(s10, 1.0));
  return pass;
}

StepTrace run_step(const Model& model, const FlowPass& pass, const events::EventStream& stream, double t,
                   const RunOptions& options) {
  require(t >= 0.0 && t <= 1.0, "t must lie in [0, 1]");
  const int h = pass.i0->value.height(), w = pass.i0->value.width();
  StepTrace tr;
  tr.t = t;
  auto vox = split_voxels(stream, t, model.config().voxel_bins, h, w);
  tr.v0t = nn::constant(std::move(vox.v0t));
  tr.v1t = nn::constant(std::move(vox.v1t));
  tr.f0t = nn::sample_spline(pass.splines.cx01, pass.splines.cy01, t);
  tr.f1t = nn::sample_spline(pass.splines.cx10, pass.splines.cy10, 1.0 - t);
  tr.i0_warp = nn::forward_warp(pass.i0, tr.f0t, pass.importance0);
  tr.i1_warp = nn::forward_warp(pass.i1, tr.f1t, pass.importance1);
  const int n = model.residual.regions();
  tr.mask = gating::BinaryMask::all_static(n);
  if (options.until == Stage::Flow) return tr;

  if (options.variant == Variant::Gated || options.until == Stage::Gate) {
    tr.gate = gating::gate_forward(model.gate, tr.f0t, tr.f1t, options.gate);
    tr.mask = tr.gate->mask;
  }
  if (options.variant == Variant::AllRegions) tr.mask = gating::BinaryMask::all_dynamic(n);
  if (options.variant == Variant::NoRefinement) tr.mask = gating::BinaryMask::all_static(n);
  if (options.until == Stage::Gate) return tr;

  if (options.variant == Variant::NoRefinement) {
    tr.refined_frames = residual::RefinedFrames{tr.i0_warp, tr.i1_warp};
  } else {
    const residual::ResidualInputs in{pass.i0, pass.i1, tr.v0t, tr.v1t, tr.i0_warp, tr.i1_warp, tr.f0t, tr.f1t};
    tr.refined = model.residual.refine(in, tr.mask);
    tr.refined_frames = residual::refine_warp(tr.i0_warp, tr.i1_warp, *tr.refined);
  }
  if (options.until == Stage::Residual) return tr;

  tr.output = model.fusion.forward({pass.i0, pass.i1, tr.v0t, tr.v1t, tr.refined_frames->i0t, tr.refined_frames->i1t});
  return tr;
}

InterpolationResult interpolate(const Model& model, const Image& i0, const Image& i1,
                                const events::EventStream& stream, const std::vector<double>& times,
                                Variant variant) {
  const auto start = std::chrono::steady_clock::now();
  InterpolationResult out;
  const FlowPass pass = run_flow(model, i0, i1, stream);
  RunOptions opt;
  opt.variant = variant;
  for (double t : times) out.steps.push_back(run_step(model, pass, stream, t, opt));
  out.compute_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace ido
