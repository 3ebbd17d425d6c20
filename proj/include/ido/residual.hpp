#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "ido/gating.hpp"
#include "ido/nn.hpp"

namespace ido::residual {

struct ResidualConfig {
  int base_channels = 8;
  int attention_channels = 8;
  gating::Layout layout = gating::Layout::Overlapping;
};

// Full-frame inputs from which per-region crops are taken.
struct ResidualInputs {
  nn::Var i0, i1;        // (C, H, W)
  nn::Var v0t, v1t;      // (B, H, W)
  nn::Var i0_warp, i1_warp;
  nn::Var f0t, f1t;      // (2, H, W)
};

// Crops of every input restricted to one region footprint.
struct RegionBundle {
  gating::Region region;
  nn::Var stacked;  // (4C + 2B + 4, h, w) in ResidualInputs field order

  static RegionBundle crop(const ResidualInputs& in, const gating::Region& region);
};

struct RefinedFlows {
  nn::Var f0t;  // (2, H, W)
  nn::Var f1t;
};

struct RefinedFrames {
  nn::Var i0t, i1t;
};

// Small two-level UNet predicting a residual flow crop for each direction.
class RegionNet {
public:
  RegionNet(int in_channels, int base_channels, std::uint64_t seed);
  std::pair<nn::Var, nn::Var> operator()(const nn::Var& stacked) const;
  std::vector<metrics::LayerCost> cost(int h, int w) const;
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }
  int in_channels() const { return in_; }

private:
  int in_;
  nn::ParamSet params_;
  nn::Conv2d a_, b_, down_, mid_, up_, head_;
};

// Maps the stacked zero-padded region flows (4 channels per region slot) to
// one blending logit map per region slot.
class AttentionNet {
public:
  AttentionNet(int regions, int base_channels, std::uint64_t seed);
  nn::Var operator()(const nn::Var& stacked_padded) const;
  std::vector<metrics::LayerCost> cost(int h, int w) const;
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

private:
  int regions_;
  nn::ParamSet params_;
  nn::Conv2d a_, down_, mid_, up_, head_;
};

// Per-region residual flow estimation, attention blending in overlaps, montage.
class ResidualModule {
public:
  ResidualModule(const ResidualConfig& config, int image_channels, int voxel_bins, std::uint64_t seed);

  // Residual flow crops (0->t, 1->t) for one region.
  std::pair<nn::Var, nn::Var> refine_region(const RegionBundle& bundle) const;

  // Runs every dynamic region, pads, blends and montages.
  RefinedFlows refine(const ResidualInputs& in, const gating::BinaryMask& mask) const;

  // Refined-flow cost for one region plus the attention network share.
  double region_flops(int height, int width) const;
  double attention_flops(int height, int width) const;
  std::vector<metrics::LayerCost> cost(int height, int width, const gating::BinaryMask& mask) const;

  const ResidualConfig& config() const { return config_; }
  int regions() const;
  RegionNet& region_net() { return region_net_; }
  const RegionNet& region_net() const { return region_net_; }
  AttentionNet& attention_net() { return attention_; }
  const AttentionNet& attention_net() const { return attention_; }
  std::vector<nn::ParamSet*> param_sets() { return {&region_net_.params(), &attention_.params()}; }

private:
  ResidualConfig config_;
  RegionNet region_net_;
  AttentionNet attention_;
};

// Convex per-pixel combination of the padded flows (4, H, W) of dynamic regions.
// padded[i] must be set exactly for the dynamic regions. logits: (n, H, W).
RefinedFlows blend_and_montage(const std::vector<std::optional<nn::Var>>& padded, const gating::BinaryMask& mask,
                               const std::vector<gating::Region>& regions, const nn::Var& logits);

// Backward-warps the rough warped frames by the refined residual flows.
RefinedFrames refine_warp(const nn::Var& i0_warp, const nn::Var& i1_warp, const RefinedFlows& refined);

}  // namespace ido::residual
