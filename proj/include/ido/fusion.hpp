#pragma once

#include <cstdint>
#include <vector>

#include "ido/events.hpp"
#include "ido/nn.hpp"

namespace ido::fusion {

struct FusionConfig {
  int base_channels = 32;
  int heads = 2;
  int window = 4;
};

struct FusionInputs {
  nn::Var i0, i1;      // (C, H, W)
  nn::Var v0t, v1t;    // (B, H, W)
  nn::Var i0t_refine, i1t_refine;
};

// Single synthesis block: a two-level encoder with windowed multi-head
// self-attention at half resolution, and a decoder emitting per-pixel blend
// logits over {I0, I1, I0t_refine, I1t_refine} plus an additive correction.
class FusionNet {
public:
  FusionNet(const FusionConfig& config, int image_channels, int voxel_bins, std::uint64_t seed);

  // Output clamped to [0, 1].
  nn::Var forward(const FusionInputs& in) const;
  Image fuse(const Image& i0, const Image& i1, const events::VoxelGrid& v0t, const events::VoxelGrid& v1t,
             const Image& i0t_refine, const Image& i1t_refine) const;

  void check_input_size(int height, int width) const;
  std::vector<metrics::LayerCost> cost(int height, int width) const;

  const FusionConfig& config() const { return config_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

private:
  FusionConfig config_;
  int image_channels_;
  int voxel_bins_;
  nn::ParamSet params_;
  nn::Conv2d in_, in_b_, down_, qkv_, proj_, mid_, dec_, head_;
};

}  // namespace ido::fusion
