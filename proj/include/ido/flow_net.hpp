#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ido/events.hpp"
#include "ido/nn.hpp"
#include "ido/splines_warp.hpp"

namespace ido {

struct FlowNetConfig {
  int base_channels = 16;
  int depth = 3;
  int knots = 4;
  int image_channels = 1;
  int voxel_bins = 5;

  void validate() const;
};

// UNet over [I0, I1, V_{0->1}] with two heads emitting spline control points
// for the 0->1 and 1->0 directions. The k = 0 control point is not predicted.
class FlowNet {
public:
  FlowNet(const FlowNetConfig& config, std::uint64_t seed);

  struct Splines {
    nn::Var cx01, cy01, cx10, cy10;  // each (K, H, W)
  };

  Splines forward(const nn::Var& i0, const nn::Var& i1, const nn::Var& voxels) const;
  std::pair<warp::MotionSpline, warp::MotionSpline> estimate_splines(const Image& i0, const Image& i1,
                                                                     const events::VoxelGrid& voxels) const;

  std::vector<metrics::LayerCost> cost(int height, int width) const;
  void check_input_size(int height, int width) const;

  const FlowNetConfig& config() const { return config_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

private:
  FlowNetConfig config_;
  nn::ParamSet params_;
  std::vector<nn::Conv2d> enc_a_, enc_b_;
  std::vector<nn::Conv2d> dec_;
  nn::Conv2d head01_, head10_;
};

// Sampled flows and forward-warped boundary frames at time t.
struct BoundaryWarp {
  Image i0_warp, i1_warp;
  FlowField f0t, f1t;
};

// Samples spline01 at t and spline10 at 1 - t, then softmax-splats both frames.
// Importance is the photometric consistency of each frame against the other
// under the full-interval flow.
BoundaryWarp warp_boundaries(const Image& i0, const Image& i1, const warp::MotionSpline& spline01,
                             const warp::MotionSpline& spline10, double t);

}  // namespace ido
