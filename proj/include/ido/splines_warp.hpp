#pragma once

#include <filesystem>
#include <vector>

#include "ido/autograd.hpp"
#include "ido/image.hpp"

namespace ido::warp {

// Per-pixel cubic displacement curves through K control points at uniform
// knots k / (K - 1). Control point 0 is identically zero.
struct MotionSpline {
  Tensor cx;  // (K, H, W)
  Tensor cy;  // (K, H, W)

  int knots() const { return cx.channels(); }
  int height() const { return cx.height(); }
  int width() const { return cx.width(); }
  void validate() const;
};

// Catmull-Rom basis weights for the K control points at parameter t in [0, 1].
// Interior tangents are central differences, end tangents one-sided.
std::vector<double> catmull_rom_weights(int knots, double t);

FlowField sample_flow(const MotionSpline& spline, double t);

// Splats `image` along `flow`; targets hit by several sources are blended with
// softmax(importance) weights. Unreached pixels are 0, off-frame splats dropped.
Image forward_warp_softmax(const Image& image, const FlowField& flow, const Tensor& importance);

// Bilinear gather output(x) = image(x + flow(x)) with edge clamping.
Image backward_warp(const Image& image, const FlowField& flow);

// -|I_a(x) - I_b(x + flow(x))|, averaged over channels; (1, H, W).
Tensor photometric_importance(const Image& source, const Image& target, const FlowField& flow_to_target);

// Raw flow file: 16-byte header (magic "IDOF", u32 version, u32 H, u32 W),
// then H*W little-endian float32 u values followed by H*W v values.
void write_flow(const std::filesystem::path& path, const FlowField& flow);
FlowField read_flow(const std::filesystem::path& path);

}  // namespace ido::warp

namespace ido::nn {

// Differentiable counterparts. flow is (2, H, W); importance (1, H, W) is held constant.
Var sample_spline(const Var& cx, const Var& cy, double t);
Var forward_warp(const Var& image, const Var& flow, const Tensor& importance);
Var backward_warp(const Var& image, const Var& flow);

}  // namespace ido::nn
