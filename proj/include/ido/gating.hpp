#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ido/image.hpp"
#include "ido/nn.hpp"

namespace ido::gating {

// Sliding-window sub-region of a frame.
struct Region {
  int index = 0;
  int y0 = 0, x0 = 0;
  int h = 0, w = 0;

  bool contains(int y, int x) const { return y >= y0 && y < y0 + h && x >= x0 && x < x0 + w; }
};

enum class Layout {
  Overlapping,  // 3 x 3 windows of H/2 x W/2 at stride H/4, W/4
  Disjoint,     // 2 x 2 windows of H/2 x W/2 at stride H/2, W/2
};

// Nine H/2 x W/2 windows with stride H/4, W/4, row-major from the top-left.
std::vector<Region> divide_regions(int height, int width);
std::vector<Region> regions_for(Layout layout, int height, int width);
int region_grid(Layout layout);  // regions per side

// Per-region class probabilities; channel 0 static, channel 1 dynamic.
struct GateMap {
  Tensor probs;  // (2, G, G)

  int regions() const { return probs.height() * probs.width(); }
  double dynamic_prob(int i) const { return probs[static_cast<std::size_t>(regions() + i)]; }
};

struct BinaryMask {
  std::vector<bool> dynamic;

  static BinaryMask all_static(int n) { return {std::vector<bool>(static_cast<std::size_t>(n), false)}; }
  static BinaryMask all_dynamic(int n) { return {std::vector<bool>(static_cast<std::size_t>(n), true)}; }
  int size() const { return static_cast<int>(dynamic.size()); }
  int count_dynamic() const;
  bool operator[](int i) const { return dynamic[static_cast<std::size_t>(i)]; }
  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

// Dynamic iff dynamic probability > 0.5; a tie is static.
BinaryMask binarize(const GateMap& gate);

// softmax((logits + noise) / tau).
std::array<double, 2> gumbel_softmax(const std::array<double, 2>& logits, double tau,
                                     const std::array<double, 2>& noise);

// Standard Gumbel samples -log(-log U) for a (2, G, G) gate, from `seed`.
Tensor gumbel_noise(int grid, std::uint64_t seed);

struct GatingConfig {
  int base_channels = 8;
  double temperature = 1.0;
};

// Three stride-2 conv blocks over [F0t, F1t], adaptive pooling to the region
// grid, and a 1x1 conv to two class logits per region.
class GatingNet {
public:
  GatingNet(const GatingConfig& config, std::uint64_t seed, int grid = 3);

  nn::Var logits(const nn::Var& f0t, const nn::Var& f1t) const;
  std::vector<metrics::LayerCost> cost(int height, int width) const;

  const GatingConfig& config() const { return config_; }
  int grid() const { return grid_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

private:
  GatingConfig config_;
  int grid_;
  nn::ParamSet params_;
  std::array<nn::Conv2d, 3> blocks_;
  nn::Conv2d classify_;
};

enum class GateMode { Eval, Train };

struct GateOptions {
  GateMode mode = GateMode::Eval;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  bool straight_through = true;  // hard forward, soft gradient
  const Tensor* noise = nullptr;  // overrides seed-derived noise when set
};

struct GateResult {
  GateMap map;       // softmax of logits
  BinaryMask mask;   // decision used downstream
  nn::Var logits;    // (2, G, G)
  nn::Var sample;    // train: Gumbel-softmax sample (hard with ST); eval: one-hot of mask
  Tensor soft_sample;
};

GateResult gate_forward(const GatingNet& net, const nn::Var& f0t, const nn::Var& f1t, const GateOptions& options);
GateResult gate_forward(const GatingNet& net, const FlowField& f0t, const FlowField& f1t, const GateOptions& options);

struct CostModel {
  double base_flops = 0.0;
  std::vector<double> region_flops;

  void validate() const;
  double max_flops() const;
};

// base + sum_i p_dynamic(i) * region_cost(i).
double expected_flops(const GateMap& gate, const CostModel& cost);
// Realized cost for a hard mask.
double mask_flops(const BinaryMask& mask, const CostModel& cost);

}  // namespace ido::gating

namespace ido::nn {

// Gumbel-softmax over channel 0/1 of (2, G, G) logits. With straight_through
// the value is the hard one-hot (ties -> class 0) and the gradient is the soft one.
Var gumbel_softmax(const Var& logits, const Tensor& noise, double tau, bool straight_through, Tensor* soft_out = nullptr);

// Differentiable expected cost from a (2, G, G) class sample.
Var expected_flops(const Var& sample, const gating::CostModel& cost);

}  // namespace ido::nn
