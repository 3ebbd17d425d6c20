#include "ido/gating.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "ido/error.hpp"

namespace ido::gating {

std::vector<Region> divide_regions(int height, int width) { return regions_for(Layout::Overlapping, height, width); }

int region_grid(Layout layout) { return layout == Layout::Overlapping ? 3 : 2; }

std::vector<Region> regions_for(Layout layout, int height, int width) {
  require(height > 0 && width > 0 && height % 4 == 0 && width % 4 == 0,
          "region division requires H and W divisible by 4, got " + std::to_string(height) + "x" +
              std::to_string(width));
  const int g = region_grid(layout);
  const int sy = layout == Layout::Overlapping ? height / 4 : height / 2;
  const int sx = layout == Layout::Overlapping ? width / 4 : width / 2;
  std::vector<Region> out;
  for (int r = 0; r < g; ++r)
    for (int c = 0; c < g; ++c) out.push_back({r * g + c, r * sy, c * sx, height / 2, width / 2});
  return out;
}

int BinaryMask::count_dynamic() const {
  return static_cast<int>(std::count(dynamic.begin(), dynamic.end(), true));
}

BinaryMask binarize(const GateMap& gate) {
  BinaryMask m;
  for (int i = 0; i < gate.regions(); ++i) m.dynamic.push_back(gate.dynamic_prob(i) > 0.5);
  return m;
}

std::array<double, 2> gumbel_softmax(const std::array<double, 2>& logits, double tau,
                                     const std::array<double, 2>& noise) {
  require(tau > 0.0, "gumbel_softmax: temperature must be positive");
  const double a = (logits[0] + noise[0]) / tau;
  const double b = (logits[1] + noise[1]) / tau;
  const double m = std::max(a, b);
  const double ea = std::exp(a - m), eb = std::exp(b - m);
  return {ea / (ea + eb), eb / (ea + eb)};
}

Tensor gumbel_noise(int grid, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Tensor n({2, grid, grid});
  for (double& v : n.values()) {
    double u = uni(rng);
    while (u <= 0.0) u = uni(rng);
    v = -std::log(-std::log(u));
  }
  return n;
}

GatingNet::GatingNet(const GatingConfig& config, std::uint64_t seed, int grid) : config_(config), grid_(grid) {
  require(config.base_channels > 0, "gating net: base_channels must be positive");
  require(config.temperature > 0.0, "gating net: temperature must be positive");
  std::mt19937_64 rng(seed);
  const int c = config.base_channels;
  blocks_[0] = nn::Conv2d(params_, "block0", 4, c, 3, 2, rng);
  blocks_[1] = nn::Conv2d(params_, "block1", c, 2 * c, 3, 2, rng);
  blocks_[2] = nn::Conv2d(params_, "block2", 2 * c, 2 * c, 3, 2, rng);
  classify_ = nn::Conv2d(params_, "classify", 2 * c, 2, 1, 1, rng, 0.5);
}

nn::Var GatingNet::logits(const nn::Var& f0t, const nn::Var& f1t) const {
  const Tensor& a = f0t->value;
  require(a.ndim() == 3 && a.channels() == 2 && f1t->value.same_shape(a), "gating: flows must be matching (2,H,W)");
  require(a.height() % 8 == 0 && a.width() % 8 == 0, "gating: flow size must be divisible by 8");
  nn::Var x = nn::concat({f0t, f1t});
  for (const auto& b : blocks_) x = nn::leaky_relu(b(x));
  return classify_(nn::adaptive_avg_pool(x, grid_, grid_));
}

std::vector<metrics::LayerCost> GatingNet::cost(int height, int width) const {
  std::vector<metrics::LayerCost> out;
  int h = height, w = width;
  for (const auto& b : blocks_) {
    out.push_back(b.cost(h, w));
    h = b.out_dim(h);
    w = b.out_dim(w);
  }
  out.push_back(classify_.cost(grid_, grid_));
  return out;
}

GateResult gate_forward(const GatingNet& net, const nn::Var& f0t, const nn::Var& f1t, const GateOptions& options) {
  require(options.temperature > 0.0, "gate_forward: temperature must be positive");
  GateResult r;
  r.logits = net.logits(f0t, f1t);
  const int g = net.grid();
  r.map.probs = nn::softmax_channels(nn::constant(r.logits->value))->value;
  if (options.mode == GateMode::Eval) {
    r.mask = binarize(r.map);
    Tensor onehot({2, g, g});
    for (int i = 0; i < g * g; ++i) {
      const bool dyn = r.mask[i];
      onehot[static_cast<std::size_t>(i)] = dyn ? 0.0 : 1.0;
      onehot[static_cast<std::size_t>(g * g + i)] = dyn ? 1.0 : 0.0;
    }
    r.soft_sample = r.map.probs;
    r.sample = nn::constant(std::move(onehot));
    return r;
  }
  const Tensor noise = options.noise ? *options.noise : gumbel_noise(g, options.seed);
  require(noise.same_shape(r.logits->value), "gate_forward: noise shape mismatch");
  r.sample = nn::gumbel_softmax(r.logits, noise, options.temperature, options.straight_through, &r.soft_sample);
  for (int i = 0; i < g * g; ++i) {
    const double s = r.soft_sample[static_cast<std::size_t>(i)];
    const double d = r.soft_sample[static_cast<std::size_t>(g * g + i)];
    r.mask.dynamic.push_back(d > s);
  }
  return r;
}

GateResult gate_forward(const GatingNet& net, const FlowField& f0t, const FlowField& f1t, const GateOptions& options) {
  return gate_forward(net, nn::constant(f0t.tensor()), nn::constant(f1t.tensor()), options);
}

void CostModel::validate() const {
  require(base_flops >= 0.0, "cost model: negative base cost");
  for (double c : region_flops) require(c >= 0.0, "cost model: negative region cost");
}

double CostModel::max_flops() const {
  return std::accumulate(region_flops.begin(), region_flops.end(), base_flops);
}

double expected_flops(const GateMap& gate, const CostModel& cost) {
  cost.validate();
  require(static_cast<int>(cost.region_flops.size()) == gate.regions(), "expected_flops: region count mismatch");
  double f = cost.base_flops;
  for (int i = 0; i < gate.regions(); ++i) f += gate.dynamic_prob(i) * cost.region_flops[static_cast<std::size_t>(i)];
  return f;
}

double mask_flops(const BinaryMask& mask, const CostModel& cost) {
  require(static_cast<int>(cost.region_flops.size()) == mask.size(), "mask_flops: region count mismatch");
  double f = cost.base_flops;
  for (int i = 0; i < mask.size(); ++i)
    if (mask[i]) f += cost.region_flops[static_cast<std::size_t>(i)];
  return f;
}

}  // namespace ido::gating

namespace ido::nn {

Var gumbel_softmax(const Var& logits, const Tensor& noise, double tau, bool straight_through, Tensor* soft_out) {
  require(tau > 0.0, "gumbel_softmax: temperature must be positive");
  const Tensor& l = logits->value;
  require(l.ndim() == 3 && l.channels() == 2 && noise.same_shape(l), "gumbel_softmax: expected (2,G,G) logits and noise");
  const std::size_t n = static_cast<std::size_t>(l.height()) * l.width();
  Tensor soft(l.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = gating::gumbel_softmax({l[i], l[n + i]}, tau, {noise[i], noise[n + i]});
    soft[i] = s[0];
    soft[n + i] = s[1];
  }
  if (soft_out) *soft_out = soft;
  Tensor value = soft;
  if (straight_through)
    for (std::size_t i = 0; i < n; ++i) {
      const bool dyn = soft[n + i] > soft[i];
      value[i] = dyn ? 0.0 : 1.0;
      value[n + i] = dyn ? 1.0 : 0.0;
    }
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = logits->requires_grad;
  if (node->requires_grad) {
    node->parents = {logits};
    node->backward_fn = [soft, n, tau](Node& self) {
      Tensor& g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) {
        const double s0 = soft[i], s1 = soft[n + i];
        const double g0 = self.grad[i], g1 = self.grad[n + i];
        const double dot = g0 * s0 + g1 * s1;
        g[i] += s0 * (g0 - dot) / tau;
        g[n + i] += s1 * (g1 - dot) / tau;
      }
    };
  }
  return node;
}

Var expected_flops(const Var& sample, const gating::CostModel& cost) {
  cost.validate();
  const Tensor& s = sample->value;
  const std::size_t n = static_cast<std::size_t>(s.height()) * s.width();
  require(cost.region_flops.size() == n, "expected_flops: region count mismatch");
  Tensor w(s.shape());
  for (std::size_t i = 0; i < n; ++i) w[n + i] = cost.region_flops[i];
  return affine(weighted_sum(sample, w), 1.0, cost.base_flops);
}

}  // namespace ido::nn
