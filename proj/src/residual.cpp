#include "ido/residual.hpp"

#include <random>
#include <string>

#include "ido/error.hpp"
#include "ido/splines_warp.hpp"

namespace ido::residual {

RegionBundle RegionBundle::crop(const ResidualInputs& in, const gating::Region& r) {
  const int h = in.i0->value.height(), w = in.i0->value.width();
  for (const nn::Var* v : {&in.i0, &in.i1, &in.v0t, &in.v1t, &in.i0_warp, &in.i1_warp, &in.f0t, &in.f1t})
    require((*v)->value.ndim() == 3 && (*v)->value.height() == h && (*v)->value.width() == w,
            "region bundle: input spatial sizes differ");
  require(in.i1->value.same_shape(in.i0->value) && in.i0_warp->value.same_shape(in.i0->value) &&
              in.i1_warp->value.same_shape(in.i0->value),
          "region bundle: frame shapes differ");
  require(in.f0t->value.channels() == 2 && in.f1t->value.channels() == 2, "region bundle: flows must have 2 channels");
  const nn::Var full = nn::concat({in.i0, in.i1, in.v0t, in.v1t, in.i0_warp, in.i1_warp, in.f0t, in.f1t});
  return {r, nn::crop(full, r.y0, r.x0, r.h, r.w)};
}

RegionNet::RegionNet(int in_channels, int base_channels, std::uint64_t seed) : in_(in_channels) {
  std::mt19937_64 rng(seed);
  const int c = base_channels;
  a_ = nn::Conv2d(params_, "a", in_channels, c, 3, 1, rng);
  b_ = nn::Conv2d(params_, "b", c, c, 3, 1, rng);
  down_ = nn::Conv2d(params_, "down", c, 2 * c, 3, 2, rng);
  mid_ = nn::Conv2d(params_, "mid", 2 * c, 2 * c, 3, 1, rng);
  up_ = nn::Conv2d(params_, "up", 3 * c, c, 3, 1, rng);
  head_ = nn::Conv2d(params_, "head", c, 4, 3, 1, rng, 0.1);
}

std::pair<nn::Var, nn::Var> RegionNet::operator()(const nn::Var& stacked) const {
  require(stacked->value.channels() == in_, "region net: expected " + std::to_string(in_) + " input channels");
  require(stacked->value.height() % 2 == 0 && stacked->value.width() % 2 == 0, "region net: crop size must be even");
  const nn::Var e0 = nn::leaky_relu(b_(nn::leaky_relu(a_(stacked))));
  const nn::Var e1 = nn::leaky_relu(mid_(nn::leaky_relu(down_(e0))));
  const nn::Var d0 = nn::leaky_relu(up_(nn::concat({nn::upsample2x(e1), e0})));
  const nn::Var out = head_(d0);
  return {nn::slice(out, 0, 2), nn::slice(out, 2, 4)};
}

std::vector<metrics::LayerCost> RegionNet::cost(int h, int w) const {
  return {a_.cost(h, w), b_.cost(h, w), down_.cost(h, w), mid_.cost(h / 2, w / 2), up_.cost(h, w), head_.cost(h, w)};
}

AttentionNet::AttentionNet(int regions, int base_channels, std::uint64_t seed) : regions_(regions) {
  std::mt19937_64 rng(seed);
  const int c = base_channels;
  a_ = nn::Conv2d(params_, "a", 4 * regions, c, 3, 1, rng);
  down_ = nn::Conv2d(params_, "down", c, 2 * c, 3, 2, rng);
  mid_ = nn::Conv2d(params_, "mid", 2 * c, 2 * c, 3, 1, rng);
  up_ = nn::Conv2d(params_, "up", 3 * c, c, 3, 1, rng);
  head_ = nn::Conv2d(params_, "head", c, regions, 3, 1, rng, 0.1);
}

nn::Var AttentionNet::operator()(const nn::Var& stacked) const {
  require(stacked->value.channels() == 4 * regions_, "attention net: channel count mismatch");
  const nn::Var e0 = nn::leaky_relu(a_(stacked));
  const nn::Var e1 = nn::leaky_relu(mid_(nn::leaky_relu(down_(e0))));
  const nn::Var d0 = nn::leaky_relu(up_(nn::concat({nn::upsample2x(e1), e0})));
  return head_(d0);
}

std::vector<metrics::LayerCost> AttentionNet::cost(int h, int w) const {
  return {a_.cost(h, w), down_.cost(h, w), mid_.cost(h / 2, w / 2), up_.cost(h, w), head_.cost(h, w)};
}

ResidualModule::ResidualModule(const ResidualConfig& config, int image_channels, int voxel_bins, std::uint64_t seed)
    : config_(config),
      region_net_(4 * image_channels + 2 * voxel_bins + 4, config.base_channels, seed),
      attention_(gating::region_grid(config.layout) * gating::region_grid(config.layout), config.attention_channels,
                 seed + 1) {
  require(config.base_channels > 0 && config.attention_channels > 0, "residual: channel counts must be positive");
}

int ResidualModule::regions() const {
  const int g = gating::region_grid(config_.layout);
  return g * g;
}

std::pair<nn::Var, nn::Var> ResidualModule::refine_region(const RegionBundle& bundle) const {
  require(bundle.stacked->value.height() == bundle.region.h && bundle.stacked->value.width() == bundle.region.w,
          "refine_region: crop does not match region footprint");
  return region_net_(bundle.stacked);
}

RefinedFlows ResidualModule::refine(const ResidualInputs& in, const gating::BinaryMask& mask) const {
  const int h = in.i0->value.height(), w = in.i0->value.width();
  const auto regions = gating::regions_for(config_.layout, h, w);
  require(mask.size() == static_cast<int>(regions.size()), "residual: mask size does not match region layout");
  std::vector<std::optional<nn::Var>> padded(regions.size());
  bool any = false;
  for (const auto& r : regions) {
    if (!mask[r.index]) continue;
    any = true;
    auto [f0, f1] = refine_region(RegionBundle::crop(in, r));
    padded[static_cast<std::size_t>(r.index)] = nn::pad_into(nn::concat({f0, f1}), h, w, r.y0, r.x0);
  }
  if (!any) {
    const nn::Var zero = nn::constant(Tensor({2, h, w}));
    return {zero, zero};
  }
  nn::Var logits;
  if (config_.layout == gating::Layout::Overlapping) {
    std::vector<nn::Var> slots;
    for (std::size_t i = 0; i < padded.size(); ++i)
      slots.push_back(padded[i] ? *padded[i] : nn::constant(Tensor({4, h, w})));
    logits = attention_(nn::concat(slots));
  } else {
    // Disjoint windows never overlap: every covered pixel has one contributor.
    logits = nn::constant(Tensor({static_cast<int>(regions.size()), h, w}));
  }
  return blend_and_montage(padded, mask, regions, logits);
}

double ResidualModule::region_flops(int height, int width) const {
  return metrics::total_flops(region_net_.cost(height / 2, width / 2));
}

double ResidualModule::attention_flops(int height, int width) const {
  if (config_.layout != gating::Layout::Overlapping) return 0.0;
  return metrics::total_flops(attention_.cost(height, width));
}

std::vector<metrics::LayerCost> ResidualModule::cost(int height, int width, const gating::BinaryMask& mask) const {
  std::vector<metrics::LayerCost> out;
  const int n = mask.count_dynamic();
  if (n == 0) return out;
  for (int i = 0; i < n; ++i)
    for (auto& l : region_net_.cost(height / 2, width / 2)) out.push_back(l);
  if (config_.layout == gating::Layout::Overlapping)
    for (auto& l : attention_.cost(height, width)) out.push_back(l);
  return out;
}

RefinedFlows blend_and_montage(const std::vector<std::optional<nn::Var>>& padded, const gating::BinaryMask& mask,
                               const std::vector<gating::Region>& regions, const nn::Var& logits) {
  const std::size_t n = regions.size();
  require(padded.size() == n && mask.size() == static_cast<int>(n), "blend_and_montage: region count mismatch");
  require(logits->value.ndim() == 3 && logits->value.channels() == static_cast<int>(n),
          "blend_and_montage: need one logit map per region");
  const int h = logits->value.height(), w = logits->value.width();
  Tensor admissible({static_cast<int>(n), h, w});
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    require(padded[i].has_value() == mask[static_cast<int>(i)],
            "blend_and_montage: region " + std::to_string(i) + " flow presence disagrees with mask");
    if (!padded[i]) continue;
    const Tensor& f = (*padded[i])->value;
    require(f.ndim() == 3 && f.channels() == 4 && f.height() == h && f.width() == w,
            "blend_and_montage: padded flow must be (4,H,W)");
    any = true;
    const auto& r = regions[i];
    for (int y = r.y0; y < r.y0 + r.h; ++y)
      for (int x = r.x0; x < r.x0 + r.w; ++x) admissible.at(static_cast<int>(i), y, x) = 1.0;
  }
  if (!any) {
    const nn::Var zero = nn::constant(Tensor({2, h, w}));
    return {zero, zero};
  }
  const nn::Var weights = nn::masked_softmax_channels(logits, admissible);
  nn::Var acc;
  for (std::size_t i = 0; i < n; ++i) {
    if (!padded[i]) continue;
    const nn::Var term = nn::mul(*padded[i], nn::slice(weights, static_cast<int>(i), static_cast<int>(i) + 1));
    acc = acc ? nn::add(acc, term) : term;
  }
  return {nn::slice(acc, 0, 2), nn::slice(acc, 2, 4)};
}

RefinedFrames refine_warp(const nn::Var& i0_warp, const nn::Var& i1_warp, const RefinedFlows& refined) {
  return {nn::backward_warp(i0_warp, refined.f0t), nn::backward_warp(i1_warp, refined.f1t)};
}

}  // namespace ido::residual
