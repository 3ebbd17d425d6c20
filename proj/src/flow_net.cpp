#include "ido/flow_net.hpp"

#include <random>
#include <string>

#include "ido/error.hpp"

namespace ido {

void FlowNetConfig::validate() const {
  require(base_channels > 0, "flow net: base_channels must be positive");
  require(depth >= 2, "flow net: depth must be at least 2");
  require(knots >= 2, "flow net: at least two spline control points required");
  require(image_channels >= 1 && voxel_bins >= 2, "flow net: bad input channel configuration");
}

FlowNet::FlowNet(const FlowNetConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const int in = 2 * config_.image_channels + config_.voxel_bins;
  std::vector<int> ch;
  for (int i = 0; i < config_.depth; ++i) ch.push_back(config_.base_channels << i);
  for (int i = 0; i < config_.depth; ++i) {
    const std::string p = "enc" + std::to_string(i);
    if (i == 0)
      enc_a_.emplace_back(params_, p + ".a", in, ch[0], 3, 1, rng);
    else
      enc_a_.emplace_back(params_, p + ".down", ch[i - 1], ch[i], 3, 2, rng);
    enc_b_.emplace_back(params_, p + ".b", ch[i], ch[i], 3, 1, rng);
  }
  for (int i = config_.depth - 2; i >= 0; --i)
    dec_.emplace_back(params_, "dec" + std::to_string(i), ch[i + 1] + ch[i], ch[i], 3, 1, rng);
  const int out = 2 * (config_.knots - 1);
  head01_ = nn::Conv2d(params_, "head01", ch[0], out, 3, 1, rng, 0.1);
  head10_ = nn::Conv2d(params_, "head10", ch[0], out, 3, 1, rng, 0.1);
}

void FlowNet::check_input_size(int height, int width) const {
  const int div = 1 << config_.depth;
  require(height > 0 && width > 0 && height % div == 0 && width % div == 0,
          "flow net: resolution " + std::to_string(height) + "x" + std::to_string(width) + " not divisible by " +
              std::to_string(div));
}

FlowNet::Splines FlowNet::forward(const nn::Var& i0, const nn::Var& i1, const nn::Var& voxels) const {
  const int h = i0->value.height(), w = i0->value.width();
  check_input_size(h, w);
  require(i0->value.channels() == config_.image_channels && i1->value.same_shape(i0->value),
          "flow net: frame shape mismatch");
  require(voxels->value.channels() == config_.voxel_bins && voxels->value.height() == h &&
              voxels->value.width() == w,
          "flow net: voxel grid shape mismatch");

  std::vector<nn::Var> skips;
  nn::Var x = nn::concat({i0, i1, voxels});
  for (int i = 0; i < config_.depth; ++i) {
    x = nn::leaky_relu(enc_a_[static_cast<std::size_t>(i)](x));
    x = nn::leaky_relu(enc_b_[static_cast<std::size_t>(i)](x));
    skips.push_back(x);
  }
  for (int i = config_.depth - 2, d = 0; i >= 0; --i, ++d)
    x = nn::leaky_relu(dec_[static_cast<std::size_t>(d)](nn::concat({nn::upsample2x(x), skips[static_cast<std::size_t>(i)]})));

  const int k1 = config_.knots - 1;
  const nn::Var zero = nn::constant(Tensor({1, h, w}));
  auto split = [&](const nn::Var& head) {
    return std::pair{nn::concat({zero, nn::slice(head, 0, k1)}), nn::concat({zero, nn::slice(head, k1, 2 * k1)})};
  };
  auto [cx01, cy01] = split(head01_(x));
  auto [cx10, cy10] = split(head10_(x));
  return {cx01, cy01, cx10, cy10};
}

std::pair<warp::MotionSpline, warp::MotionSpline> FlowNet::estimate_splines(const Image& i0, const Image& i1,
                                                                            const events::VoxelGrid& voxels) const {
  const auto s = forward(nn::constant(i0.tensor()), nn::constant(i1.tensor()), nn::constant(voxels.data));
  return {warp::MotionSpline{s.cx01->value, s.cy01->value}, warp::MotionSpline{s.cx10->value, s.cy10->value}};
}

std::vector<metrics::LayerCost> FlowNet::cost(int height, int width) const {
  std::vector<metrics::LayerCost> out;
  std::vector<std::pair<int, int>> sizes;
  int h = height, w = width;
  for (int i = 0; i < config_.depth; ++i) {
    out.push_back(enc_a_[static_cast<std::size_t>(i)].cost(h, w));
    h = enc_a_[static_cast<std::size_t>(i)].out_dim(h);
    w = enc_a_[static_cast<std::size_t>(i)].out_dim(w);
    out.push_back(enc_b_[static_cast<std::size_t>(i)].cost(h, w));
    sizes.emplace_back(h, w);
  }
  for (int i = config_.depth - 2, d = 0; i >= 0; --i, ++d)
    out.push_back(dec_[static_cast<std::size_t>(d)].cost(sizes[static_cast<std::size_t>(i)].first,
                                                         sizes[static_cast<std::size_t>(i)].second));
  out.push_back(head01_.cost(height, width));
  out.push_back(head10_.cost(height, width));
  return out;
}

BoundaryWarp warp_boundaries(const Image& i0, const Image& i1, const warp::MotionSpline& spline01,
                             const warp::MotionSpline& spline10, double t) {
  require(t >= 0.0 && t <= 1.0, "warp_boundaries: t must lie in [0, 1]");
  require(i0.same_shape(i1), "warp_boundaries: frame shape mismatch");
  BoundaryWarp out;
  out.f0t = warp::sample_flow(spline01, t);
  out.f1t = warp::sample_flow(spline10, 1.0 - t);
  const Tensor z0 = warp::photometric_importance(i0, i1, warp::sample_flow(spline01, 1.0));
  const Tensor z1 = warp::photometric_importance(i1, i0, warp::sample_flow(spline10, 1.0));
  out.i0_warp = warp::forward_warp_softmax(i0, out.f0t, z0);
  out.i1_warp = warp::forward_warp_softmax(i1, out.f1t, z1);
  return out;
}

}  // namespace ido
