#include "ido/fusion.hpp"

#include <random>
#include <string>

#include "ido/error.hpp"

namespace ido::fusion {

FusionNet::FusionNet(const FusionConfig& config, int image_channels, int voxel_bins, std::uint64_t seed)
    : config_(config), image_channels_(image_channels), voxel_bins_(voxel_bins) {
  require(config.base_channels > 0 && config.heads > 0 && config.window > 0, "fusion: bad configuration");
  const int c = config.base_channels;
  require((2 * c) % config.heads == 0, "fusion: attention width must be divisible by heads");
  std::mt19937_64 rng(seed);
  const int in = 4 * image_channels + 2 * voxel_bins;
  in_ = nn::Conv2d(params_, "in", in, c, 3, 1, rng);
  in_b_ = nn::Conv2d(params_, "in_b", c, c, 3, 1, rng);
  down_ = nn::Conv2d(params_, "down", c, 2 * c, 3, 2, rng);
  qkv_ = nn::Conv2d(params_, "attn.qkv", 2 * c, 6 * c, 1, 1, rng);
  proj_ = nn::Conv2d(params_, "attn.proj", 2 * c, 2 * c, 1, 1, rng, 0.5);
  mid_ = nn::Conv2d(params_, "mid", 2 * c, 2 * c, 3, 1, rng);
  dec_ = nn::Conv2d(params_, "dec", 3 * c, c, 3, 1, rng);
  head_ = nn::Conv2d(params_, "head", c, image_channels + 4, 3, 1, rng, 0.1);
}

void FusionNet::check_input_size(int height, int width) const {
  const int div = 2 * config_.window;
  require(height > 0 && width > 0 && height % div == 0 && width % div == 0,
          "fusion: resolution must be divisible by " + std::to_string(div));
}

nn::Var FusionNet::forward(const FusionInputs& in) const {
  const Tensor& ref = in.i0->value;
  check_input_size(ref.height(), ref.width());
  require(ref.channels() == image_channels_, "fusion: frame channel count mismatch");
  for (const nn::Var* v : {&in.i1, &in.i0t_refine, &in.i1t_refine})
    require((*v)->value.same_shape(ref), "fusion: frame shapes differ");
  for (const nn::Var* v : {&in.v0t, &in.v1t})
    require((*v)->value.ndim() == 3 && (*v)->value.channels() == voxel_bins_ && (*v)->value.height() == ref.height() &&
                (*v)->value.width() == ref.width(),
            "fusion: voxel grid shape mismatch");

  const int c = config_.base_channels;
  const nn::Var x = nn::concat({in.i0, in.i1, in.v0t, in.v1t, in.i0t_refine, in.i1t_refine});
  const nn::Var e0 = nn::leaky_relu(in_b_(nn::leaky_relu(in_(x))));
  nn::Var e1 = nn::leaky_relu(down_(e0));
  const nn::Var qkv = qkv_(e1);
  const nn::Var attn = nn::window_attention(nn::slice(qkv, 0, 2 * c), nn::slice(qkv, 2 * c, 4 * c),
                                            nn::slice(qkv, 4 * c, 6 * c), config_.heads, config_.window);
  e1 = nn::add(e1, proj_(attn));
  e1 = nn::leaky_relu(mid_(e1));
  const nn::Var d0 = nn::leaky_relu(dec_(nn::concat({nn::upsample2x(e1), e0})));
  const nn::Var head = head_(d0);

  const int ic = image_channels_;
  const nn::Var weights = nn::softmax_channels(nn::slice(head, ic, ic + 4));
  const nn::Var* candidates[4] = {&in.i0, &in.i1, &in.i0t_refine, &in.i1t_refine};
  nn::Var blend;
  for (int k = 0; k < 4; ++k) {
    const nn::Var term = nn::mul(*candidates[k], nn::slice(weights, k, k + 1));
    blend = blend ? nn::add(blend, term) : term;
  }
  return nn::clamp01(nn::add(blend, nn::slice(head, 0, ic)));
}

Image FusionNet::fuse(const Image& i0, const Image& i1, const events::VoxelGrid& v0t, const events::VoxelGrid& v1t,
                      const Image& i0t_refine, const Image& i1t_refine) const {
  FusionInputs in{nn::constant(i0.tensor()),         nn::constant(i1.tensor()),
                  nn::constant(v0t.data),            nn::constant(v1t.data),
                  nn::constant(i0t_refine.tensor()), nn::constant(i1t_refine.tensor())};
  return Image(forward(in)->value);
}

std::vector<metrics::LayerCost> FusionNet::cost(int height, int width) const {
  const int h2 = height / 2, w2 = width / 2;
  const int c = config_.base_channels;
  return {in_.cost(height, width),
          in_b_.cost(height, width),
          down_.cost(height, width),
          qkv_.cost(h2, w2),
          {"fusion.attn.matmul", metrics::window_attention_macs(2 * c, h2, w2, config_.window)},
          proj_.cost(h2, w2),
          mid_.cost(h2, w2),
          dec_.cost(height, width),
          head_.cost(height, width)};
}

}  // namespace ido::fusion
