#include <gtest/gtest.h>

#include <cmath>

#include "ido/autograd.hpp"
#include "ido/error.hpp"
#include "ido/nn.hpp"
#include "test_util.hpp"

using namespace ido;
using namespace ido::nn;
using testutil::grad_rel_error;
using testutil::random_tensor;

namespace {

Var rleaf(std::vector<int> shape, std::uint64_t seed, double lo = -1, double hi = 1) {
  return leaf(random_tensor(std::move(shape), seed, lo, hi), true);
}

// Random linear read-out keeps every output entry in the loss.
Var readout(const Var& x, std::uint64_t seed) { return weighted_sum(x, random_tensor(x->value.shape(), seed)); }

}  // namespace

TEST(Autograd, ElementwiseGradients) {
  auto a = rleaf({2, 3, 4}, 1), b = rleaf({2, 3, 4}, 2), m = rleaf({1, 3, 4}, 3);
  EXPECT_LT(grad_rel_error([&] { return readout(add(a, b), 9); }, {a, b}), 1e-8);
  EXPECT_LT(grad_rel_error([&] { return readout(sub(a, b), 9); }, {a, b}), 1e-8);
  EXPECT_LT(grad_rel_error([&] { return readout(mul(a, b), 9); }, {a, b}), 1e-8);
  EXPECT_LT(grad_rel_error([&] { return readout(mul(a, m), 9); }, {a, m}), 1e-8);
  EXPECT_LT(grad_rel_error([&] { return readout(affine(a, -1.5, 0.2), 9); }, {a}), 1e-8);
  EXPECT_LT(grad_rel_error([&] { return readout(leaky_relu(a), 9); }, {a}), 1e-8);
  EXPECT_LT(grad_rel_error([&] { return readout(sigmoid(a), 9); }, {a}), 1e-8);
  auto c = rleaf({1, 4, 4}, 4, 0.05, 0.95);
  EXPECT_LT(grad_rel_error([&] { return readout(clamp01(c), 9); }, {c}), 1e-8);
}

TEST(Autograd, ReductionGradients) {
  auto a = rleaf({3, 4, 5}, 5), b = rleaf({3, 4, 5}, 6);
  EXPECT_LT(grad_rel_error([&] { return sum(a); }, {a}), 1e-8);
  EXPECT_LT(grad_rel_error([&] { return mean(a); }, {a}), 1e-8);
  EXPECT_LT(grad_rel_error([&] { return mean_abs_diff(a, b); }, {a, b}), 1e-8);
  EXPECT_LT(grad_rel_error([&] { return readout(sum_channels(a), 9); }, {a}), 1e-8);
}

TEST(Autograd, ChannelOpGradients) {
  auto a = rleaf({2, 3, 3}, 7), b = rleaf({3, 3, 3}, 8);
  EXPECT_LT(grad_rel_error([&] { return readout(concat({a, b}), 9); }, {a, b}), 1e-8);
  EXPECT_LT(grad_rel_error([&] { return readout(slice(b, 1, 3), 9); }, {b}), 1e-8);
  EXPECT_LT(grad_rel_error([&] { return readout(linear_combine_channels(b, {0.2, -1.0, 3.0}), 9); }, {b}), 1e-8);
}

TEST(Autograd, ConvolutionGradients) {
  for (int stride : {1, 2}) {
    auto x = rleaf({3, 6, 6}, 10), w = rleaf({4, 3, 3, 3}, 11), bias = rleaf({4}, 12);
    EXPECT_LT(grad_rel_error([&] { return readout(conv2d(x, w, bias, stride, 1), 13); }, {x, w, bias}), 1e-7);
  }
  auto x = rleaf({2, 5, 5}, 14), w = rleaf({3, 2, 1, 1}, 15), bias = rleaf({3}, 16);
  EXPECT_LT(grad_rel_error([&] { return readout(conv2d(x, w, bias, 1, 0), 13); }, {x, w, bias}), 1e-7);
}

TEST(Autograd, ConvolutionMatchesDirectSum) {
  const Tensor x = random_tensor({2, 5, 4}, 17), w = random_tensor({3, 2, 3, 3}, 18), b = random_tensor({3}, 19);
  const Tensor y = conv2d(constant(x), constant(w), constant(b), 2, 1)->value;
  ASSERT_EQ(y.shape(), (std::vector<int>{3, 3, 2}));
  for (int o = 0; o < 3; ++o)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 2; ++j) {
        double acc = b[static_cast<std::size_t>(o)];
        for (int c = 0; c < 2; ++c)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int yy = 2 * i + ky - 1, xx = 2 * j + kx - 1;
              if (yy < 0 || yy >= 5 || xx < 0 || xx >= 4) continue;
              acc += w[static_cast<std::size_t>(((o * 2 + c) * 3 + ky) * 3 + kx)] * x.at(c, yy, xx);
            }
        EXPECT_NEAR(y.at(o, i, j), acc, 1e-12);
      }
}

TEST(Autograd, SpatialOpGradients) {
  auto a = rleaf({2, 4, 6}, 20);
  EXPECT_LT(grad_rel_error([&] { return readout(upsample2x(a), 21); }, {a}), 1e-8);
  EXPECT_LT(grad_rel_error([&] { return readout(adaptive_avg_pool(a, 3, 3), 21); }, {a}), 1e-8);
  EXPECT_LT(grad_rel_error([&] { return readout(adaptive_avg_pool(a, 5, 7), 21); }, {a}), 1e-8);
  EXPECT_LT(grad_rel_error([&] { return readout(crop(a, 1, 2, 2, 3), 21); }, {a}), 1e-8);
  EXPECT_LT(grad_rel_error([&] { return readout(pad_into(a, 7, 9, 2, 1), 21); }, {a}), 1e-8);
}

TEST(Autograd, UpsamplePreservesConstants) {
  const Tensor y = upsample2x(constant(Tensor({1, 3, 3}, 0.7)))->value;
  ASSERT_EQ(y.shape(), (std::vector<int>{1, 6, 6}));
  for (double v : y.values()) EXPECT_NEAR(v, 0.7, 1e-15);
}

TEST(Autograd, CropPadRoundTrip) {
  const Tensor x = random_tensor({2, 3, 4}, 22);
  const Tensor p = pad_into(constant(x), 8, 9, 2, 5)->value;
  EXPECT_EQ(testutil::max_abs_diff(crop(constant(p), 2, 5, 3, 4)->value, x), 0.0);
  double outside = 0.0;
  for (double v : p.values()) outside += std::abs(v);
  double inside = 0.0;
  for (double v : x.values()) inside += std::abs(v);
  EXPECT_NEAR(outside, inside, 1e-12);
  EXPECT_THROW(crop(constant(x), 2, 0, 3, 4), InvalidInput);
}

TEST(Autograd, SoftmaxGradientsAndNormalization) {
  auto a = rleaf({4, 3, 3}, 23, -3, 3);
  EXPECT_LT(grad_rel_error([&] { return readout(softmax_channels(a), 24); }, {a}), 1e-7);
  const Tensor s = softmax_channels(a)->value;
  for (int i = 0; i < 9; ++i) {
    double t = 0.0;
    for (int c = 0; c < 4; ++c) t += s[static_cast<std::size_t>(c * 9 + i)];
    EXPECT_NEAR(t, 1.0, 1e-12);
  }
}

TEST(Autograd, MaskedSoftmax) {
  auto a = rleaf({3, 2, 2}, 25, -2, 2);
  Tensor mask({3, 2, 2});
  // pixel 0: channels 0,1; pixel 1: channel 2 only; pixel 2: none; pixel 3: all.
  mask.at(0, 0, 0) = mask.at(1, 0, 0) = 1;
  mask.at(2, 0, 1) = 1;
  mask.at(0, 1, 1) = mask.at(1, 1, 1) = mask.at(2, 1, 1) = 1;
  const Tensor s = masked_softmax_channels(a, mask)->value;
  EXPECT_NEAR(s.at(0, 0, 0) + s.at(1, 0, 0), 1.0, 1e-12);
  EXPECT_EQ(s.at(2, 0, 0), 0.0);
  EXPECT_EQ(s.at(2, 0, 1), 1.0);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(s.at(c, 1, 0), 0.0);
  EXPECT_LT(grad_rel_error([&] { return readout(masked_softmax_channels(a, mask), 26); }, {a}), 1e-7);
}

TEST(Autograd, WindowAttention) {
  auto q = rleaf({4, 4, 4}, 27), k = rleaf({4, 4, 4}, 28), v = rleaf({4, 4, 4}, 29);
  EXPECT_LT(grad_rel_error([&] { return readout(window_attention(q, k, v, 2, 2), 30); }, {q, k, v}), 1e-7);
  // Equal keys make attention a uniform average of values in each window.
  const Tensor vv = random_tensor({2, 2, 2}, 31);
  const Tensor out = window_attention(constant(random_tensor({2, 2, 2}, 32)), constant(Tensor({2, 2, 2}, 0.3)),
                                      constant(vv), 1, 2)->value;
  for (int c = 0; c < 2; ++c) {
    double m = 0.0;
    for (double x : vv.plane(c)) m += x / 4.0;
    for (double x : out.plane(c)) EXPECT_NEAR(x, m, 1e-12);
  }
  EXPECT_THROW(window_attention(q, k, v, 3, 2), InvalidInput);
}

TEST(Autograd, GraphIsDroppedForConstants) {
  const Var a = constant(Tensor({1, 2, 2}, 1.0));
  const Var y = add(a, a);
  EXPECT_FALSE(y->requires_grad);
  EXPECT_TRUE(y->parents.empty());
}

TEST(Autograd, GradientsAccumulateAcrossBackwardCalls) {
  auto a = rleaf({1, 2, 2}, 33);
  backward(sum(a));
  backward(sum(a));
  for (double g : a->grad.values()) EXPECT_DOUBLE_EQ(g, 2.0);
}

TEST(Nn, ParamSetFreezing) {
  ParamSet p;
  std::mt19937_64 rng(1);
  Conv2d conv(p, "c", 2, 3, 3, 1, rng);
  EXPECT_EQ(p.scalar_count(), 3u * 2 * 9 + 3);
  EXPECT_TRUE(p.contains("c.weight"));
  p.set_trainable(false);
  const Var y = conv(leaf(random_tensor({2, 4, 4}, 2), false));
  EXPECT_FALSE(y->requires_grad);
  EXPECT_THROW(p.add("c.weight", Tensor({1})), InvalidInput);
}

TEST(Nn, ConvCostFollowsTwoFlopsPerMac) {
  ParamSet p;
  std::mt19937_64 rng(1);
  Conv2d conv(p, "c", 2, 4, 3, 1, rng);
  EXPECT_DOUBLE_EQ(conv.cost(8, 8).flops(), 9216.0);
  Conv2d down(p, "d", 2, 4, 3, 2, rng);
  EXPECT_DOUBLE_EQ(down.cost(8, 8).flops(), 9216.0 / 4);
}

TEST(Nn, AdamMinimizesQuadratic) {
  ParamSet p;
  const Var x = p.add("x", Tensor({3}, std::vector<double>{2.0, -1.0, 0.5}));
  Adam opt;
  const Tensor target({3}, std::vector<double>{0.3, 0.1, -0.2});
  for (int i = 0; i < 2000; ++i) {
    backward(mean_abs_diff(x, constant(target)));
    opt.step(p, 1e-2);
  }
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(x->value[static_cast<std::size_t>(i)], target[static_cast<std::size_t>(i)], 2e-2);
  EXPECT_EQ(opt.steps(), 2000);
}
