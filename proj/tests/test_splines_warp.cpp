#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numeric>

#include "ido/error.hpp"
#include "ido/splines_warp.hpp"
#include "test_util.hpp"

using namespace ido;
using namespace ido::warp;

namespace {

MotionSpline random_spline(int k, int h, int w, std::uint64_t seed) {
  MotionSpline s{testutil::random_tensor({k, h, w}, seed, -3, 3), testutil::random_tensor({k, h, w}, seed + 1, -3, 3)};
  for (auto* t : {&s.cx, &s.cy})
    for (double& v : t->plane(0)) v = 0.0;
  return s;
}

FlowField constant_flow(int h, int w, double u, double v) {
  FlowField f(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      f.u(y, x) = u;
      f.v(y, x) = v;
    }
  return f;
}

}  // namespace

TEST(Spline, ReproducesControlPointsAtKnots) {
  for (int k : {2, 3, 4, 6}) {
    const MotionSpline s = random_spline(k, 5, 7, 10 + k);
    for (int j = 0; j < k; ++j) {
      const FlowField f = sample_flow(s, static_cast<double>(j) / (k - 1));
      for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 7; ++x) {
          EXPECT_NEAR(f.u(y, x), s.cx.at(j, y, x), 1e-12);
          EXPECT_NEAR(f.v(y, x), s.cy.at(j, y, x), 1e-12);
        }
    }
  }
}

TEST(Spline, ZeroAtOrigin) {
  const FlowField f = sample_flow(random_spline(4, 6, 6, 3), 0.0);
  for (double v : f.tensor().values()) EXPECT_EQ(v, 0.0);
}

TEST(Spline, CollinearControlPointsGiveLinearMotion) {
  const int k = 5;
  MotionSpline s{Tensor({k, 2, 3}), Tensor({k, 2, 3})};
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < 6; ++i) {
      s.cx.plane(j)[static_cast<std::size_t>(i)] = j * (0.7 + i);
      s.cy.plane(j)[static_cast<std::size_t>(i)] = -j * 0.3 * i;
    }
  for (double t = 0.0; t <= 1.0; t += 0.05) {
    const FlowField f = sample_flow(s, t);
    for (int i = 0; i < 6; ++i) {
      EXPECT_NEAR(f.tensor().plane(0)[static_cast<std::size_t>(i)], t * (k - 1) * (0.7 + i), 1e-9);
      EXPECT_NEAR(f.tensor().plane(1)[static_cast<std::size_t>(i)], -t * (k - 1) * 0.3 * i, 1e-9);
    }
  }
}

TEST(Spline, WeightsFormPartitionOfUnity) {
  for (int k : {2, 4, 7})
    for (double t = 0.0; t <= 1.0; t += 0.01) {
      const auto w = catmull_rom_weights(k, t);
      EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
    }
}

TEST(Spline, RejectsInvalidInput) {
  EXPECT_THROW(catmull_rom_weights(1, 0.5), InvalidInput);
  EXPECT_THROW(catmull_rom_weights(4, 1.5), InvalidInput);
  EXPECT_THROW(sample_flow(random_spline(4, 2, 2, 1), -0.1), InvalidInput);
  MotionSpline bad = random_spline(4, 2, 2, 1);
  bad.cx.at(0, 0, 0) = 1.0;
  EXPECT_THROW(bad.validate(), InvalidInput);
}

TEST(Spline, SampleSplineGradient) {
  const auto cx = nn::leaf(testutil::random_tensor({4, 3, 3}, 5), true);
  const auto cy = nn::leaf(testutil::random_tensor({4, 3, 3}, 6), true);
  const Tensor w = testutil::random_tensor({2, 3, 3}, 7);
  auto loss = [&] { return nn::weighted_sum(nn::sample_spline(cx, cy, 0.37), w); };
  EXPECT_LT(testutil::grad_rel_error(loss, {cx, cy}), 1e-6);
}

TEST(ForwardWarp, ZeroFlowIsIdentity) {
  const Image img = testutil::random_image(9, 11, 20, 3);
  const Tensor z = testutil::random_tensor({1, 9, 11}, 21);
  const Image out = forward_warp_softmax(img, FlowField(9, 11), z);
  EXPECT_EQ(testutil::max_abs_diff(out.tensor(), img.tensor()), 0.0);
}

TEST(ForwardWarp, IntegerShiftMatchesArrayShift) {
  const int h = 8, w = 10, du = 2, dv = -1;
  const Image img = testutil::random_image(h, w, 22);
  const Image out = forward_warp_softmax(img, constant_flow(h, w, du, dv), Tensor({1, h, w}));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int sy = y - dv, sx = x - du;
      const double expect = (sy >= 0 && sy < h && sx >= 0 && sx < w) ? img.at(sy, sx) : 0.0;
      EXPECT_EQ(out.at(y, x), expect) << y << "," << x;
    }
}

TEST(ForwardWarp, CollisionsBlendBySoftmaxImportance) {
  Image img(1, 3, 1);
  img.at(0, 0) = 0.2;
  img.at(0, 1) = 0.9;
  img.at(0, 2) = 0.5;
  FlowField f(1, 3);
  f.u(0, 0) = 1.0;  // lands on pixel 1 together with pixel 1 itself
  Tensor z({1, 1, 3});
  z[0] = 0.3;
  z[1] = -0.4;
  const Image out = forward_warp_softmax(img, f, z);
  const double e0 = std::exp(0.3), e1 = std::exp(-0.4);
  EXPECT_EQ(out.at(0, 0), 0.0);
  EXPECT_NEAR(out.at(0, 1), (e0 * 0.2 + e1 * 0.9) / (e0 + e1), 1e-12);
  EXPECT_NEAR(out.at(0, 2), 0.5, 1e-12);
}

TEST(ForwardWarp, FractionalSplatKeepsConstantImageConstant) {
  const Image img(6, 6, 1, 0.37);
  const FlowField f = constant_flow(6, 6, 0.4, 0.25);
  const Image out = forward_warp_softmax(img, f, testutil::random_tensor({1, 6, 6}, 23));
  for (int y = 1; y < 6; ++y)
    for (int x = 1; x < 6; ++x) EXPECT_NEAR(out.at(y, x), 0.37, 1e-12);
}

TEST(ForwardWarp, OffFrameSplatsAreDropped) {
  const Image img(4, 4, 1, 0.5);
  const Image out = forward_warp_softmax(img, constant_flow(4, 4, 10.0, 0.0), Tensor({1, 4, 4}));
  for (double v : out.tensor().values()) EXPECT_EQ(v, 0.0);
}

TEST(ForwardWarp, Gradient) {
  const auto img = nn::leaf(testutil::random_tensor({2, 5, 6}, 24, 0, 1), true);
  Tensor fl = testutil::random_tensor({2, 5, 6}, 25, -1.4, 1.4);
  const auto flow = nn::leaf(fl, true);
  const Tensor z = testutil::random_tensor({1, 5, 6}, 26);
  const Tensor w = testutil::random_tensor({2, 5, 6}, 27);
  auto loss = [&] { return nn::weighted_sum(nn::forward_warp(img, flow, z), w); };
  EXPECT_LT(testutil::grad_rel_error(loss, {img, flow}), 1e-5);
}

TEST(BackwardWarp, ZeroFlowIsIdentity) {
  const Image img = testutil::random_image(7, 5, 30, 3);
  EXPECT_EQ(testutil::max_abs_diff(backward_warp(img, FlowField(7, 5)).tensor(), img.tensor()), 0.0);
}

TEST(BackwardWarp, IntegerShiftMatchesArrayShiftInInterior) {
  const int h = 9, w = 8, du = -2, dv = 3;
  const Image img = testutil::random_image(h, w, 31);
  const Image out = backward_warp(img, constant_flow(h, w, du, dv));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int sy = y + dv, sx = x + du;
      if (sy >= 0 && sy < h && sx >= 0 && sx < w) EXPECT_EQ(out.at(y, x), img.at(sy, sx));
    }
}

TEST(BackwardWarp, ClampsAtEdges) {
  const Image img = testutil::random_image(4, 4, 32);
  const Image out = backward_warp(img, constant_flow(4, 4, 100.0, 0.0));
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) EXPECT_EQ(out.at(y, x), img.at(y, 3));
}

TEST(BackwardWarp, HalfPixelIsAverage) {
  const Image img = testutil::random_image(3, 4, 33);
  const Image out = backward_warp(img, constant_flow(3, 4, 0.5, 0.0));
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) EXPECT_NEAR(out.at(y, x), 0.5 * (img.at(y, x) + img.at(y, x + 1)), 1e-12);
}

TEST(BackwardWarp, Gradient) {
  const auto img = nn::leaf(testutil::random_tensor({1, 6, 6}, 34, 0, 1), true);
  const auto flow = nn::leaf(testutil::random_tensor({2, 6, 6}, 35, -1.3, 1.3), true);
  const Tensor w = testutil::random_tensor({1, 6, 6}, 36);
  auto loss = [&] { return nn::weighted_sum(nn::backward_warp(img, flow), w); };
  EXPECT_LT(testutil::grad_rel_error(loss, {img, flow}), 1e-5);
}

TEST(Importance, IsNonPositivePhotometricError) {
  const Image a = testutil::random_image(5, 5, 37), b = testutil::random_image(5, 5, 38);
  const Tensor z = photometric_importance(a, b, FlowField(5, 5));
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) EXPECT_NEAR(z.at(0, y, x), -std::abs(a.at(y, x) - b.at(y, x)), 1e-12);
}

TEST(FlowFile, RoundTrip) {
  const auto dir = testutil::temp_dir("flow_io");
  FlowField f(3, 4);
  f.tensor() = testutil::random_tensor({2, 3, 4}, 40, -5, 5);
  write_flow(dir / "a.flo", f);
  const FlowField r = read_flow(dir / "a.flo");
  ASSERT_EQ(r.height(), 3);
  ASSERT_EQ(r.width(), 4);
  for (std::size_t i = 0; i < f.tensor().size(); ++i)
    EXPECT_EQ(r.tensor()[i], static_cast<double>(static_cast<float>(f.tensor()[i])));
  EXPECT_EQ(std::filesystem::file_size(dir / "a.flo"), 16u + 2u * 3u * 4u * 4u);
}

TEST(FlowFile, RejectsCorruptFiles) {
  const auto dir = testutil::temp_dir("flow_bad");
  {
    std::ofstream os(dir / "bad.flo", std::ios::binary);
    os << "NOPE0000000000000000";
  }
  EXPECT_THROW(read_flow(dir / "bad.flo"), FormatError);
  FlowField f(2, 2);
  write_flow(dir / "ok.flo", f);
  std::filesystem::resize_file(dir / "ok.flo", 20);
  EXPECT_THROW(read_flow(dir / "ok.flo"), FormatError);
}

TEST(Spline, ContinuouslyDifferentiableAtInteriorKnots) {
  // Smooth control data: samples of a smooth per-pixel curve.
  const int k = 5;
  MotionSpline s{Tensor({k, 3, 3}), Tensor({k, 3, 3})};
  for (int i = 0; i < k; ++i) {
    const double t = static_cast<double>(i) / (k - 1);
    for (int p = 0; p < 9; ++p) {
      s.cx[static_cast<std::size_t>(i * 9 + p)] = std::sin(2.0 * t + p) - std::sin(static_cast<double>(p));
      s.cy[static_cast<std::size_t>(i * 9 + p)] = t * t * (1 + 0.1 * p);
    }
  }
  const double eps = 1e-6;
  for (int i = 1; i < k - 1; ++i) {
    const double t = static_cast<double>(i) / (k - 1);
    const Tensor left = sample_flow(s, t).tensor(), lo = sample_flow(s, t - eps).tensor();
    const Tensor hi = sample_flow(s, t + eps).tensor();
    for (std::size_t p = 0; p < left.size(); ++p) {
      const double dl = (left[p] - lo[p]) / eps, dr = (hi[p] - left[p]) / eps;
      EXPECT_NEAR(dl, dr, 1e-4) << "knot " << i << " entry " << p;
    }
  }
}

TEST(Warps, LinearInImageForFixedFlow) {
  const int h = 9, w = 8;
  const Image a = testutil::random_image(h, w, 40), b = testutil::random_image(h, w, 41);
  Image mix(h, w);
  for (std::size_t i = 0; i < mix.tensor().size(); ++i) mix.tensor()[i] = 0.7 * a.tensor()[i] - 2.5 * b.tensor()[i];
  const FlowField f(testutil::random_tensor({2, h, w}, 42, -2.5, 2.5));
  const Tensor z = testutil::random_tensor({1, h, w}, 43, -1, 0);
  const Tensor fa = forward_warp_softmax(a, f, z).tensor(), fb = forward_warp_softmax(b, f, z).tensor();
  const Tensor fm = forward_warp_softmax(mix, f, z).tensor();
  const Tensor ba = backward_warp(a, f).tensor(), bb = backward_warp(b, f).tensor(), bm = backward_warp(mix, f).tensor();
  for (std::size_t i = 0; i < fm.size(); ++i) {
    EXPECT_NEAR(fm[i], 0.7 * fa[i] - 2.5 * fb[i], 1e-6);
    EXPECT_NEAR(bm[i], 0.7 * ba[i] - 2.5 * bb[i], 1e-6);
  }
}

TEST(ForwardWarp, InvariantToImportanceOffset) {
  const int h = 10, w = 10;
  const Image img = testutil::random_image(h, w, 50);
  const FlowField f(testutil::random_tensor({2, h, w}, 51, -3, 3));
  Tensor z = testutil::random_tensor({1, h, w}, 52, -1, 0);
  const Tensor base = forward_warp_softmax(img, f, z).tensor();
  for (double c : {-5.0, 3.0, 40.0}) {
    Tensor shifted = z;
    for (auto& v : shifted.storage()) v += c;
    EXPECT_LT(testutil::max_abs_diff(forward_warp_softmax(img, f, shifted).tensor(), base), 1e-6) << c;
  }
}
