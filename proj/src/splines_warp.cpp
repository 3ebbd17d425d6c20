#include "ido/splines_warp.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>

#include "ido/error.hpp"

namespace ido::warp {

void MotionSpline::validate() const {
  require(cx.ndim() == 3 && cx.same_shape(cy), "motion spline: cx/cy must share a (K,H,W) shape");
  require(knots() >= 2, "motion spline: at least two control points required");
  for (const Tensor* t : {&cx, &cy}) {
    for (double v : t->plane(0)) require(v == 0.0, "motion spline: first control point must be zero");
    for (double v : t->values()) require(std::isfinite(v), "motion spline: non-finite control point");
  }
}

std::vector<double> catmull_rom_weights(int knots, double t) {
  require(knots >= 2, "catmull_rom_weights: at least two knots required");
  require(t >= 0.0 && t <= 1.0, "spline parameter t must lie in [0, 1]");
  const int segments = knots - 1;
  const double pos = t * segments;
  const int i = std::min(static_cast<int>(std::floor(pos)), segments - 1);
  const double s = pos - i;
  const double s2 = s * s, s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1;
  const double h10 = s3 - 2 * s2 + s;
  const double h01 = -2 * s3 + 3 * s2;
  const double h11 = s3 - s2;

  std::vector<double> w(static_cast<std::size_t>(knots), 0.0);
  auto add_tangent = [&](int j, double h) {
    if (j == 0) {
      w[1] += h;
      w[0] -= h;
    } else if (j == knots - 1) {
      w[static_cast<std::size_t>(j)] += h;
      w[static_cast<std::size_t>(j - 1)] -= h;
    } else {
      w[static_cast<std::size_t>(j + 1)] += 0.5 * h;
      w[static_cast<std::size_t>(j - 1)] -= 0.5 * h;
    }
  };
  w[static_cast<std::size_t>(i)] += h00;
  w[static_cast<std::size_t>(i + 1)] += h01;
  add_tangent(i, h10);
  add_tangent(i + 1, h11);
  return w;
}

FlowField sample_flow(const MotionSpline& spline, double t) {
  require(t >= 0.0 && t <= 1.0, "sample_flow: t must lie in [0, 1]");
  require(spline.cx.ndim() == 3 && spline.cx.same_shape(spline.cy), "sample_flow: malformed spline");
  const auto w = catmull_rom_weights(spline.knots(), t);
  FlowField flow(spline.height(), spline.width());
  for (int k = 0; k < spline.knots(); ++k) {
    const double wk = w[static_cast<std::size_t>(k)];
    if (wk == 0.0) continue;
    auto u = flow.tensor().plane(0);
    auto v = flow.tensor().plane(1);
    auto px = spline.cx.plane(k);
    auto py = spline.cy.plane(k);
    for (std::size_t i = 0; i < u.size(); ++i) {
      u[i] += wk * px[i];
      v[i] += wk * py[i];
    }
  }
  return flow;
}

namespace detail {

struct Corner {
  int dx, dy;
};
constexpr std::array<Corner, 4> kCorners{{{0, 0}, {1, 0}, {0, 1}, {1, 1}}};

inline double corner_weight(int k, double fx, double fy) {
  switch (k) {
    case 0: return (1 - fx) * (1 - fy);
    case 1: return fx * (1 - fy);
    case 2: return (1 - fx) * fy;
    default: return fx * fy;
  }
}

inline void corner_weight_grad(int k, double fx, double fy, double& du, double& dv) {
  switch (k) {
    case 0: du = -(1 - fy); dv = -(1 - fx); break;
    case 1: du = (1 - fy); dv = -fx; break;
    case 2: du = -fy; dv = (1 - fx); break;
    default: du = fy; dv = fx; break;
  }
}

void check_warp_shapes(const Tensor& img, const Tensor& flow) {
  require(img.ndim() == 3 && flow.ndim() == 3 && flow.channels() == 2, "warp: expected (C,H,W) image and (2,H,W) flow");
  require(img.height() == flow.height() && img.width() == flow.width(),
          "warp: image " + img.shape_str() + " and flow " + flow.shape_str() + " differ in size");
}

struct SplatResult {
  Tensor out;
  Tensor denom;  // (1, H, W)
};

SplatResult splat(const Tensor& img, const Tensor& flow, const Tensor& importance) {
  check_warp_shapes(img, flow);
  const int c = img.channels(), h = img.height(), w = img.width();
  require(importance.ndim() == 3 && importance.channels() == 1 && importance.height() == h && importance.width() == w,
          "forward warp: importance must be (1,H,W)");
  double zmax = -std::numeric_limits<double>::infinity();
  for (double z : importance.values()) zmax = std::max(zmax, z);
  // Two passes: normalizers first, then normalized contributions, so a target
  // fed by a single source reproduces that source value exactly.
  Tensor num({c, h, w});
  Tensor den({1, h, w});
  for (int pass = 0; pass < 2; ++pass)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double tx = x + flow.at(0, y, x);
        const double ty = y + flow.at(1, y, x);
        if (!std::isfinite(tx) || !std::isfinite(ty)) continue;
        const int x0 = static_cast<int>(std::floor(tx));
        const int y0 = static_cast<int>(std::floor(ty));
        const double fx = tx - x0, fy = ty - y0;
        const double e = std::exp(importance.at(0, y, x) - zmax);
        for (int k = 0; k < 4; ++k) {
          const int px = x0 + kCorners[k].dx, py = y0 + kCorners[k].dy;
          if (px < 0 || px >= w || py < 0 || py >= h) continue;
          const double we = corner_weight(k, fx, fy) * e;
          if (we == 0.0) continue;
          if (pass == 0) {
            den.at(0, py, px) += we;
          } else {
            const double share = we / den.at(0, py, px);
            for (int ch = 0; ch < c; ++ch) num.at(ch, py, px) += share * img.at(ch, y, x);
          }
        }
      }
  return {std::move(num), std::move(den)};
}

void splat_backward(const Tensor& img, const Tensor& flow, const Tensor& importance, const SplatResult& fwd,
                    const Tensor& gout, Tensor* gimg, Tensor* gflow) {
  const int c = img.channels(), h = img.height(), w = img.width();
  double zmax = -std::numeric_limits<double>::infinity();
  for (double z : importance.values()) zmax = std::max(zmax, z);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double tx = x + flow.at(0, y, x);
      const double ty = y + flow.at(1, y, x);
      if (!std::isfinite(tx) || !std::isfinite(ty)) continue;
      const int x0 = static_cast<int>(std::floor(tx));
      const int y0 = static_cast<int>(std::floor(ty));
      const double fx = tx - x0, fy = ty - y0;
      const double e = std::exp(importance.at(0, y, x) - zmax);
      double du = 0.0, dv = 0.0;
      for (int k = 0; k < 4; ++k) {
        const int px = x0 + kCorners[k].dx, py = y0 + kCorners[k].dy;
        if (px < 0 || px >= w || py < 0 || py >= h) continue;
        const double d = fwd.denom.at(0, py, px);
        if (d <= 0.0) continue;
        const double wk = corner_weight(k, fx, fy);
        const double scale = e / d;
        double dweight = 0.0;
        for (int ch = 0; ch < c; ++ch) {
          const double g = gout.at(ch, py, px);
          if (gimg) gimg->at(ch, y, x) += g * wk * scale;
          dweight += g * (img.at(ch, y, x) - fwd.out.at(ch, py, px));
        }
        dweight *= scale;
        double wu, wv;
        corner_weight_grad(k, fx, fy, wu, wv);
        du += dweight * wu;
        dv += dweight * wv;
      }
      if (gflow) {
        gflow->at(0, y, x) += du;
        gflow->at(1, y, x) += dv;
      }
    }
}

struct Gather {
  int x0, x1, y0, y1;
  double fx, fy;
  bool clamped_x, clamped_y;
};

inline Gather gather_at(double sx, double sy, int h, int w) {
  Gather g{};
  g.clamped_x = !(sx >= 0.0 && sx <= w - 1);
  g.clamped_y = !(sy >= 0.0 && sy <= h - 1);
  const double cx = std::isfinite(sx) ? std::clamp(sx, 0.0, static_cast<double>(w - 1)) : 0.0;
  const double cy = std::isfinite(sy) ? std::clamp(sy, 0.0, static_cast<double>(h - 1)) : 0.0;
  g.x0 = std::min(static_cast<int>(std::floor(cx)), w - 1);
  g.y0 = std::min(static_cast<int>(std::floor(cy)), h - 1);
  g.x1 = std::min(g.x0 + 1, w - 1);
  g.y1 = std::min(g.y0 + 1, h - 1);
  g.fx = cx - g.x0;
  g.fy = cy - g.y0;
  return g;
}

Tensor gather(const Tensor& img, const Tensor& flow) {
  check_warp_shapes(img, flow);
  const int c = img.channels(), h = img.height(), w = img.width();
  Tensor out(img.shape());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Gather g = gather_at(x + flow.at(0, y, x), y + flow.at(1, y, x), h, w);
      for (int ch = 0; ch < c; ++ch) {
        const double top = (1 - g.fx) * img.at(ch, g.y0, g.x0) + g.fx * img.at(ch, g.y0, g.x1);
        const double bot = (1 - g.fx) * img.at(ch, g.y1, g.x0) + g.fx * img.at(ch, g.y1, g.x1);
        out.at(ch, y, x) = (1 - g.fy) * top + g.fy * bot;
      }
    }
  return out;
}

void gather_backward(const Tensor& img, const Tensor& flow, const Tensor& gout, Tensor* gimg, Tensor* gflow) {
  const int c = img.channels(), h = img.height(), w = img.width();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Gather g = gather_at(x + flow.at(0, y, x), y + flow.at(1, y, x), h, w);
      double du = 0.0, dv = 0.0;
      for (int ch = 0; ch < c; ++ch) {
        const double go = gout.at(ch, y, x);
        if (go == 0.0) continue;
        const double i00 = img.at(ch, g.y0, g.x0), i10 = img.at(ch, g.y0, g.x1);
        const double i01 = img.at(ch, g.y1, g.x0), i11 = img.at(ch, g.y1, g.x1);
        if (gimg) {
          gimg->at(ch, g.y0, g.x0) += go * (1 - g.fx) * (1 - g.fy);
          gimg->at(ch, g.y0, g.x1) += go * g.fx * (1 - g.fy);
          gimg->at(ch, g.y1, g.x0) += go * (1 - g.fx) * g.fy;
          gimg->at(ch, g.y1, g.x1) += go * g.fx * g.fy;
        }
        if (!g.clamped_x) du += go * ((1 - g.fy) * (i10 - i00) + g.fy * (i11 - i01));
        if (!g.clamped_y) dv += go * ((1 - g.fx) * (i01 - i00) + g.fx * (i11 - i10));
      }
      if (gflow) {
        gflow->at(0, y, x) += du;
        gflow->at(1, y, x) += dv;
      }
    }
}

}  // namespace detail

Image forward_warp_softmax(const Image& image, const FlowField& flow, const Tensor& importance) {
  require(flow.is_finite(), "forward_warp_softmax: flow must be finite");
  return Image(detail::splat(image.tensor(), flow.tensor(), importance).out);
}

Image backward_warp(const Image& image, const FlowField& flow) {
  return Image(detail::gather(image.tensor(), flow.tensor()));
}

Tensor photometric_importance(const Image& source, const Image& target, const FlowField& flow_to_target) {
  require(source.same_shape(target), "photometric_importance: frame shape mismatch");
  const Tensor warped = detail::gather(target.tensor(), flow_to_target.tensor());
  const int c = source.channels(), h = source.height(), w = source.width();
  Tensor z({1, h, w});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) z.at(0, y, x) -= std::abs(source.at(y, x, ch) - warped.at(ch, y, x)) / c;
  return z;
}

namespace {

constexpr std::array<char, 4> kFlowMagic{'I', 'D', 'O', 'F'};
constexpr std::uint32_t kFlowVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated flow file");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_flow(const std::filesystem::path& path, const FlowField& flow) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot write " + path.string());
  os.write(kFlowMagic.data(), 4);
  put_u32(os, kFlowVersion);
  put_u32(os, static_cast<std::uint32_t>(flow.height()));
  put_u32(os, static_cast<std::uint32_t>(flow.width()));
  for (double v : flow.tensor().values()) put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (!os) throw FormatError("write failed: " + path.string());
}

FlowField read_flow(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), 4) || magic != kFlowMagic) throw FormatError("bad flow magic in " + path.string());
  if (get_u32(is) != kFlowVersion) throw FormatError("unsupported flow version in " + path.string());
  const auto h = static_cast<int>(get_u32(is));
  const auto w = static_cast<int>(get_u32(is));
  if (h <= 0 || w <= 0 || h > (1 << 16) || w > (1 << 16)) throw FormatError("bad flow dimensions");
  FlowField flow(h, w);
  for (double& v : flow.tensor().values()) v = std::bit_cast<float>(get_u32(is));
  return flow;
}

}  // namespace ido::warp

namespace ido::nn {

Var sample_spline(const Var& cx, const Var& cy, double t) {
  const auto w = warp::catmull_rom_weights(cx->value.channels(), t);
  return concat({linear_combine_channels(cx, w), linear_combine_channels(cy, w)});
}

Var forward_warp(const Var& image, const Var& flow, const Tensor& importance) {
  auto fwd = std::make_shared<warp::detail::SplatResult>(
      warp::detail::splat(image->value, flow->value, importance));
  auto node = std::make_shared<Node>();
  node->value = fwd->out;
  node->requires_grad = image->requires_grad || flow->requires_grad;
  if (node->requires_grad) {
    node->parents = {image, flow};
    node->backward_fn = [fwd, importance](Node& n) {
      const Var& img = n.parents[0];
      const Var& fl = n.parents[1];
      warp::detail::splat_backward(img->value, fl->value, importance, *fwd, n.grad,
                                   img->requires_grad ? &img->grad_buffer() : nullptr,
                                   fl->requires_grad ? &fl->grad_buffer() : nullptr);
    };
  }
  return node;
}

Var backward_warp(const Var& image, const Var& flow) {
  auto node = std::make_shared<Node>();
  node->value = warp::detail::gather(image->value, flow->value);
  node->requires_grad = image->requires_grad || flow->requires_grad;
  if (node->requires_grad) {
    node->parents = {image, flow};
    node->backward_fn = [](Node& n) {
      const Var& img = n.parents[0];
      const Var& fl = n.parents[1];
      warp::detail::gather_backward(img->value, fl->value, n.grad,
                                    img->requires_grad ? &img->grad_buffer() : nullptr,
                                    fl->requires_grad ? &fl->grad_buffer() : nullptr);
    };
  }
  return node;
}

}  // namespace ido::nn
