#include "ido/autograd.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "ido/error.hpp"

namespace ido::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

Var make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool rg = false;
  for (const auto& p : parents) rg = rg || (p && p->requires_grad);
  node->requires_grad = rg;
  if (rg) {
    node->parents = std::move(parents);
    node->backward_fn = std::move(fn);
  }
  return node;
}

bool wants(const Var& p) { return p && p->requires_grad; }

Tensor scalar(double v) { return Tensor({1}, v); }

void check_chw(const Var& x, const char* op) {
  if (x->value.ndim() != 3) throw InvalidInput(std::string(op) + ": expected (C,H,W) tensor, got " + x->value.shape_str());
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.size() != value.size() || grad.shape() != value.shape()) grad = Tensor::zeros_like(value);
  return grad;
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return node;
}

Var leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return node;
}

void backward(const Var& loss) {
  require(loss->value.size() == 1, "backward: loss must be a scalar");
  if (!loss->requires_grad) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.get(), 0}};
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p && p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
  require(a->value.same_shape(b->value), "add: shape mismatch " + a->value.shape_str() + " vs " + b->value.shape_str());
  Tensor out = a->value;
  out += b->value;
  return make(std::move(out), {a, b}, [](Node& n) {
    for (int i = 0; i < 2; ++i)
      if (wants(n.parents[i])) n.parents[i]->grad_buffer() += n.grad;
  });
}

Var sub(const Var& a, const Var& b) {
  require(a->value.same_shape(b->value), "sub: shape mismatch " + a->value.shape_str() + " vs " + b->value.shape_str());
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
  return make(std::move(out), {a, b}, [](Node& n) {
    if (wants(n.parents[0])) n.parents[0]->grad_buffer() += n.grad;
    if (wants(n.parents[1])) {
      Tensor& g = n.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  const Tensor& av = a->value;
  const Tensor& bv = b->value;
  const bool broadcast = !av.same_shape(bv);
  if (broadcast) {
    require(av.ndim() == 3 && bv.ndim() == 3 && bv.channels() == 1 && av.height() == bv.height() &&
                av.width() == bv.width(),
            "mul: incompatible shapes " + av.shape_str() + " vs " + bv.shape_str());
  }
  const std::size_t plane = broadcast ? bv.size() : av.size();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i % plane];
  return make(std::move(out), {a, b}, [plane](Node& n) {
    const Tensor& av = n.parents[0]->value;
    const Tensor& bv = n.parents[1]->value;
    if (wants(n.parents[0])) {
      Tensor& g = n.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * bv[i % plane];
    }
    if (wants(n.parents[1])) {
      Tensor& g = n.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < av.size(); ++i) g[i % plane] += n.grad[i] * av[i];
    }
  });
}

Var affine(const Var& x, double scale, double shift) {
  Tensor out = x->value;
  for (double& v : out.values()) v = v * scale + shift;
  return make(std::move(out), {x}, [scale](Node& n) {
    Tensor& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * n.grad[i];
  });
}

Var mul_const(const Var& x, const Tensor& c) {
  require(x->value.same_shape(c), "mul_const: shape mismatch");
  Tensor out = x->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c[i];
  return make(std::move(out), {x}, [c](Node& n) {
    Tensor& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += c[i] * n.grad[i];
  });
}

Var leaky_relu(const Var& x, double slope) {
  Tensor out = x->value;
  for (double& v : out.values()) v = v > 0.0 ? v : slope * v;
  return make(std::move(out), {x}, [slope](Node& n) {
    const Tensor& xv = n.parents[0]->value;
    Tensor& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * (xv[i] > 0.0 ? 1.0 : slope);
  });
}

Var sigmoid(const Var& x) {
  Tensor out = x->value;
  for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  return make(std::move(out), {x}, [](Node& n) {
    Tensor& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = n.value[i];
      g[i] += n.grad[i] * s * (1.0 - s);
    }
  });
}

Var clamp01(const Var& x) {
  Tensor out = x->value;
  for (double& v : out.values()) v = std::clamp(v, 0.0, 1.0);
  return make(std::move(out), {x}, [](Node& n) {
    const Tensor& xv = n.parents[0]->value;
    Tensor& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] >= 0.0 && xv[i] <= 1.0) g[i] += n.grad[i];
  });
}

// ----------------------------------------------------------------- reductions

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x->value.values()) s += v;
  return make(scalar(s), {x}, [](Node& n) {
    Tensor& g = n.parents[0]->grad_buffer();
    for (double& v : g.values()) v += n.grad[0];
  });
}

Var mean(const Var& x) { return affine(sum(x), 1.0 / static_cast<double>(x->value.size()), 0.0); }

Var mean_abs_diff(const Var& a, const Var& b) {
  require(a->value.same_shape(b->value), "mean_abs_diff: shape mismatch " + a->value.shape_str() + " vs " +
                                             b->value.shape_str());
  const std::size_t n = a->value.size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::abs(a->value[i] - b->value[i]);
  return make(scalar(s / static_cast<double>(n)), {a, b}, [n](Node& node) {
    const Tensor& av = node.parents[0]->value;
    const Tensor& bv = node.parents[1]->value;
    const double g0 = node.grad[0] / static_cast<double>(n);
    Tensor* ga = wants(node.parents[0]) ? &node.parents[0]->grad_buffer() : nullptr;
    Tensor* gb = wants(node.parents[1]) ? &node.parents[1]->grad_buffer() : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = av[i] - bv[i];
      const double s = d > 0.0 ? g0 : (d < 0.0 ? -g0 : 0.0);
      if (ga) (*ga)[i] += s;
      if (gb) (*gb)[i] -= s;
    }
  });
}

Var weighted_sum(const Var& x, const Tensor& weights) {
  require(x->value.size() == weights.size(), "weighted_sum: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * x->value[i];
  return make(scalar(s), {x}, [weights](Node& n) {
    Tensor& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += weights[i] * n.grad[0];
  });
}

Var sum_channels(const Var& x) {
  check_chw(x, "sum_channels");
  const Tensor& xv = x->value;
  Tensor out({1, xv.height(), xv.width()});
  const std::size_t plane = out.size();
  for (std::size_t i = 0; i < xv.size(); ++i) out[i % plane] += xv[i];
  return make(std::move(out), {x}, [plane](Node& n) {
    Tensor& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i % plane];
  });
}

// ---------------------------------------------------------------- channels

Var concat(const std::vector<Var>& parts) {
  std::vector<const Tensor*> ts;
  ts.reserve(parts.size());
  for (const auto& p : parts) {
    check_chw(p, "concat");
    ts.push_back(&p->value);
  }
  return make(Tensor::concat_channels(ts), parts, [](Node& n) {
    std::size_t off = 0;
    for (auto& p : n.parents) {
      const std::size_t sz = p->value.size();
      if (wants(p)) {
        Tensor& g = p->grad_buffer();
        for (std::size_t i = 0; i < sz; ++i) g[i] += n.grad[off + i];
      }
      off += sz;
    }
  });
}

Var slice(const Var& x, int c0, int c1) {
  check_chw(x, "slice");
  const std::size_t off = static_cast<std::size_t>(c0) * x->value.height() * x->value.width();
  return make(x->value.channels_slice(c0, c1), {x}, [off](Node& n) {
    Tensor& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < n.grad.size(); ++i) g[off + i] += n.grad[i];
  });
}

Var linear_combine_channels(const Var& x, const std::vector<double>& weights) {
  check_chw(x, "linear_combine_channels");
  const Tensor& xv = x->value;
  require(static_cast<int>(weights.size()) == xv.channels(), "linear_combine_channels: weight count mismatch");
  Tensor out({1, xv.height(), xv.width()});
  const std::size_t plane = out.size();
  for (int c = 0; c < xv.channels(); ++c) {
    const double w = weights[static_cast<std::size_t>(c)];
    if (w == 0.0) continue;
    const double* src = xv.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) out[i] += w * src[i];
  }
  return make(std::move(out), {x}, [weights, plane](Node& n) {
    Tensor& g = n.parents[0]->grad_buffer();
    for (std::size_t c = 0; c < weights.size(); ++c) {
      double* dst = g.data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] += weights[c] * n.grad[i];
    }
  });
}

// ---------------------------------------------------------------- spatial

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  check_chw(x, "conv2d");
  const Tensor& xv = x->value;
  const Tensor& wv = weight->value;
  require(wv.ndim() == 4 && wv.dim(1) == xv.channels() && wv.dim(2) == wv.dim(3),
          "conv2d: weight " + wv.shape_str() + " incompatible with input " + xv.shape_str());
  require(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
  const int ci = xv.channels(), h = xv.height(), w = xv.width();
  const int co = wv.dim(0), k = wv.dim(2);
  const int ho = (h + 2 * pad - k) / stride + 1;
  const int wo = (w + 2 * pad - k) / stride + 1;
  require(ho > 0 && wo > 0, "conv2d: output would be empty");
  const int rows = ci * k * k;
  const int ncols = ho * wo;

  auto cols = std::make_shared<RowMat>(rows, ncols);
  for (int c = 0; c < ci; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* row = cols->data() + static_cast<std::size_t>((c * k + ky) * k + kx) * ncols;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          double* dst = row + oy * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, 0.0);
            continue;
          }
          const double* src = xv.data() + (static_cast<std::size_t>(c) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
          }
        }
      }

  // Eigen only ever sees its own aligned buffers: vectorized kernels peel
  // differently on differently aligned pointers, which would change the
  // summation order from run to run.
  const RowMat wm = CMapMat(wv.data(), co, rows);
  RowMat ym(co, ncols);
  ym.noalias() = wm * (*cols);
  Tensor out({co, ho, wo});
  MapMat(out.data(), co, ncols) = ym;
  if (bias) {
    require(bias->value.size() == static_cast<std::size_t>(co), "conv2d: bias size mismatch");
    for (int o = 0; o < co; ++o) {
      const double b = bias->value[static_cast<std::size_t>(o)];
      double* row = out.data() + static_cast<std::size_t>(o) * ncols;
      for (int i = 0; i < ncols; ++i) row[i] += b;
    }
  }

  std::vector<Var> parents{x, weight};
  if (bias) parents.push_back(bias);
  return make(std::move(out), std::move(parents), [=](Node& n) {
    const RowMat dy = CMapMat(n.grad.data(), co, ncols);
    const Var& xp = n.parents[0];
    const Var& wp = n.parents[1];
    if (wants(wp)) {
      RowMat dw(co, rows);
      dw.noalias() = dy * cols->transpose();
      MapMat(wp->grad_buffer().data(), co, rows) += dw;
    }
    if (n.parents.size() > 2 && wants(n.parents[2])) {
      Tensor& gb = n.parents[2]->grad_buffer();
      for (int o = 0; o < co; ++o) {
        const double* row = n.grad.data() + static_cast<std::size_t>(o) * ncols;
        double acc = 0.0;
        for (int i = 0; i < ncols; ++i) acc += row[i];
        gb[static_cast<std::size_t>(o)] += acc;
      }
    }
    if (wants(xp)) {
      const RowMat wm = CMapMat(wp->value.data(), co, rows);
      RowMat dcols(rows, ncols);
      dcols.noalias() = wm.transpose() * dy;
      Tensor& gx = xp->grad_buffer();
      for (int c = 0; c < ci; ++c)
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            const double* row = dcols.data() + static_cast<std::size_t>((c * k + ky) * k + kx) * ncols;
            for (int oy = 0; oy < ho; ++oy) {
              const int iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= h) continue;
              double* dst = gx.data() + (static_cast<std::size_t>(c) * h + iy) * w;
              const double* src = row + oy * wo;
              for (int ox = 0; ox < wo; ++ox) {
                const int ix = ox * stride - pad + kx;
                if (ix >= 0 && ix < w) dst[ix] += src[ox];
              }
            }
          }
    }
  });
}

namespace {

struct Lerp {
  int i0, i1;
  double f;
};

// Half-pixel-centred source coordinates for a x2 bilinear upsample.
std::vector<Lerp> upsample_taps(int in, int out) {
  std::vector<Lerp> taps(static_cast<std::size_t>(out));
  for (int o = 0; o < out; ++o) {
    double s = (o + 0.5) * 0.5 - 0.5;
    if (s < 0.0) s = 0.0;
    int i0 = static_cast<int>(std::floor(s));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    taps[static_cast<std::size_t>(o)] = {i0, i1, s - i0};
  }
  return taps;
}

}  // namespace

Var upsample2x(const Var& x) {
  check_chw(x, "upsample2x");
  const Tensor& xv = x->value;
  const int c = xv.channels(), h = xv.height(), w = xv.width();
  const auto ty = upsample_taps(h, 2 * h);
  const auto tx = upsample_taps(w, 2 * w);
  Tensor out({c, 2 * h, 2 * w});
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < 2 * h; ++oy) {
      const Lerp& ly = ty[static_cast<std::size_t>(oy)];
      for (int ox = 0; ox < 2 * w; ++ox) {
        const Lerp& lx = tx[static_cast<std::size_t>(ox)];
        const double top = xv.at(ch, ly.i0, lx.i0) * (1 - lx.f) + xv.at(ch, ly.i0, lx.i1) * lx.f;
        const double bot = xv.at(ch, ly.i1, lx.i0) * (1 - lx.f) + xv.at(ch, ly.i1, lx.i1) * lx.f;
        out.at(ch, oy, ox) = top * (1 - ly.f) + bot * ly.f;
      }
    }
  return make(std::move(out), {x}, [c, h, w, ty, tx](Node& n) {
    Tensor& g = n.parents[0]->grad_buffer();
    for (int ch = 0; ch < c; ++ch)
      for (int oy = 0; oy < 2 * h; ++oy) {
        const Lerp& ly = ty[static_cast<std::size_t>(oy)];
        for (int ox = 0; ox < 2 * w; ++ox) {
          const Lerp& lx = tx[static_cast<std::size_t>(ox)];
          const double go = n.grad.at(ch, oy, ox);
          g.at(ch, ly.i0, lx.i0) += go * (1 - ly.f) * (1 - lx.f);
          g.at(ch, ly.i0, lx.i1) += go * (1 - ly.f) * lx.f;
          g.at(ch, ly.i1, lx.i0) += go * ly.f * (1 - lx.f);
          g.at(ch, ly.i1, lx.i1) += go * ly.f * lx.f;
        }
      }
  });
}

Var adaptive_avg_pool(const Var& x, int out_h, int out_w) {
  check_chw(x, "adaptive_avg_pool");
  const Tensor& xv = x->value;
  const int c = xv.channels(), h = xv.height(), w = xv.width();
  auto bin = [](int i, int in, int out) {
    const int s = (i * in) / out;
    const int e = ((i + 1) * in + out - 1) / out;
    return std::pair{s, e};
  };
  Tensor out({c, out_h, out_w});
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < out_h; ++i)
      for (int j = 0; j < out_w; ++j) {
        const auto [y0, y1] = bin(i, h, out_h);
        const auto [x0, x1] = bin(j, w, out_w);
        double s = 0.0;
        for (int y = y0; y < y1; ++y)
          for (int xx = x0; xx < x1; ++xx) s += xv.at(ch, y, xx);
        out.at(ch, i, j) = s / static_cast<double>((y1 - y0) * (x1 - x0));
      }
  return make(std::move(out), {x}, [=](Node& n) {
    Tensor& g = n.parents[0]->grad_buffer();
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < out_h; ++i)
        for (int j = 0; j < out_w; ++j) {
          const auto [y0, y1] = bin(i, h, out_h);
          const auto [x0, x1] = bin(j, w, out_w);
          const double go = n.grad.at(ch, i, j) / static_cast<double>((y1 - y0) * (x1 - x0));
          for (int y = y0; y < y1; ++y)
            for (int xx = x0; xx < x1; ++xx) g.at(ch, y, xx) += go;
        }
  });
}

Var crop(const Var& x, int y0, int x0, int h, int w) {
  check_chw(x, "crop");
  const Tensor& xv = x->value;
  require(y0 >= 0 && x0 >= 0 && h > 0 && w > 0 && y0 + h <= xv.height() && x0 + w <= xv.width(),
          "crop: window outside tensor");
  const int c = xv.channels();
  Tensor out({c, h, w});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) out.at(ch, y, xx) = xv.at(ch, y0 + y, x0 + xx);
  return make(std::move(out), {x}, [=](Node& n) {
    Tensor& g = n.parents[0]->grad_buffer();
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) g.at(ch, y0 + y, x0 + xx) += n.grad.at(ch, y, xx);
  });
}

Var pad_into(const Var& x, int full_h, int full_w, int y0, int x0) {
  check_chw(x, "pad_into");
  const Tensor& xv = x->value;
  const int c = xv.channels(), h = xv.height(), w = xv.width();
  require(y0 >= 0 && x0 >= 0 && y0 + h <= full_h && x0 + w <= full_w, "pad_into: window outside frame");
  Tensor out({c, full_h, full_w});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) out.at(ch, y0 + y, x0 + xx) = xv.at(ch, y, xx);
  return make(std::move(out), {x}, [=](Node& n) {
    Tensor& g = n.parents[0]->grad_buffer();
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) g.at(ch, y, xx) += n.grad.at(ch, y0 + y, x0 + xx);
  });
}

// ------------------------------------------------------------------ softmax

namespace {

void softmax_backward(const Tensor& s, const Tensor& gout, Tensor& gin) {
  const int c = s.channels();
  const std::size_t plane = static_cast<std::size_t>(s.height()) * s.width();
  for (std::size_t p = 0; p < plane; ++p) {
    double dot = 0.0;
    for (int ch = 0; ch < c; ++ch) dot += gout[ch * plane + p] * s[ch * plane + p];
    for (int ch = 0; ch < c; ++ch) gin[ch * plane + p] += s[ch * plane + p] * (gout[ch * plane + p] - dot);
  }
}

}  // namespace

Var softmax_channels(const Var& x) {
  return masked_softmax_channels(x, Tensor(x->value.shape(), 1.0));
}

Var masked_softmax_channels(const Var& x, const Tensor& mask) {
  check_chw(x, "softmax_channels");
  const Tensor& xv = x->value;
  require(xv.same_shape(mask), "masked_softmax_channels: mask shape mismatch");
  const int c = xv.channels();
  const std::size_t plane = static_cast<std::size_t>(xv.height()) * xv.width();
  Tensor out(xv.shape());
  for (std::size_t p = 0; p < plane; ++p) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int ch = 0; ch < c; ++ch)
      if (mask[ch * plane + p] != 0.0) mx = std::max(mx, xv[ch * plane + p]);
    if (!std::isfinite(mx)) continue;
    double z = 0.0;
    for (int ch = 0; ch < c; ++ch)
      if (mask[ch * plane + p] != 0.0) {
        const double e = std::exp(xv[ch * plane + p] - mx);
        out[ch * plane + p] = e;
        z += e;
      }
    for (int ch = 0; ch < c; ++ch) out[ch * plane + p] /= z;
  }
  return make(std::move(out), {x}, [](Node& n) {
    softmax_backward(n.value, n.grad, n.parents[0]->grad_buffer());
  });
}

// ---------------------------------------------------------------- attention

Var window_attention(const Var& q, const Var& k, const Var& v, int heads, int window) {
  check_chw(q, "window_attention");
  const Tensor& qv = q->value;
  require(qv.same_shape(k->value) && qv.same_shape(v->value), "window_attention: q/k/v shape mismatch");
  const int c = qv.channels(), h = qv.height(), w = qv.width();
  require(heads >= 1 && c % heads == 0, "window_attention: channels not divisible by heads");
  require(window >= 1 && h % window == 0 && w % window == 0, "window_attention: size not divisible by window");
  const int d = c / heads;
  const int n = window * window;
  const int wy = h / window, wx = w / window;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  // Gather tokens of window (iy, ix), head hd into an n x d matrix.
  auto gather = [=](const Tensor& t, int iy, int ix, int hd) {
    RowMat m(n, d);
    for (int ch = 0; ch < d; ++ch)
      for (int ty = 0; ty < window; ++ty)
        for (int tx = 0; tx < window; ++tx)
          m(ty * window + tx, ch) = t.at(hd * d + ch, iy * window + ty, ix * window + tx);
    return m;
  };
  auto scatter_add = [=](Tensor& t, const RowMat& m, int iy, int ix, int hd) {
    for (int ch = 0; ch < d; ++ch)
      for (int ty = 0; ty < window; ++ty)
        for (int tx = 0; tx < window; ++tx)
          t.at(hd * d + ch, iy * window + ty, ix * window + tx) += m(ty * window + tx, ch);
  };

  auto attn = std::make_shared<std::vector<RowMat>>();
  attn->reserve(static_cast<std::size_t>(wy * wx * heads));
  Tensor out(qv.shape());
  for (int iy = 0; iy < wy; ++iy)
    for (int ix = 0; ix < wx; ++ix)
      for (int hd = 0; hd < heads; ++hd) {
        const RowMat Q = gather(qv, iy, ix, hd);
        const RowMat K = gather(k->value, iy, ix, hd);
        const RowMat V = gather(v->value, iy, ix, hd);
        RowMat S = (Q * K.transpose()) * scale;
        for (int r = 0; r < n; ++r) {
          const double mx = S.row(r).maxCoeff();
          S.row(r) = (S.row(r).array() - mx).exp();
          S.row(r) /= S.row(r).sum();
        }
        const RowMat O = S * V;
        scatter_add(out, O, iy, ix, hd);
        attn->push_back(std::move(S));
      }

  return make(std::move(out), {q, k, v}, [=](Node& node) {
    const Tensor& qv = node.parents[0]->value;
    const Tensor& kv = node.parents[1]->value;
    const Tensor& vv = node.parents[2]->value;
    std::size_t idx = 0;
    for (int iy = 0; iy < wy; ++iy)
      for (int ix = 0; ix < wx; ++ix)
        for (int hd = 0; hd < heads; ++hd, ++idx) {
          const RowMat& A = (*attn)[idx];
          const RowMat dO = gather(node.grad, iy, ix, hd);
          const RowMat Q = gather(qv, iy, ix, hd);
          const RowMat K = gather(kv, iy, ix, hd);
          const RowMat V = gather(vv, iy, ix, hd);
          if (wants(node.parents[2])) scatter_add(node.parents[2]->grad_buffer(), A.transpose() * dO, iy, ix, hd);
          const RowMat dA = dO * V.transpose();
          RowMat dS(n, n);
          for (int r = 0; r < n; ++r) {
            const double dot = (dA.row(r).array() * A.row(r).array()).sum();
            dS.row(r) = A.row(r).array() * (dA.row(r).array() - dot);
          }
          dS *= scale;
          if (wants(node.parents[0])) scatter_add(node.parents[0]->grad_buffer(), dS * K, iy, ix, hd);
          if (wants(node.parents[1])) scatter_add(node.parents[1]->grad_buffer(), dS.transpose() * Q, iy, ix, hd);
        }
  });
}

}  // namespace ido::nn
