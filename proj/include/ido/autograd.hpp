#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "ido/tensor.hpp"

namespace ido::nn {

struct Node;
using Var = std::shared_ptr<Node>;

// A value in the computation graph. Nodes own their parents, so a loss Var
// keeps the whole graph alive until it is dropped.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& grad_buffer();
};

Var constant(Tensor value);
Var leaf(Tensor value, bool requires_grad);

// Reverse-mode sweep from a scalar. Gradients accumulate into leaves.
void backward(const Var& loss);

// Elementwise arithmetic. `mul` broadcasts a single-channel right operand
// across the channels of a (C, H, W) left operand.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var affine(const Var& x, double scale, double shift);
Var mul_const(const Var& x, const Tensor& c);

Var leaky_relu(const Var& x, double slope = 0.1);
Var sigmoid(const Var& x);
Var clamp01(const Var& x);

// Reductions to a scalar (shape {1}).
Var sum(const Var& x);
Var mean(const Var& x);
Var mean_abs_diff(const Var& a, const Var& b);
Var weighted_sum(const Var& x, const Tensor& weights);
Var sum_channels(const Var& x);

// Channel manipulation on (C, H, W).
Var concat(const std::vector<Var>& parts);
Var slice(const Var& x, int c0, int c1);
Var linear_combine_channels(const Var& x, const std::vector<double>& weights);

// Spatial ops on (C, H, W).
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
Var upsample2x(const Var& x);
Var adaptive_avg_pool(const Var& x, int out_h, int out_w);
Var crop(const Var& x, int y0, int x0, int h, int w);
Var pad_into(const Var& x, int full_h, int full_w, int y0, int x0);

// Softmax across channels at each pixel.
Var softmax_channels(const Var& x);
// Softmax across channels restricted to entries where mask == 1; pixels with
// no admissible channel output all zeros.
Var masked_softmax_channels(const Var& x, const Tensor& mask);

// Multi-head self-attention inside non-overlapping window x window tiles.
// q, k, v: (C, H, W) with C divisible by heads and H, W divisible by window.
Var window_attention(const Var& q, const Var& k, const Var& v, int heads, int window);

}  // namespace ido::nn
