#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ido/autograd.hpp"
#include "ido/flops.hpp"

namespace ido::nn {

// Named, ordered set of trainable tensors belonging to one network.
class ParamSet {
public:
  Var add(const std::string& name, Tensor init);
  const Var& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::pair<std::string, Var>>& entries() const { return entries_; }
  std::size_t scalar_count() const;

  void set_trainable(bool trainable);
  bool trainable() const { return trainable_; }
  void zero_grad();

private:
  std::vector<std::pair<std::string, Var>> entries_;
  std::map<std::string, std::size_t> index_;
  bool trainable_ = true;
};

class Conv2d {
public:
  Conv2d() = default;
  Conv2d(ParamSet& params, const std::string& name, int c_in, int c_out, int kernel, int stride,
         std::mt19937_64& rng, double init_gain = 1.0);

  Var operator()(const Var& x) const { return conv2d(x, weight_, bias_, stride_, pad_); }
  metrics::LayerCost cost(int h, int w) const;
  int out_dim(int in) const { return metrics::conv_out_dim(in, kernel_, stride_, pad_); }
  int c_out() const { return c_out_; }

private:
  std::string name_;
  Var weight_, bias_;
  int c_in_ = 0, c_out_ = 0, kernel_ = 1, stride_ = 1, pad_ = 0;
};

class Adam {
public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Applies one update from the accumulated gradients, then clears them.
  void step(ParamSet& params, double lr, double grad_scale = 1.0);
  std::int64_t steps() const { return t_; }

private:
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::map<std::string, std::pair<Tensor, Tensor>> moments_;
};

}  // namespace ido::nn
