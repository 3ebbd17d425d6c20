#include "ido/nn.hpp"

#include <cmath>

#include "ido/error.hpp"

namespace ido::nn {

Var ParamSet::add(const std::string& name, Tensor init) {
  if (index_.count(name)) throw InvalidInput("duplicate parameter name: " + name);
  index_[name] = entries_.size();
  entries_.emplace_back(name, leaf(std::move(init), trainable_));
  return entries_.back().second;
}

const Var& ParamSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidInput("unknown parameter: " + name);
  return entries_[it->second].second;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, v] : entries_) n += v->value.size();
  return n;
}

void ParamSet::set_trainable(bool trainable) {
  trainable_ = trainable;
  for (auto& [_, v] : entries_) {
    v->requires_grad = trainable;
    if (!trainable) v->grad = Tensor();
  }
}

void ParamSet::zero_grad() {
  for (auto& [_, v] : entries_)
    if (!v->grad.empty()) v->grad.fill(0.0);
}

Conv2d::Conv2d(ParamSet& params, const std::string& name, int c_in, int c_out, int kernel, int stride,
               std::mt19937_64& rng, double init_gain)
    : name_(name), c_in_(c_in), c_out_(c_out), kernel_(kernel), stride_(stride), pad_(kernel / 2) {
  require(c_in > 0 && c_out > 0 && kernel > 0 && stride > 0, "conv layer " + name + ": bad geometry");
  // He-uniform for leaky-ReLU(0.1) activations.
  const double fan_in = static_cast<double>(c_in) * kernel * kernel;
  const double bound = init_gain * std::sqrt(6.0 / ((1.0 + 0.01) * fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor w({c_out, c_in, kernel, kernel});
  for (double& v : w.values()) v = dist(rng);
  weight_ = params.add(name + ".weight", std::move(w));
  bias_ = params.add(name + ".bias", Tensor({c_out}));
}

metrics::LayerCost Conv2d::cost(int h, int w) const {
  return {name_, metrics::conv_macs(c_in_, c_out_, kernel_, stride_, pad_, h, w)};
}

void Adam::step(ParamSet& params, double lr, double grad_scale) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [name, var] : params.entries()) {
    if (!var->requires_grad || var->grad.empty()) continue;
    auto it = moments_.find(name);
    if (it == moments_.end())
      it = moments_.emplace(name, std::pair{Tensor::zeros_like(var->value), Tensor::zeros_like(var->value)}).first;
    Tensor& m = it->second.first;
    Tensor& v = it->second.second;
    for (std::size_t i = 0; i < var->value.size(); ++i) {
      const double g = var->grad[i] * grad_scale;
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      var->value[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
    }
    var->grad.fill(0.0);
  }
}

}  // namespace ido::nn
