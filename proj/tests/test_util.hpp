#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ido/autograd.hpp"
#include "ido/image.hpp"
#include "ido/nn.hpp"

namespace testutil {

inline ido::Tensor random_tensor(std::vector<int> shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  ido::Tensor t(std::move(shape));
  for (auto& v : t.storage()) v = u(rng);
  return t;
}

inline ido::Image random_image(int h, int w, std::uint64_t seed, int c = 1) {
  return ido::Image(random_tensor({c, h, w}, seed, 0.05, 0.95));
}

// Relative error ||analytic - numeric|| / max(||analytic||, ||numeric||) of the
// gradient of `loss()` w.r.t. every entry of `leaves`, by central differences.
inline double grad_rel_error(const std::function<ido::nn::Var()>& loss, const std::vector<ido::nn::Var>& leaves,
                             double step = 1e-5, std::size_t max_entries_per_leaf = 0) {
  for (const auto& l : leaves) l->grad = ido::Tensor();
  ido::nn::backward(loss());
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (const auto& l : leaves) {
    const ido::Tensor analytic = l->grad.empty() ? ido::Tensor::zeros_like(l->value) : l->grad;
    const std::size_t n = l->value.size();
    const std::size_t stride = max_entries_per_leaf && n > max_entries_per_leaf ? n / max_entries_per_leaf : 1;
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = l->value[i];
      l->value[i] = orig + step;
      const double fp = loss()->value[0];
      l->value[i] = orig - step;
      const double fm = loss()->value[0];
      l->value[i] = orig;
      const double num = (fp - fm) / (2.0 * step);
      diff2 += (analytic[i] - num) * (analytic[i] - num);
      a2 += analytic[i] * analytic[i];
      n2 += num * num;
    }
  }
  const double denom = std::sqrt(std::max(a2, n2));
  return denom > 0.0 ? std::sqrt(diff2) / denom : std::sqrt(diff2);
}

inline std::vector<ido::nn::Var> param_leaves(const ido::nn::ParamSet& p) {
  std::vector<ido::nn::Var> out;
  for (const auto& [name, v] : p.entries()) out.push_back(v);
  return out;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("ido_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline double max_abs_diff(const ido::Tensor& a, const ido::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace testutil
