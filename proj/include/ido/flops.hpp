#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ido::metrics {

// Floating operations per multiply-accumulate.
inline constexpr double kFlopsPerMac = 2.0;

struct LayerCost {
  std::string name;
  double macs = 0.0;
  double flops() const { return kFlopsPerMac * macs; }
};

inline int conv_out_dim(int in, int kernel, int stride, int pad) { return (in + 2 * pad - kernel) / stride + 1; }

inline double conv_macs(int c_in, int c_out, int kernel, int stride, int pad, int h, int w) {
  const double ho = conv_out_dim(h, kernel, stride, pad);
  const double wo = conv_out_dim(w, kernel, stride, pad);
  return static_cast<double>(c_in) * kernel * kernel * c_out * ho * wo;
}

// FLOPs of a padded ("same") or strided 2-D convolution under the 2-ops-per-MAC rule.
inline double conv_flops(int c_in, int c_out, int kernel, int stride, int pad, int h, int w) {
  return kFlopsPerMac * conv_macs(c_in, c_out, kernel, stride, pad, h, w);
}

// QK^T plus AV over windows of n tokens with `channels` total feature width.
inline double window_attention_macs(int channels, int h, int w, int window) {
  const double windows = static_cast<double>(h / window) * (w / window);
  const double n = static_cast<double>(window) * window;
  return windows * 2.0 * n * n * channels;
}

inline double total_flops(const std::vector<LayerCost>& layers) {
  double f = 0.0;
  for (const auto& l : layers) f += l.flops();
  return f;
}

}  // namespace ido::metrics
