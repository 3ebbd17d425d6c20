#pragma once

#include <filesystem>

#include "ido/tensor.hpp"

namespace ido {

// Intensity image with values in [0, 1], stored planar (C, H, W).
class Image {
public:
  Image() = default;
  Image(int height, int width, int channels = 1, double fill = 0.0) : data_({channels, height, width}, fill) {}
  explicit Image(Tensor chw);

  int height() const { return data_.height(); }
  int width() const { return data_.width(); }
  int channels() const { return data_.channels(); }
  bool empty() const { return data_.empty(); }

  double& at(int y, int x, int c = 0) { return data_.at(c, y, x); }
  double at(int y, int x, int c = 0) const { return data_.at(c, y, x); }

  const Tensor& tensor() const { return data_; }
  Tensor& tensor() { return data_; }
  bool same_shape(const Image& o) const { return data_.same_shape(o.data_); }

private:
  Tensor data_;
};

// Per-pixel displacement in pixels: channel 0 is u (columns), channel 1 is v (rows).
class FlowField {
public:
  FlowField() = default;
  FlowField(int height, int width) : data_({2, height, width}) {}
  explicit FlowField(Tensor two_hw);

  int height() const { return data_.height(); }
  int width() const { return data_.width(); }

  double& u(int y, int x) { return data_.at(0, y, x); }
  double u(int y, int x) const { return data_.at(0, y, x); }
  double& v(int y, int x) { return data_.at(1, y, x); }
  double v(int y, int x) const { return data_.at(1, y, x); }

  const Tensor& tensor() const { return data_; }
  Tensor& tensor() { return data_; }
  bool is_finite() const;

private:
  Tensor data_;
};

Image read_png(const std::filesystem::path& path);
// Writes an 8-bit grey or RGB PNG; values are clamped to [0, 1] and rounded.
void write_png(const std::filesystem::path& path, const Image& image);

}  // namespace ido
