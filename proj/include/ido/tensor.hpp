#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ido {

// Dense row-major double tensor. Spatial data is stored planar as (C, H, W).
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);
  Tensor(std::vector<int> shape, std::vector<double> values);

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }
  static Tensor chw(int c, int h, int w, double fill = 0.0) { return Tensor({c, h, w}, fill); }

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // (C, H, W) accessors; no bounds checks.
  int channels() const { return shape_[0]; }
  int height() const { return shape_[1]; }
  int width() const { return shape_[2]; }
  double& at(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  double at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  std::span<double> plane(int c) {
    const std::size_t n = static_cast<std::size_t>(shape_[1]) * shape_[2];
    return {data_.data() + c * n, n};
  }
  std::span<const double> plane(int c) const {
    const std::size_t n = static_cast<std::size_t>(shape_[1]) * shape_[2];
    return {data_.data() + c * n, n};
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  void fill(double v);
  Tensor& operator+=(const Tensor& o);
  Tensor& operator*=(double s);

  // Channel range [c0, c1) of a (C, H, W) tensor.
  Tensor channels_slice(int c0, int c1) const;
  static Tensor concat_channels(const std::vector<const Tensor*>& parts);

  std::string shape_str() const;

private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

std::size_t shape_numel(const std::vector<int>& shape);

}  // namespace ido
