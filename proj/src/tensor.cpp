#include "ido/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "ido/error.hpp"

namespace ido {

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw InvalidInput("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_numel(shape_)) throw InvalidInput("tensor value count does not match shape");
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& o) {
  require(same_shape(o), "tensor += shape mismatch: " + shape_str() + " vs " + o.shape_str());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Tensor Tensor::channels_slice(int c0, int c1) const {
  require(ndim() == 3 && c0 >= 0 && c1 <= shape_[0] && c0 < c1, "invalid channel slice");
  Tensor out({c1 - c0, shape_[1], shape_[2]});
  const std::size_t n = static_cast<std::size_t>(shape_[1]) * shape_[2];
  std::copy(data_.begin() + c0 * n, data_.begin() + c1 * n, out.data_.begin());
  return out;
}

Tensor Tensor::concat_channels(const std::vector<const Tensor*>& parts) {
  require(!parts.empty(), "concat of zero tensors");
  const int h = parts[0]->height(), w = parts[0]->width();
  int c = 0;
  for (const Tensor* p : parts) {
    require(p->ndim() == 3 && p->height() == h && p->width() == w, "concat spatial mismatch");
    c += p->channels();
  }
  Tensor out({c, h, w});
  auto it = out.data_.begin();
  for (const Tensor* p : parts) it = std::copy(p->data_.begin(), p->data_.end(), it);
  return out;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << ')';
  return os.str();
}

}  // namespace ido
