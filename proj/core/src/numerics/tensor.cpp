#include "bevworld/numerics/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace bevworld::num {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) {
    if (d < 0) throw std::invalid_argument("negative dimension in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != static_cast<int64_t>(data_.size())) {
    throw std::invalid_argument("tensor: shape " + shape_str(shape_) + " does not match " +
                                std::to_string(data_.size()) + " elements");
  }
}

Tensor::Tensor(double scalar) : shape_{}, data_{scalar} {}

Tensor Tensor::zeros(const Shape& shape) {
  return Tensor(shape, std::vector<double>(static_cast<size_t>(shape_numel(shape)), 0.0));
}

Tensor Tensor::full(const Shape& shape, double v) {
  return Tensor(shape, std::vector<double>(static_cast<size_t>(shape_numel(shape)), v));
}

double Tensor::scalar() const {
  if (numel() != 1) {
    throw std::invalid_argument("scalar() on tensor of shape " + shape_str(shape_));
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

std::vector<int64_t> Tensor::strides() const {
  std::vector<int64_t> st(shape_.size(), 1);
  for (int i = static_cast<int>(shape_.size()) - 2; i >= 0; --i) {
    st[static_cast<size_t>(i)] =
        st[static_cast<size_t>(i) + 1] * shape_[static_cast<size_t>(i) + 1];
  }
  return st;
}

}  // namespace bevworld::num
