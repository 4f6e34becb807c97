#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bevworld::num {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

/// Dense row-major tensor of doubles. Plain value type: no graph state.
/// All training and test arithmetic runs at 64-bit; narrower precision
/// exists only in the checkpoint codec.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);
  explicit Tensor(double scalar);

  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, double v);

  const Shape& shape() const { return shape_; }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  /// Value of a rank-0/rank-1 single-element tensor.
  double scalar() const;

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;

  void fill(double v);

  /// Strides in elements, row-major.
  std::vector<int64_t> strides() const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace bevworld::num
