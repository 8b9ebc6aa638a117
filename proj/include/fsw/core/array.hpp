#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fsw/errors.hpp"

namespace fsw {

/// Dense row-major array of doubles. This is the raw value storage used
/// underneath autograd tensors; it has no gradient bookkeeping of its own.
class Array {
 public:
  Array() = default;

  explicit Array(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(count(shape_)), 0.0);
  }

  Array(std::vector<int> shape, double fill) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(count(shape_)), fill);
  }

  static Array from(std::vector<int> shape, std::vector<double> data) {
    Array a;
    if (count(shape) != static_cast<int64_t>(data.size()))
      throw ShapeMismatch("Array::from: data size does not match shape " + to_string(shape));
    a.shape_ = std::move(shape);
    a.data_ = std::move(data);
    return a;
  }

  static Array scalar(double v) { return from({1}, {v}); }

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  /// 4-d accessor, shape must be [N,C,H,W].
  double& at(int n, int c, int h, int w) {
    return data_[((static_cast<size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  double at(int n, int c, int h, int w) const {
    return data_[((static_cast<size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  bool same_shape(const Array& o) const { return shape_ == o.shape_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Array reshaped(std::vector<int> shape) const {
    if (count(shape) != numel())
      throw ShapeMismatch("reshape: cannot view " + shape_str() + " as " + to_string(shape));
    Array a = *this;
    a.shape_ = std::move(shape);
    return a;
  }

  std::string shape_str() const { return to_string(shape_); }

  static int64_t count(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw ShapeMismatch("non-positive dimension in shape " + to_string(shape));
      n *= d;
    }
    return n;
  }

  static std::string to_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
  }

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

}  // namespace fsw
