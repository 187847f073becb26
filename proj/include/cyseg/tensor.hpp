#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace cyseg {

// Dense row-major tensor of doubles. Rank is dynamic but in practice
// everything here is (C,H,W) or (H,W) or flat parameter storage.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape, double fill = 0.0)
      : shape_(std::move(shape)) {
    for (int d : shape_)
      if (d <= 0) throw std::invalid_argument("Tensor: non-positive dim");
    data_.assign(numel_(), fill);
  }

  static Tensor from(std::vector<int> shape, std::vector<double> values) {
    Tensor t;
    t.shape_ = std::move(shape);
    if (static_cast<std::int64_t>(values.size()) != t.numel_())
      throw std::invalid_argument("Tensor::from: size mismatch");
    t.data_ = std::move(values);
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_.at(i); }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::int64_t i) { return data_[i]; }
  double operator[](std::int64_t i) const { return data_[i]; }

  // (c,h,w) accessors for rank-3 tensors
  double& at(int c, int h, int w) {
    return data_[(static_cast<std::int64_t>(c) * shape_[1] + h) * shape_[2] + w];
  }
  double at(int c, int h, int w) const {
    return data_[(static_cast<std::int64_t>(c) * shape_[1] + h) * shape_[2] + w];
  }
  // (h,w) accessors for rank-2 tensors
  double& at(int h, int w) { return data_[static_cast<std::int64_t>(h) * shape_[1] + w]; }
  double at(int h, int w) const { return data_[static_cast<std::int64_t>(h) * shape_[1] + w]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor& operator+=(const Tensor& o) {
    check_same_(o);
    for (std::int64_t i = 0; i < size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Tensor& operator-=(const Tensor& o) {
    check_same_(o);
    for (std::int64_t i = 0; i < size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Tensor& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
  friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
  friend Tensor operator*(Tensor a, double s) { return a *= s; }

  bool operator==(const Tensor& o) const {
    return shape_ == o.shape_ && data_ == o.data_;
  }

  double sum_sq() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return s;
  }

  std::string shape_str() const {
    std::string s = "(";
    for (size_t i = 0; i < shape_.size(); ++i)
      s += (i ? "," : "") + std::to_string(shape_[i]);
    return s + ")";
  }

 private:
  std::int64_t numel_() const {
    std::int64_t n = 1;
    for (int d : shape_) n *= d;
    return n;
  }
  void check_same_(const Tensor& o) const {
    if (shape_ != o.shape_)
      throw std::invalid_argument("Tensor: shape mismatch " + shape_str());
  }

  std::vector<int> shape_;
  std::vector<double> data_;
};

}  // namespace cyseg
