#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "ciss/error.hpp"

namespace ciss {

// Dense row-major tensor of doubles, up to 4 dimensions (NCHW for batches,
// CHW for single images). Contiguous storage, value semantics.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(count(shape_)), 0.0);
  }
  Tensor(std::initializer_list<int> shape) : Tensor(std::vector<int>(shape)) {}

  static int64_t count(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
      CISS_CHECK(d >= 0, shape, "negative tensor dimension");
      n *= d;
    }
    return n;
  }

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // Indexed access for 2-4D tensors; hot loops should use data() directly.
  double& at(int a, int b) { return data_[static_cast<size_t>(a) * shape_[1] + b]; }
  double at(int a, int b) const { return data_[static_cast<size_t>(a) * shape_[1] + b]; }
  double& at(int a, int b, int c) {
    return data_[(static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c];
  }
  double at(int a, int b, int c) const {
    return data_[(static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c];
  }
  double& at(int a, int b, int c, int d) {
    return data_[((static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }
  double at(int a, int b, int c, int d) const {
    return data_[((static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(0.0); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_str() const {
    std::string s = "(";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    return s + ")";
  }

private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

// Integer tensor for label maps (ids in [0, 255]).
class IntTensor {
public:
  IntTensor() = default;
  explicit IntTensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(Tensor::count(shape_)), 0);
  }
  IntTensor(std::initializer_list<int> shape) : IntTensor(std::vector<int>(shape)) {}

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }

  int32_t* data() { return data_.data(); }
  const int32_t* data() const { return data_.data(); }

  int32_t& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  int32_t operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  int32_t& at(int a, int b) { return data_[static_cast<size_t>(a) * shape_[1] + b]; }
  int32_t at(int a, int b) const { return data_[static_cast<size_t>(a) * shape_[1] + b]; }
  int32_t& at(int a, int b, int c) {
    return data_[(static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c];
  }
  int32_t at(int a, int b, int c) const {
    return data_[(static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c];
  }

  void fill(int32_t v) { std::fill(data_.begin(), data_.end(), v); }
  bool operator==(const IntTensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

private:
  std::vector<int> shape_;
  std::vector<int32_t> data_;
};

double max_abs_diff(const Tensor& a, const Tensor& b);
bool bit_equal(const Tensor& a, const Tensor& b);

} // namespace ciss
