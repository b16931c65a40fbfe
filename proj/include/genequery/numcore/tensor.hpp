#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "genequery/common.hpp"

namespace gq::num {

// Dense row-major tensor. T is float in training mode and double on the
// gradient-verification path.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), v_(count(shape_), T(0)) {}

  Tensor(std::vector<std::size_t> shape, std::vector<T> values)
      : shape_(std::move(shape)), v_(std::move(values)) {
    if (v_.size() != count(shape_)) {
      fail(errc::shape, "tensor value count " + std::to_string(v_.size()) +
                            " does not match shape product " + std::to_string(count(shape_)));
    }
  }

  static Tensor full(std::vector<std::size_t> shape, T value) {
    Tensor t(std::move(shape));
    for (auto& x : t.v_) x = value;
    return t;
  }

  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return v_.size(); }

  // Rank-2 helpers; a rank-1 tensor acts as a single row.
  std::size_t rows() const { return rank() == 1 ? 1 : shape_[0]; }
  std::size_t cols() const { return rank() == 1 ? shape_[0] : shape_[rank() - 1]; }

  T* data() { return v_.data(); }
  const T* data() const { return v_.data(); }
  T& operator[](std::size_t i) { return v_[i]; }
  const T& operator[](std::size_t i) const { return v_[i]; }
  T& at(std::size_t r, std::size_t c) { return v_[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return v_[r * cols() + c]; }

  auto begin() { return v_.begin(); }
  auto end() { return v_.end(); }
  auto begin() const { return v_.begin(); }
  auto end() const { return v_.end(); }

  bool all_finite() const {
    for (T x : v_) {
      if (!std::isfinite(static_cast<double>(x))) return false;
    }
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void fill(T value) {
    for (auto& x : v_) x = value;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < v_.size(); ++i) out[i] = static_cast<U>(v_[i]);
    return out;
  }

 private:
  static std::size_t count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t(1), std::multiplies<>());
  }

  std::vector<std::size_t> shape_;
  std::vector<T> v_;
};

}  // namespace gq::num
