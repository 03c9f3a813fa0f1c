/* Copyright 2026 The cmsrcnn Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cms::numcore {

/// Raised when tensor extents are inconsistent with an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Extents in batch x channel x height x width order (at most four axes).
using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

inline void validate_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 4) {
    throw ShapeError("tensor order must be in [1, 4], got shape " +
                     shape_str(shape));
  }
  for (int d : shape) {
    if (d <= 0) {
      throw ShapeError("tensor extents must be positive, got shape " +
                       shape_str(shape));
    }
  }
}

/// Dense row-major array with an optional gradient buffer of the same length.
///
/// A default-constructed tensor is empty (no shape, no data). Every other
/// tensor satisfies size() == product(shape()).
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(shape_numel(shape_), fill);
  }

  BasicTensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (data_.size() != shape_numel(shape_)) {
      throw ShapeError("data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  int order() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const {
    if (axis < 0) axis += order();
    if (axis < 0 || axis >= order()) {
      throw ShapeError("axis out of range for shape " + shape_str(shape_));
    }
    return shape_[axis];
  }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* raw() { return data_.data(); }
  const T* raw() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // 4-order accessors; no bounds checking beyond the vector's.
  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) *
               shape_[3] +
           w;
  }
  T& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  const T& at(int n, int c, int h, int w) const {
    return data_[offset(n, c, h, w)];
  }

  bool has_grad() const { return !grad_.empty(); }
  void ensure_grad() {
    if (grad_.size() != data_.size()) grad_.assign(data_.size(), T(0));
  }
  void clear_grad() { grad_.clear(); }
  std::span<T> grad() { return grad_; }
  std::span<const T> grad() const { return grad_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  BasicTensor reshaped(Shape shape) const& {
    BasicTensor copy = *this;
    return std::move(copy).reshaped(std::move(shape));
  }
  BasicTensor reshaped(Shape shape) && {
    validate_shape(shape);
    if (shape_numel(shape) != data_.size()) {
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " +
                       shape_str(shape));
    }
    shape_ = std::move(shape);
    return std::move(*this);
  }

  template <typename U>
  BasicTensor<U> cast() const {
    if (empty()) return {};
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  bool all_finite() const {
    auto finite = [](T v) { return std::isfinite(v); };
    return std::all_of(data_.begin(), data_.end(), finite) &&
           std::all_of(grad_.begin(), grad_.end(), finite);
  }

  bool same_shape(const BasicTensor& other) const {
    return shape_ == other.shape_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
  std::vector<T> grad_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

}  // namespace cms::numcore
