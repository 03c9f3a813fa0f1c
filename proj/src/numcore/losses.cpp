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

#include "cmsrcnn/numcore/losses.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace cms::numcore {
namespace {

template <typename T>
void require_rows(const BasicTensor<T>& logits) {
  if (logits.order() != 2) {
    throw ShapeError("expected (rows, classes) logits, got " +
                     shape_str(logits.shape()));
  }
}

}  // namespace

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  require_rows(logits);
  const int rows = logits.dim(0), classes = logits.dim(1);
  BasicTensor<T> out(logits.shape());
  for (int r = 0; r < rows; ++r) {
    const T* z = logits.raw() + static_cast<std::size_t>(r) * classes;
    const double zmax = *std::max_element(z, z + classes);
    double total = 0.0;
    for (int c = 0; c < classes; ++c) total += std::exp(static_cast<double>(z[c]) - zmax);
    for (int c = 0; c < classes; ++c) {
      out[static_cast<std::size_t>(r) * classes + c] =
          static_cast<T>(std::exp(static_cast<double>(z[c]) - zmax) / total);
    }
  }
  return out;
}

template <typename T>
LossResult<T> softmax_cross_entropy(const BasicTensor<T>& logits,
                                    std::span<const int> labels) {
  require_rows(logits);
  const int rows = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != static_cast<std::size_t>(rows)) {
    throw ShapeError(fmt::format("softmax_cross_entropy: {} labels for {} rows",
                                 labels.size(), rows));
  }
  int count = 0;
  for (int label : labels) {
    if (label == kIgnoreLabel) continue;
    if (label < 0 || label >= classes) {
      throw std::invalid_argument(fmt::format(
          "softmax_cross_entropy: label {} outside [0, {})", label, classes));
    }
    ++count;
  }
  LossResult<T> result{0.0, BasicTensor<T>(logits.shape())};
  if (count == 0) return result;

  std::vector<double> p(classes);
  double total_loss = 0.0;
  for (int r = 0; r < rows; ++r) {
    const int label = labels[r];
    if (label == kIgnoreLabel) continue;
    const T* z = logits.raw() + static_cast<std::size_t>(r) * classes;
    const double zmax = *std::max_element(z, z + classes);
    double total = 0.0;
    for (int c = 0; c < classes; ++c) {
      p[c] = std::exp(static_cast<double>(z[c]) - zmax);
      total += p[c];
    }
    // -log softmax = log(sum exp(z - zmax)) - (z_label - zmax)
    total_loss += std::log(total) - (static_cast<double>(z[label]) - zmax);
    T* g = result.grad.raw() + static_cast<std::size_t>(r) * classes;
    for (int c = 0; c < classes; ++c) {
      const double onehot = c == label ? 1.0 : 0.0;
      g[c] = static_cast<T>((p[c] / total - onehot) / count);
    }
  }
  result.value = total_loss / count;
  return result;
}

template <typename T>
LossResult<T> smooth_l1(const BasicTensor<T>& pred, const BasicTensor<T>& target,
                        const BasicTensor<T>& weights) {
  if (!pred.same_shape(target) || !pred.same_shape(weights)) {
    throw ShapeError(fmt::format("smooth_l1: shapes differ: pred {}, target {}, weights {}",
                                 shape_str(pred.shape()), shape_str(target.shape()),
                                 shape_str(weights.shape())));
  }
  LossResult<T> result{0.0, BasicTensor<T>(pred.shape())};
  const int rows = pred.dim(0);
  const std::size_t width = pred.size() / rows;
  int weighted_rows = 0;
  for (int r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < width; ++j) {
      if (weights[r * width + j] != T(0)) {
        ++weighted_rows;
        break;
      }
    }
  }
  if (weighted_rows == 0) return result;
  const double norm = 1.0 / weighted_rows;
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double w = weights[i];
    if (w == 0.0) continue;
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    const double ad = std::abs(d);
    if (ad < 1.0) {
      total += w * 0.5 * d * d;
      result.grad[i] = static_cast<T>(w * d * norm);
    } else {
      total += w * (ad - 0.5);
      result.grad[i] = static_cast<T>(w * (d > 0 ? 1.0 : -1.0) * norm);
    }
  }
  result.value = total * norm;
  return result;
}

#define CMS_INSTANTIATE_LOSSES(T)                                                    \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                            \
  template LossResult<T> softmax_cross_entropy(const BasicTensor<T>&,                \
                                               std::span<const int>);                \
  template LossResult<T> smooth_l1(const BasicTensor<T>&, const BasicTensor<T>&,     \
                                   const BasicTensor<T>&);

CMS_INSTANTIATE_LOSSES(float)
CMS_INSTANTIATE_LOSSES(double)

}  // namespace cms::numcore
