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

#include <span>

#include "cmsrcnn/numcore/tensor.hpp"

namespace cms::numcore {

/// Label value for rows that take no part in a classification loss.
inline constexpr int kIgnoreLabel = -1;

template <typename T>
struct LossResult {
  double value = 0.0;
  // d(value)/d(input), same shape as the scored tensor.
  BasicTensor<T> grad;
};

/// Mean -log softmax(logits)[label] over rows whose label is not ignored.
/// logits is (N, C). When every row is ignored the loss is 0 with zero grad.
template <typename T>
LossResult<T> softmax_cross_entropy(const BasicTensor<T>& logits,
                                    std::span<const int> labels);

/// sum(w * f(pred - target)) / (#rows with any nonzero weight), where
/// f(d) = 0.5 d^2 for |d| < 1 and |d| - 0.5 otherwise. Rows are the leading
/// axis.
template <typename T>
LossResult<T> smooth_l1(const BasicTensor<T>& pred, const BasicTensor<T>& target,
                        const BasicTensor<T>& weights);

/// Row-wise softmax of an (N, C) tensor.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

}  // namespace cms::numcore
