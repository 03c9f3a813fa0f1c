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

#include <cstdint>
#include <span>
#include <vector>

#include "cmsrcnn/numcore/param.hpp"
#include "cmsrcnn/numcore/tensor.hpp"

// Forward and hand-written backward passes for the dense layers used by the
// detector. Backward functions return the gradient with respect to the layer
// input and *accumulate* parameter gradients into Param::grad.

namespace cms::numcore {

struct ConvGeometry {
  int stride = 1;
  int pad = 0;
};

/// 2-D cross-correlation. input (N, C, H, W); weights (O, C, kH, kW); bias (O).
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input,
                      const BasicParam<T>& weights, const BasicParam<T>& bias,
                      ConvGeometry geom = {});

template <typename T>
BasicTensor<T> conv2d_backward(const BasicTensor<T>& grad_out,
                               const BasicTensor<T>& input,
                               BasicParam<T>& weights, BasicParam<T>& bias,
                               ConvGeometry geom = {});

template <typename T>
struct PoolResult {
  BasicTensor<T> output;
  // Flat input offset of the element selected for each output element.
  std::vector<std::int64_t> argmax;
};

/// k x k max pooling without padding. Ties resolve to the first row-major
/// position in the window.
template <typename T>
PoolResult<T> max_pool2d(const BasicTensor<T>& input, int k, int stride);

/// Routes each output gradient to its recorded argmax; shared by RoI pooling.
template <typename T>
BasicTensor<T> scatter_argmax_grad(const BasicTensor<T>& grad_out,
                                   std::span<const std::int64_t> argmax,
                                   const Shape& input_shape);

template <typename T>
BasicTensor<T> max_pool2d_backward(const BasicTensor<T>& grad_out,
                                   std::span<const std::int64_t> argmax,
                                   const Shape& input_shape) {
  return scatter_argmax_grad(grad_out, argmax, input_shape);
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);

/// Gradient passes where input > 0; the subgradient at exactly 0 is 0.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& grad_out,
                             const BasicTensor<T>& input);

/// y = W x + b per batch row. The input is flattened to (N, in_dim).
template <typename T>
BasicTensor<T> fully_connected(const BasicTensor<T>& input,
                               const BasicParam<T>& weights,
                               const BasicParam<T>& bias);

template <typename T>
BasicTensor<T> fully_connected_backward(const BasicTensor<T>& grad_out,
                                        const BasicTensor<T>& input,
                                        BasicParam<T>& weights,
                                        BasicParam<T>& bias);

}  // namespace cms::numcore
