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
#include <vector>

#include "cmsrcnn/msfusion/feature_map.hpp"
#include "cmsrcnn/numcore/param.hpp"

namespace cms::msfusion {

/// Lower clamp on a pixel's channel norm; pixels at or below it normalize to
/// x / eps and receive zero gradient.
inline constexpr double kNormEpsilon = 1e-12;

template <typename T>
struct L2NormResult {
  BasicFeatureMap<T> normalized;
  // One clamped norm per (n, y, x), row-major.
  std::vector<double> norms;
};

/// Replaces every pixel's channel vector x by x / max(||x||_2, eps).
template <typename T>
L2NormResult<T> l2_normalize_forward(const BasicFeatureMap<T>& map);

/// Per-pixel Jacobian-vector product g (I/||x|| - x x^T / ||x||^3).
template <typename T>
numcore::BasicTensor<T> l2_normalize_backward(const numcore::BasicTensor<T>& grad_out,
                                              const numcore::BasicTensor<T>& input,
                                              std::span<const double> norms);

/// Per-channel learnable rescaling y_i = gamma_i * x_i.
template <typename T>
struct BasicScaleVector {
  numcore::BasicParam<T> gamma;
  double init_value = 1.0;

  BasicScaleVector() = default;
  BasicScaleVector(std::string name, int channels, double init)
      : gamma(std::move(name), numcore::BasicTensor<T>({channels}, static_cast<T>(init))),
        init_value(init) {}

  int channels() const { return static_cast<int>(gamma.value.size()); }
};

using ScaleVector = BasicScaleVector<float>;

template <typename T>
BasicFeatureMap<T> scale_apply(const BasicFeatureMap<T>& normalized,
                               const BasicScaleVector<T>& scale);

template <typename T>
struct ScaleGrads {
  numcore::BasicTensor<T> grad_normalized;
  numcore::BasicTensor<T> grad_gamma;
};

/// grad_gamma[i] = sum over batch and positions of grad_out * normalized at
/// channel i. Also accumulated into scale.gamma.grad.
template <typename T>
ScaleGrads<T> scale_backward(const numcore::BasicTensor<T>& grad_out,
                             const numcore::BasicTensor<T>& normalized,
                             BasicScaleVector<T>& scale);

}  // namespace cms::msfusion
