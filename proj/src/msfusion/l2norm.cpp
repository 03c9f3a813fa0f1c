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

#include "cmsrcnn/msfusion/l2norm.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace cms::msfusion {

using numcore::BasicTensor;
using numcore::ShapeError;
using numcore::shape_str;

template <typename T>
L2NormResult<T> l2_normalize_forward(const BasicFeatureMap<T>& map) {
  const BasicTensor<T>& x = map.tensor;
  if (x.order() != 4) {
    throw ShapeError("l2_normalize_forward: expected 4-order map, got " + shape_str(x.shape()));
  }
  const int n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  L2NormResult<T> result{BasicFeatureMap<T>{BasicTensor<T>(x.shape()), map.stride, map.source},
                         std::vector<double>(static_cast<std::size_t>(n) * plane)};
  std::vector<double> sq(plane);
  for (int b = 0; b < n; ++b) {
    const T* src = x.raw() + static_cast<std::size_t>(b) * c * plane;
    T* dst = result.normalized.tensor.raw() + static_cast<std::size_t>(b) * c * plane;
    std::fill(sq.begin(), sq.end(), 0.0);
    for (int ch = 0; ch < c; ++ch) {
      const T* row = src + static_cast<std::size_t>(ch) * plane;
      for (int p = 0; p < plane; ++p) sq[p] += static_cast<double>(row[p]) * row[p];
    }
    double* norms = result.norms.data() + static_cast<std::size_t>(b) * plane;
    for (int p = 0; p < plane; ++p) norms[p] = std::max(std::sqrt(sq[p]), kNormEpsilon);
    for (int ch = 0; ch < c; ++ch) {
      const T* row = src + static_cast<std::size_t>(ch) * plane;
      T* out = dst + static_cast<std::size_t>(ch) * plane;
      for (int p = 0; p < plane; ++p) out[p] = static_cast<T>(row[p] / norms[p]);
    }
  }
  return result;
}

template <typename T>
BasicTensor<T> l2_normalize_backward(const BasicTensor<T>& grad_out,
                                     const BasicTensor<T>& input,
                                     std::span<const double> norms) {
  if (!grad_out.same_shape(input) || input.order() != 4) {
    throw ShapeError(fmt::format("l2_normalize_backward: grad_out {} vs input {}",
                                 shape_str(grad_out.shape()), shape_str(input.shape())));
  }
  const int n = input.dim(0), c = input.dim(1), plane = input.dim(2) * input.dim(3);
  if (norms.size() != static_cast<std::size_t>(n) * plane) {
    throw ShapeError(fmt::format("l2_normalize_backward: {} cached norms for {} pixels",
                                 norms.size(), static_cast<std::size_t>(n) * plane));
  }
  BasicTensor<T> grad_in(input.shape());
  std::vector<double> dot(plane);
  for (int b = 0; b < n; ++b) {
    const std::size_t base = static_cast<std::size_t>(b) * c * plane;
    const T* x = input.raw() + base;
    const T* g = grad_out.raw() + base;
    T* gi = grad_in.raw() + base;
    const double* nrm = norms.data() + static_cast<std::size_t>(b) * plane;
    std::fill(dot.begin(), dot.end(), 0.0);
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t off = static_cast<std::size_t>(ch) * plane;
      for (int p = 0; p < plane; ++p) dot[p] += static_cast<double>(x[off + p]) * g[off + p];
    }
    // g/|x| - x (x.g)/|x|^3
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t off = static_cast<std::size_t>(ch) * plane;
      for (int p = 0; p < plane; ++p) {
        const double norm = nrm[p];
        if (norm <= kNormEpsilon) {
          gi[off + p] = T(0);
          continue;
        }
        gi[off + p] = static_cast<T>(g[off + p] / norm -
                                     x[off + p] * dot[p] / (norm * norm * norm));
      }
    }
  }
  return grad_in;
}

template <typename T>
BasicFeatureMap<T> scale_apply(const BasicFeatureMap<T>& normalized,
                               const BasicScaleVector<T>& scale) {
  const BasicTensor<T>& x = normalized.tensor;
  if (x.order() != 4 || x.dim(1) != scale.channels()) {
    throw ShapeError(fmt::format("scale_apply: map {} vs {} scale channels",
                                 shape_str(x.shape()), scale.channels()));
  }
  BasicFeatureMap<T> out{BasicTensor<T>(x.shape()), normalized.stride, normalized.source};
  const int n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
      const T gamma = scale.gamma.value[ch];
      for (int p = 0; p < plane; ++p) out.tensor[off + p] = gamma * x[off + p];
    }
  }
  return out;
}

template <typename T>
ScaleGrads<T> scale_backward(const BasicTensor<T>& grad_out, const BasicTensor<T>& normalized,
                             BasicScaleVector<T>& scale) {
  if (!grad_out.same_shape(normalized) || normalized.order() != 4 ||
      normalized.dim(1) != scale.channels()) {
    throw ShapeError(fmt::format("scale_backward: grad_out {} / map {} vs {} scale channels",
                                 shape_str(grad_out.shape()), shape_str(normalized.shape()),
                                 scale.channels()));
  }
  const int n = normalized.dim(0), c = normalized.dim(1),
            plane = normalized.dim(2) * normalized.dim(3);
  ScaleGrads<T> grads{BasicTensor<T>(normalized.shape()), BasicTensor<T>({c})};
  std::vector<double> gg(c, 0.0);
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
      const T gamma = scale.gamma.value[ch];
      double acc = 0.0;
      for (int p = 0; p < plane; ++p) {
        grads.grad_normalized[off + p] = gamma * grad_out[off + p];
        acc += static_cast<double>(grad_out[off + p]) * normalized[off + p];
      }
      gg[ch] += acc;
    }
  }
  for (int ch = 0; ch < c; ++ch) {
    grads.grad_gamma[ch] = static_cast<T>(gg[ch]);
    scale.gamma.grad[ch] += static_cast<T>(gg[ch]);
  }
  return grads;
}

#define CMS_INSTANTIATE_L2(T)                                                               \
  template L2NormResult<T> l2_normalize_forward(const BasicFeatureMap<T>&);                 \
  template BasicTensor<T> l2_normalize_backward(const BasicTensor<T>&, const BasicTensor<T>&, \
                                                std::span<const double>);                  \
  template BasicFeatureMap<T> scale_apply(const BasicFeatureMap<T>&,                        \
                                          const BasicScaleVector<T>&);                      \
  template ScaleGrads<T> scale_backward(const BasicTensor<T>&, const BasicTensor<T>&,       \
                                        BasicScaleVector<T>&);

CMS_INSTANTIATE_L2(float)
CMS_INSTANTIATE_L2(double)

}  // namespace cms::msfusion
