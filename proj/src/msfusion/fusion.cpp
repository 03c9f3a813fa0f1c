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

#include "cmsrcnn/msfusion/fusion.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>

#include "cmsrcnn/numcore/layers.hpp"

namespace cms::msfusion {

using numcore::BasicParam;
using numcore::BasicTensor;
using numcore::ShapeError;
using numcore::shape_str;

template <typename T>
AlignResult<T> align_spatial(std::span<const BasicFeatureMap<T>> maps, Source target) {
  const auto it = std::find_if(maps.begin(), maps.end(),
                               [&](const BasicFeatureMap<T>& m) { return m.source == target; });
  if (it == maps.end()) {
    throw std::invalid_argument(
        fmt::format("align_spatial: no map tagged {}", source_name(target)));
  }
  const int th = it->height(), tw = it->width();
  AlignResult<T> result;
  for (const BasicFeatureMap<T>& m : maps) {
    result.input_shapes.push_back(m.tensor.shape());
    if (m.height() == th && m.width() == tw) {
      result.maps.push_back(m);
      result.factors.push_back(1);
      result.argmax.emplace_back();
      continue;
    }
    if (m.height() % th != 0 || m.width() % tw != 0 || m.height() / th != m.width() / tw) {
      throw ShapeError(fmt::format(
          "align_spatial: {} map {}x{} cannot be pooled to {} size {}x{} by an integer factor",
          source_name(m.source), m.height(), m.width(), source_name(target), th, tw));
    }
    const int factor = m.height() / th;
    if (m.stride * factor != it->stride) {
      throw ShapeError(fmt::format(
          "align_spatial: {} stride {} x factor {} does not reach target stride {}",
          source_name(m.source), m.stride, factor, it->stride));
    }
    auto pooled = numcore::max_pool2d(m.tensor, factor, factor);
    result.maps.push_back(BasicFeatureMap<T>{std::move(pooled.output), it->stride, m.source});
    result.factors.push_back(factor);
    result.argmax.push_back(std::move(pooled.argmax));
  }
  return result;
}

template <typename T>
std::vector<BasicTensor<T>> align_spatial_backward(std::span<const BasicTensor<T>> grads,
                                                   const AlignResult<T>& cache) {
  if (grads.size() != cache.factors.size()) {
    throw ShapeError(fmt::format("align_spatial_backward: {} grads for {} maps", grads.size(),
                                 cache.factors.size()));
  }
  std::vector<BasicTensor<T>> out;
  out.reserve(grads.size());
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (cache.factors[i] == 1) {
      out.push_back(grads[i]);
    } else {
      out.push_back(numcore::scatter_argmax_grad(grads[i], cache.argmax[i], cache.input_shapes[i]));
    }
  }
  return out;
}

template <typename T>
BasicFeatureMap<T> fuse(std::span<const BasicFeatureMap<T>> maps,
                        std::span<const BasicScaleVector<T>> scales,
                        const BasicParam<T>& reducer_weights, const BasicParam<T>& reducer_bias,
                        FuseCache<T>* cache) {
  if (maps.empty() || maps.size() != scales.size()) {
    throw std::invalid_argument(
        fmt::format("fuse: {} maps but {} scale vectors", maps.size(), scales.size()));
  }
  const BasicFeatureMap<T>& first = maps.front();
  const int n = first.tensor.dim(0), h = first.height(), w = first.width();
  int total_c = 0;
  for (const BasicFeatureMap<T>& m : maps) {
    if (m.tensor.order() != 4 || m.tensor.dim(0) != n || m.height() != h || m.width() != w ||
        m.stride != first.stride) {
      throw ShapeError(fmt::format(
          "fuse: misaligned maps: {} {} (stride {}) vs {} {} (stride {})",
          source_name(first.source), shape_str(first.tensor.shape()), first.stride,
          source_name(m.source), shape_str(m.tensor.shape()), m.stride));
    }
    total_c += m.channels();
  }

  const int plane = h * w;
  BasicTensor<T> concat({n, total_c, h, w});
  int c_off = 0;
  if (cache) *cache = FuseCache<T>{};
  for (std::size_t i = 0; i < maps.size(); ++i) {
    auto norm = l2_normalize_forward(maps[i]);
    const BasicFeatureMap<T> scaled = scale_apply(norm.normalized, scales[i]);
    const int c = maps[i].channels();
    for (int b = 0; b < n; ++b) {
      const T* src = scaled.tensor.raw() + static_cast<std::size_t>(b) * c * plane;
      T* dst = concat.raw() + (static_cast<std::size_t>(b) * total_c + c_off) * plane;
      std::copy(src, src + static_cast<std::size_t>(c) * plane, dst);
    }
    c_off += c;
    if (cache) {
      cache->inputs.push_back(maps[i].tensor);
      cache->norms.push_back(std::move(norm.norms));
      cache->normalized.push_back(std::move(norm.normalized.tensor));
    }
  }
  BasicTensor<T> reduced = numcore::conv2d(concat, reducer_weights, reducer_bias);
  if (cache) cache->concat = std::move(concat);
  return BasicFeatureMap<T>{std::move(reduced), first.stride, maps.back().source};
}

template <typename T>
std::vector<BasicTensor<T>> fuse_backward(const BasicTensor<T>& grad_out,
                                          const FuseCache<T>& cache,
                                          std::span<BasicScaleVector<T>> scales,
                                          BasicParam<T>& reducer_weights,
                                          BasicParam<T>& reducer_bias) {
  if (cache.inputs.size() != scales.size()) {
    throw std::invalid_argument("fuse_backward: cache does not match scale vectors");
  }
  const BasicTensor<T> grad_concat =
      numcore::conv2d_backward(grad_out, cache.concat, reducer_weights, reducer_bias);
  const int n = grad_concat.dim(0), total_c = grad_concat.dim(1);
  const int plane = grad_concat.dim(2) * grad_concat.dim(3);
  std::vector<BasicTensor<T>> grads;
  int c_off = 0;
  for (std::size_t i = 0; i < cache.inputs.size(); ++i) {
    const BasicTensor<T>& input = cache.inputs[i];
    const int c = input.dim(1);
    BasicTensor<T> g_scaled(input.shape());
    for (int b = 0; b < n; ++b) {
      const T* src = grad_concat.raw() + (static_cast<std::size_t>(b) * total_c + c_off) * plane;
      std::copy(src, src + static_cast<std::size_t>(c) * plane,
                g_scaled.raw() + static_cast<std::size_t>(b) * c * plane);
    }
    c_off += c;
    const ScaleGrads<T> sg = scale_backward(g_scaled, cache.normalized[i], scales[i]);
    grads.push_back(l2_normalize_backward(sg.grad_normalized, input, cache.norms[i]));
  }
  return grads;
}

template <typename T>
BasicFusionBlock<T>::BasicFusionBlock(const std::string& name, std::vector<int> in_channels,
                                      std::span<const double> init_scales, int out_channels,
                                      numcore::Rng& rng) {
  if (in_channels.empty() || in_channels.size() != init_scales.size()) {
    throw std::invalid_argument(fmt::format("fusion block '{}': {} inputs but {} initial scales",
                                            name, in_channels.size(), init_scales.size()));
  }
  for (std::size_t i = 0; i < in_channels.size(); ++i) {
    if (!(init_scales[i] > 0.0)) {
      throw std::invalid_argument(
          fmt::format("fusion block '{}': initial scale {} must be positive", name, init_scales[i]));
    }
    scales_.emplace_back(fmt::format("{}.scale{}", name, i), in_channels[i], init_scales[i]);
  }
  const int total = std::accumulate(in_channels.begin(), in_channels.end(), 0);
  weights_ = BasicParam<T>(name + ".reduce.weight", BasicTensor<T>({out_channels, total, 1, 1}));
  bias_ = BasicParam<T>(name + ".reduce.bias", BasicTensor<T>({out_channels}));
  numcore::glorot_uniform(weights_, total, out_channels, rng);
}

template <typename T>
void BasicFusionBlock<T>::set_scale(int map_index, double value) {
  auto& s = scales_.at(map_index);
  s.gamma.value.fill(static_cast<T>(value));
  s.init_value = value;
}

template <typename T>
int BasicFusionBlock<T>::in_channels() const {
  int total = 0;
  for (const auto& s : scales_) total += s.channels();
  return total;
}

template <typename T>
numcore::ParamRefs<T> BasicFusionBlock<T>::params() {
  numcore::ParamRefs<T> refs;
  for (auto& s : scales_) refs.push_back(&s.gamma);
  refs.push_back(&weights_);
  refs.push_back(&bias_);
  return refs;
}

#define CMS_INSTANTIATE_FUSION(T)                                                            \
  template AlignResult<T> align_spatial(std::span<const BasicFeatureMap<T>>, Source);       \
  template std::vector<BasicTensor<T>> align_spatial_backward(std::span<const BasicTensor<T>>, \
                                                              const AlignResult<T>&);       \
  template BasicFeatureMap<T> fuse(std::span<const BasicFeatureMap<T>>,                      \
                                   std::span<const BasicScaleVector<T>>,                     \
                                   const BasicParam<T>&, const BasicParam<T>&, FuseCache<T>*); \
  template std::vector<BasicTensor<T>> fuse_backward(const BasicTensor<T>&,                  \
                                                     const FuseCache<T>&,                    \
                                                     std::span<BasicScaleVector<T>>,         \
                                                     BasicParam<T>&, BasicParam<T>&);        \
  template class BasicFusionBlock<T>;

CMS_INSTANTIATE_FUSION(float)
CMS_INSTANTIATE_FUSION(double)

}  // namespace cms::msfusion
