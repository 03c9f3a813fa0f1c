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
#include <string>
#include <vector>

#include "cmsrcnn/msfusion/feature_map.hpp"
#include "cmsrcnn/msfusion/l2norm.hpp"
#include "cmsrcnn/numcore/init.hpp"
#include "cmsrcnn/numcore/param.hpp"

namespace cms::msfusion {

template <typename T>
struct AlignResult {
  std::vector<BasicFeatureMap<T>> maps;
  // Per input map: pooling factor applied (1 = untouched) and the argmax
  // routing needed by the backward pass.
  std::vector<int> factors;
  std::vector<std::vector<std::int64_t>> argmax;
  std::vector<numcore::Shape> input_shapes;
};

/// Max-pools every map down to the spatial extents of the map tagged `target`.
/// Each factor must be an exact integer matching the stride ratio.
template <typename T>
AlignResult<T> align_spatial(std::span<const BasicFeatureMap<T>> maps, Source target);

template <typename T>
std::vector<numcore::BasicTensor<T>> align_spatial_backward(
    std::span<const numcore::BasicTensor<T>> grads, const AlignResult<T>& cache);

template <typename T>
struct FuseCache {
  std::vector<numcore::BasicTensor<T>> inputs;
  std::vector<std::vector<double>> norms;
  std::vector<numcore::BasicTensor<T>> normalized;
  numcore::BasicTensor<T> concat;
};

/// normalize -> rescale -> channel concat -> 1x1 convolution, per map.
template <typename T>
BasicFeatureMap<T> fuse(std::span<const BasicFeatureMap<T>> maps,
                        std::span<const BasicScaleVector<T>> scales,
                        const numcore::BasicParam<T>& reducer_weights,
                        const numcore::BasicParam<T>& reducer_bias,
                        FuseCache<T>* cache = nullptr);

/// Returns one gradient per fused input map; parameter gradients accumulate.
template <typename T>
std::vector<numcore::BasicTensor<T>> fuse_backward(
    const numcore::BasicTensor<T>& grad_out, const FuseCache<T>& cache,
    std::span<BasicScaleVector<T>> scales, numcore::BasicParam<T>& reducer_weights,
    numcore::BasicParam<T>& reducer_bias);

/// Owns the learnable state of one fusion site: a scale vector per input
/// map and the 1x1 reducer.
template <typename T>
class BasicFusionBlock {
 public:
  BasicFusionBlock() = default;
  BasicFusionBlock(const std::string& name, std::vector<int> in_channels,
                   std::span<const double> init_scales, int out_channels,
                   numcore::Rng& rng);

  BasicFeatureMap<T> forward(std::span<const BasicFeatureMap<T>> maps,
                             FuseCache<T>* cache = nullptr) const {
    return fuse<T>(maps, scales_, weights_, bias_, cache);
  }
  std::vector<numcore::BasicTensor<T>> backward(const numcore::BasicTensor<T>& grad_out,
                                                const FuseCache<T>& cache) {
    return fuse_backward<T>(grad_out, cache, scales_, weights_, bias_);
  }

  /// Resets gamma of input `map_index` to a constant.
  void set_scale(int map_index, double value);

  std::vector<BasicScaleVector<T>>& scales() { return scales_; }
  const std::vector<BasicScaleVector<T>>& scales() const { return scales_; }
  numcore::BasicParam<T>& weights() { return weights_; }
  numcore::BasicParam<T>& bias() { return bias_; }
  const numcore::BasicParam<T>& weights() const { return weights_; }
  int in_channels() const;
  int out_channels() const { return weights_.value.dim(0); }

  numcore::ParamRefs<T> params();

 private:
  std::vector<BasicScaleVector<T>> scales_;
  numcore::BasicParam<T> weights_;
  numcore::BasicParam<T> bias_;
};

using FusionBlock = BasicFusionBlock<float>;

}  // namespace cms::msfusion
