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

#include <array>
#include <span>
#include <vector>

#include "cmsrcnn/context/head.hpp"
#include "cmsrcnn/context/roi.hpp"
#include "cmsrcnn/harness/config.hpp"
#include "cmsrcnn/harness/pgm.hpp"
#include "cmsrcnn/msfusion/fusion.hpp"
#include "cmsrcnn/numcore/init.hpp"
#include "cmsrcnn/proposal/rpn.hpp"

namespace cms::harness {

using numcore::Param;
using numcore::Tensor;
using proposal::Box;

/// Image as a (1, 1, H, W) tensor, (p - 128) / 64, zero-padded on the right
/// and bottom to a multiple of `multiple`.
Tensor image_tensor(const GrayImage& image, int multiple);

struct ConvLayer {
  Param weights;
  Param bias;
  int stride = 1;
};

struct BackboneCache {
  // Per set: pooled input shape and argmax (empty for the first set).
  std::vector<numcore::Shape> pool_input_shapes;
  std::vector<std::vector<std::int64_t>> pool_argmax;
  // Per conv layer, in order: its input and its pre-activation output.
  std::vector<Tensor> inputs;
  std::vector<Tensor> pre_activations;
};

using Taps = std::array<msfusion::FeatureMap, msfusion::kNumSources>;

/// Conv sets of 3x3 conv + ReLU; 2x2 max pooling between sets. The last
/// three sets are tapped as conv3, conv4, conv5.
class Backbone {
 public:
  Backbone() = default;
  Backbone(const BackboneConfig& config, numcore::Rng& rng);

  Taps forward(const Tensor& image, BackboneCache* cache = nullptr) const;
  /// Accumulates parameter gradients from per-tap output gradients.
  void backward(std::span<const Tensor> tap_grads, const BackboneCache& cache);

  numcore::ParamRefs<float> params();
  int max_stride() const { return strides_.back(); }
  const std::vector<int>& tap_strides() const { return strides_; }
  std::vector<int> tap_channels() const;

 private:
  std::vector<std::vector<ConvLayer>> sets_;
  std::vector<int> strides_;
};

enum class FusionSite { kRpn, kFace, kBody };

/// The fusion block the model builds for `site`: one scale vector per tapped
/// conv set, initialized from the configured constants, and the 1x1 reducer.
msfusion::FusionBlock make_fusion_block(const Config& config, FusionSite site, numcore::Rng& rng);

struct StepLosses {
  double rpn_cls = 0.0;
  double rpn_reg = 0.0;
  double det_cls = 0.0;
  double det_reg = 0.0;
  bool finite() const;
};

struct ScoredBox {
  Box box;
  double score = 0.0;
};

/// The full detector: backbone, multi-scale RPN and the contextual
/// multi-scale detection head.
class CmsRcnn {
 public:
  /// Validates `config` and initializes every weight from config.seed.
  explicit CmsRcnn(const Config& config);

  const Config& config() const { return config_; }

  /// Resets every fusion scale so each rescaled source reaches the mean
  /// activation magnitude of the raw conv5 map on the warm-up images.
  void calibrate(std::span<const GrayImage> warmup);

  /// One approximate-joint forward/backward pass on a single image.
  /// Gradients accumulate into params(); no update is applied.
  StepLosses train_step(const GrayImage& image, std::span<const Box> gt, numcore::Rng& rng);

  /// Scored face boxes after NMS, clipped to the image, above `score_floor`.
  std::vector<ScoredBox> detect(const GrayImage& image, double score_floor) const;

  numcore::ParamRefs<float> params();
  int max_stride() const { return backbone_.max_stride(); }

  msfusion::FusionBlock& rpn_fusion() { return rpn_fusion_; }
  msfusion::FusionBlock& face_fusion() { return face_fusion_; }
  msfusion::FusionBlock& body_fusion() { return body_fusion_; }

 private:
  struct RoiForward;
  RoiForward roi_forward(const Taps& taps, std::span<const Box> regions, double image_w,
                         double image_h, bool keep_cache) const;

  Config config_;
  Backbone backbone_;
  msfusion::FusionBlock rpn_fusion_;
  proposal::RpnHead rpn_head_;
  msfusion::FusionBlock face_fusion_;
  msfusion::FusionBlock body_fusion_;
  context::DetectionHead head_;
};

}  // namespace cms::harness
