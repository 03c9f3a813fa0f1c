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
#include <string>
#include <vector>

#include "cmsrcnn/msfusion/feature_map.hpp"
#include "cmsrcnn/numcore/init.hpp"
#include "cmsrcnn/numcore/param.hpp"
#include "cmsrcnn/proposal/anchors.hpp"

namespace cms::proposal {

/// Per-cell head outputs. logits is (N, 2A, H, W) with channels
/// (background, face) per anchor; deltas is (N, 4A, H, W).
template <typename T>
struct RpnOutput {
  numcore::BasicTensor<T> logits;
  numcore::BasicTensor<T> deltas;
};

template <typename T>
struct RpnCache {
  numcore::BasicTensor<T> input;
  numcore::BasicTensor<T> pre_activation;
  numcore::BasicTensor<T> hidden;
};

/// 3x3 conv + ReLU, then sibling 1x1 convs for objectness and box deltas.
template <typename T>
class BasicRpnHead {
 public:
  BasicRpnHead() = default;
  BasicRpnHead(const std::string& name, int in_channels, int hidden_channels,
               int anchors_per_cell, numcore::Rng& rng);

  RpnOutput<T> forward(const numcore::BasicTensor<T>& fused, RpnCache<T>* cache = nullptr) const;

  /// Returns the gradient with respect to the fused map.
  numcore::BasicTensor<T> backward(const RpnOutput<T>& grads, const RpnCache<T>& cache);

  int anchors_per_cell() const { return anchors_per_cell_; }
  numcore::ParamRefs<T> params();

 private:
  int anchors_per_cell_ = 0;
  numcore::BasicParam<T> conv_w_, conv_b_;
  numcore::BasicParam<T> cls_w_, cls_b_;
  numcore::BasicParam<T> reg_w_, reg_b_;
};

using RpnHead = BasicRpnHead<float>;

/// Gathers per-cell outputs into (anchors, k) rows in generate_anchors order,
/// where k is 2 for logits and 4 for deltas.
template <typename T>
numcore::BasicTensor<T> anchor_rows(const numcore::BasicTensor<T>& per_cell, int k);

template <typename T>
numcore::BasicTensor<T> anchor_rows_backward(const numcore::BasicTensor<T>& grad_rows,
                                             const numcore::Shape& per_cell_shape, int k);

struct ProposalConfig {
  int pre_nms_topk = 2000;
  int post_nms_topk = 300;
  double nms_threshold = 0.7;
  double min_size = 2.0;
};

struct Proposal {
  Box box;
  double objectness = 0.0;
};

/// decode -> clip -> min-size filter -> top pre_nms_topk -> NMS -> top
/// post_nms_topk. `anchors` must match the head output layout.
template <typename T>
std::vector<Proposal> propose_from_outputs(const RpnOutput<T>& output,
                                           std::span<const Anchor> anchors, double image_w,
                                           double image_h, const ProposalConfig& config);

template <typename T>
std::vector<Proposal> propose(const msfusion::BasicFeatureMap<T>& fused,
                              const BasicRpnHead<T>& head, std::span<const double> scales,
                              std::span<const double> ratios, double image_w, double image_h,
                              const ProposalConfig& config);

}  // namespace cms::proposal
