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

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmsrcnn/numcore/init.hpp"
#include "cmsrcnn/numcore/param.hpp"
#include "cmsrcnn/proposal/anchors.hpp"
#include "cmsrcnn/proposal/box.hpp"

namespace cms::context {

template <typename T>
struct HeadOutput {
  numcore::BasicTensor<T> logits;  // (R, 2): background, face
  numcore::BasicTensor<T> deltas;  // (R, 4): face box refinement vs the proposal
};

template <typename T>
struct HeadCache {
  numcore::BasicTensor<T> face_in, face_pre1, face_act1, face_pre2;
  numcore::BasicTensor<T> body_in, body_pre1, body_act1, body_pre2;
  numcore::BasicTensor<T> joint;
  numcore::Shape face_shape, body_shape;
};

template <typename T>
struct HeadInputGrads {
  numcore::BasicTensor<T> face;
  numcore::BasicTensor<T> body;  // empty when the body pipeline is disabled
};

/// Late-fusion detection head: face and body blobs each pass two FC+ReLU
/// layers, the two representations are concatenated (face first) and feed
/// sibling classification and regression layers. A zero body width disables
/// the body pipeline entirely.
template <typename T>
class BasicDetectionHead {
 public:
  BasicDetectionHead() = default;
  BasicDetectionHead(const std::string& name, int face_dim, int body_dim, int hidden,
                     numcore::Rng& rng);

  bool context_enabled() const { return body_dim_ > 0; }
  int hidden() const { return hidden_; }

  HeadOutput<T> forward(const numcore::BasicTensor<T>& face_blob,
                        const numcore::BasicTensor<T>* body_blob,
                        HeadCache<T>* cache = nullptr) const;

  HeadInputGrads<T> backward(const HeadOutput<T>& grads, const HeadCache<T>& cache);

  numcore::ParamRefs<T> params();
  numcore::ParamRefs<T> body_params();

  numcore::BasicParam<T>& cls_weights() { return cls_w_; }
  numcore::BasicParam<T>& reg_weights() { return reg_w_; }

 private:
  int face_dim_ = 0, body_dim_ = 0, hidden_ = 0;
  numcore::BasicParam<T> face_fc1_w_, face_fc1_b_, face_fc2_w_, face_fc2_b_;
  numcore::BasicParam<T> body_fc1_w_, body_fc1_b_, body_fc2_w_, body_fc2_b_;
  numcore::BasicParam<T> cls_w_, cls_b_, reg_w_, reg_b_;
};

using DetectionHead = BasicDetectionHead<float>;

inline constexpr int kPositive = 1;
inline constexpr int kNegative = 0;
inline constexpr int kIgnored = -1;

struct TargetAssignment {
  std::vector<int> labels;           // kPositive / kNegative / kIgnored
  std::vector<int> matched_gt;       // -1 when there is no ground truth
  std::vector<double> max_iou;
  std::vector<proposal::Deltas> targets;  // meaningful for positives only
};

/// Positive when max IoU >= pos_iou or the region is a best match for some
/// ground truth; negative when max IoU < neg_iou; ignored otherwise.
TargetAssignment assign_targets(std::span<const proposal::Box> regions,
                                std::span<const proposal::Box> gt, double pos_iou,
                                double neg_iou);

template <typename T>
struct DetectionLoss {
  double cls = 0.0;
  double reg = 0.0;
  double total = 0.0;
  HeadOutput<T> grads;
};

/// softmax cross-entropy over labeled rows + lambda * smooth-L1 over
/// positive rows. Ignored rows contribute nothing.
template <typename T>
DetectionLoss<T> detection_loss(const HeadOutput<T>& out, std::span<const int> labels,
                                std::span<const proposal::Deltas> targets, double lambda);

}  // namespace cms::context
