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

#include "cmsrcnn/proposal/rpn.hpp"

#include <fmt/format.h>

#include <algorithm>

#include "cmsrcnn/numcore/layers.hpp"
#include "cmsrcnn/numcore/losses.hpp"
#include "cmsrcnn/proposal/nms.hpp"

namespace cms::proposal {

using numcore::BasicParam;
using numcore::BasicTensor;
using numcore::ShapeError;
using numcore::shape_str;

template <typename T>
BasicRpnHead<T>::BasicRpnHead(const std::string& name, int in_channels, int hidden_channels,
                              int anchors_per_cell, numcore::Rng& rng)
    : anchors_per_cell_(anchors_per_cell),
      conv_w_(name + ".conv.weight", BasicTensor<T>({hidden_channels, in_channels, 3, 3})),
      conv_b_(name + ".conv.bias", BasicTensor<T>({hidden_channels})),
      cls_w_(name + ".cls.weight", BasicTensor<T>({2 * anchors_per_cell, hidden_channels, 1, 1})),
      cls_b_(name + ".cls.bias", BasicTensor<T>({2 * anchors_per_cell})),
      reg_w_(name + ".reg.weight", BasicTensor<T>({4 * anchors_per_cell, hidden_channels, 1, 1})),
      reg_b_(name + ".reg.bias", BasicTensor<T>({4 * anchors_per_cell})) {
  numcore::glorot_uniform(conv_w_, in_channels * 9, hidden_channels * 9, rng);
  numcore::glorot_uniform(cls_w_, hidden_channels, 2 * anchors_per_cell, rng);
  numcore::glorot_uniform(reg_w_, hidden_channels, 4 * anchors_per_cell, rng);
}

template <typename T>
RpnOutput<T> BasicRpnHead<T>::forward(const BasicTensor<T>& fused, RpnCache<T>* cache) const {
  BasicTensor<T> pre = numcore::conv2d(fused, conv_w_, conv_b_, {1, 1});
  BasicTensor<T> hidden = numcore::relu(pre);
  RpnOutput<T> out{numcore::conv2d(hidden, cls_w_, cls_b_), numcore::conv2d(hidden, reg_w_, reg_b_)};
  if (cache) {
    cache->input = fused;
    cache->pre_activation = std::move(pre);
    cache->hidden = std::move(hidden);
  }
  return out;
}

template <typename T>
BasicTensor<T> BasicRpnHead<T>::backward(const RpnOutput<T>& grads, const RpnCache<T>& cache) {
  BasicTensor<T> g_hidden = numcore::conv2d_backward(grads.logits, cache.hidden, cls_w_, cls_b_);
  const BasicTensor<T> g_reg = numcore::conv2d_backward(grads.deltas, cache.hidden, reg_w_, reg_b_);
  for (std::size_t i = 0; i < g_hidden.size(); ++i) g_hidden[i] += g_reg[i];
  const BasicTensor<T> g_pre = numcore::relu_backward(g_hidden, cache.pre_activation);
  return numcore::conv2d_backward(g_pre, cache.input, conv_w_, conv_b_, {1, 1});
}

template <typename T>
numcore::ParamRefs<T> BasicRpnHead<T>::params() {
  return {&conv_w_, &conv_b_, &cls_w_, &cls_b_, &reg_w_, &reg_b_};
}

template <typename T>
BasicTensor<T> anchor_rows(const BasicTensor<T>& per_cell, int k) {
  if (per_cell.order() != 4 || per_cell.dim(1) % k != 0) {
    throw ShapeError(fmt::format("anchor_rows: {} is not (N, A*{}, H, W)",
                                 shape_str(per_cell.shape()), k));
  }
  const int n = per_cell.dim(0), a = per_cell.dim(1) / k, h = per_cell.dim(2), w = per_cell.dim(3);
  BasicTensor<T> rows({n * h * w * a, k});
  std::size_t r = 0;
  for (int b = 0; b < n; ++b)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int i = 0; i < a; ++i, ++r)
          for (int j = 0; j < k; ++j) rows[r * k + j] = per_cell.at(b, i * k + j, y, x);
  return rows;
}

template <typename T>
BasicTensor<T> anchor_rows_backward(const BasicTensor<T>& grad_rows,
                                    const numcore::Shape& per_cell_shape, int k) {
  BasicTensor<T> grad(per_cell_shape);
  const int n = per_cell_shape[0], a = per_cell_shape[1] / k, h = per_cell_shape[2],
            w = per_cell_shape[3];
  if (grad_rows.size() != grad.size()) {
    throw ShapeError(fmt::format("anchor_rows_backward: {} rows for per-cell shape {}",
                                 shape_str(grad_rows.shape()), shape_str(per_cell_shape)));
  }
  std::size_t r = 0;
  for (int b = 0; b < n; ++b)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int i = 0; i < a; ++i, ++r)
          for (int j = 0; j < k; ++j) grad.at(b, i * k + j, y, x) = grad_rows[r * k + j];
  return grad;
}

template <typename T>
std::vector<Proposal> propose_from_outputs(const RpnOutput<T>& output,
                                           std::span<const Anchor> anchors, double image_w,
                                           double image_h, const ProposalConfig& config) {
  if (config.post_nms_topk <= 0 || config.pre_nms_topk <= 0) return {};
  const BasicTensor<T> probs = numcore::softmax(anchor_rows(output.logits, 2));
  const BasicTensor<T> deltas = anchor_rows(output.deltas, 4);
  if (static_cast<std::size_t>(probs.dim(0)) != anchors.size()) {
    throw ShapeError(fmt::format("propose: {} anchors but head scored {}", anchors.size(),
                                 probs.dim(0)));
  }
  std::vector<Box> boxes;
  std::vector<double> scores;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const Deltas t{deltas[i * 4], deltas[i * 4 + 1], deltas[i * 4 + 2], deltas[i * 4 + 3]};
    const Box box = clip_box(decode_deltas(anchors[i].box, t), image_w, image_h);
    if (!box.valid() || box.w < config.min_size || box.h < config.min_size) continue;
    boxes.push_back(box);
    scores.push_back(static_cast<double>(probs[i * 2 + 1]));
  }
  std::vector<std::size_t> order = order_by_score(scores);
  if (order.size() > static_cast<std::size_t>(config.pre_nms_topk)) order.resize(config.pre_nms_topk);
  std::vector<Box> top_boxes;
  std::vector<double> top_scores;
  for (std::size_t i : order) {
    top_boxes.push_back(boxes[i]);
    top_scores.push_back(scores[i]);
  }
  std::vector<std::size_t> kept = nms(top_boxes, top_scores, config.nms_threshold);
  if (kept.size() > static_cast<std::size_t>(config.post_nms_topk)) kept.resize(config.post_nms_topk);
  std::vector<Proposal> result;
  result.reserve(kept.size());
  for (std::size_t i : kept) result.push_back(Proposal{top_boxes[i], top_scores[i]});
  return result;
}

template <typename T>
std::vector<Proposal> propose(const msfusion::BasicFeatureMap<T>& fused,
                              const BasicRpnHead<T>& head, std::span<const double> scales,
                              std::span<const double> ratios, double image_w, double image_h,
                              const ProposalConfig& config) {
  const auto anchors = generate_anchors(fused.height(), fused.width(), fused.stride, scales, ratios);
  return propose_from_outputs(head.forward(fused.tensor), anchors, image_w, image_h, config);
}

#define CMS_INSTANTIATE_RPN(T)                                                                 \
  template class BasicRpnHead<T>;                                                              \
  template BasicTensor<T> anchor_rows(const BasicTensor<T>&, int);                             \
  template BasicTensor<T> anchor_rows_backward(const BasicTensor<T>&, const numcore::Shape&,   \
                                               int);                                           \
  template std::vector<Proposal> propose_from_outputs(const RpnOutput<T>&,                     \
                                                      std::span<const Anchor>, double, double, \
                                                      const ProposalConfig&);                  \
  template std::vector<Proposal> propose(const msfusion::BasicFeatureMap<T>&,                  \
                                         const BasicRpnHead<T>&, std::span<const double>,      \
                                         std::span<const double>, double, double,              \
                                         const ProposalConfig&);

CMS_INSTANTIATE_RPN(float)
CMS_INSTANTIATE_RPN(double)

}  // namespace cms::proposal
