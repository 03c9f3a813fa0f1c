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

#include "cmsrcnn/context/head.hpp"

#include <fmt/format.h>

#include "cmsrcnn/evalkit/evaluate.hpp"
#include "cmsrcnn/numcore/layers.hpp"
#include "cmsrcnn/numcore/losses.hpp"

namespace cms::context {

using numcore::BasicParam;
using numcore::BasicTensor;
using numcore::ShapeError;

namespace {

template <typename T>
BasicParam<T> make_weight(const std::string& name, int out, int in, numcore::Rng& rng) {
  BasicParam<T> p(name, BasicTensor<T>({out, in}));
  numcore::glorot_uniform(p, in, out, rng);
  return p;
}

template <typename T>
BasicParam<T> make_bias(const std::string& name, int out) {
  return BasicParam<T>(name, BasicTensor<T>({out}));
}

template <typename T>
BasicTensor<T> flatten_rows(const BasicTensor<T>& x) {
  const int rows = x.dim(0);
  return x.reshaped({rows, static_cast<int>(x.size() / rows)});
}

}  // namespace

template <typename T>
BasicDetectionHead<T>::BasicDetectionHead(const std::string& name, int face_dim, int body_dim,
                                          int hidden, numcore::Rng& rng)
    : face_dim_(face_dim), body_dim_(body_dim), hidden_(hidden) {
  if (face_dim < 1 || body_dim < 0 || hidden < 1) {
    throw std::invalid_argument(fmt::format("detection head '{}': invalid dims {}/{}/{}", name,
                                            face_dim, body_dim, hidden));
  }
  face_fc1_w_ = make_weight<T>(name + ".face_fc1.weight", hidden, face_dim, rng);
  face_fc1_b_ = make_bias<T>(name + ".face_fc1.bias", hidden);
  face_fc2_w_ = make_weight<T>(name + ".face_fc2.weight", hidden, hidden, rng);
  face_fc2_b_ = make_bias<T>(name + ".face_fc2.bias", hidden);
  if (body_dim > 0) {
    body_fc1_w_ = make_weight<T>(name + ".body_fc1.weight", hidden, body_dim, rng);
    body_fc1_b_ = make_bias<T>(name + ".body_fc1.bias", hidden);
    body_fc2_w_ = make_weight<T>(name + ".body_fc2.weight", hidden, hidden, rng);
    body_fc2_b_ = make_bias<T>(name + ".body_fc2.bias", hidden);
  }
  const int joint = body_dim > 0 ? 2 * hidden : hidden;
  cls_w_ = make_weight<T>(name + ".cls.weight", 2, joint, rng);
  cls_b_ = make_bias<T>(name + ".cls.bias", 2);
  reg_w_ = make_weight<T>(name + ".reg.weight", 4, joint, rng);
  reg_b_ = make_bias<T>(name + ".reg.bias", 4);
}

template <typename T>
HeadOutput<T> BasicDetectionHead<T>::forward(const BasicTensor<T>& face_blob,
                                             const BasicTensor<T>* body_blob,
                                             HeadCache<T>* cache) const {
  if (context_enabled() != (body_blob != nullptr)) {
    throw std::invalid_argument(context_enabled()
                                    ? "detection head: body pipeline enabled but no body blob"
                                    : "detection head: body blob given to a face-only head");
  }
  const int rows = face_blob.dim(0);
  BasicTensor<T> face_in = flatten_rows(face_blob);
  BasicTensor<T> face_pre1 = numcore::fully_connected(face_in, face_fc1_w_, face_fc1_b_);
  BasicTensor<T> face_act1 = numcore::relu(face_pre1);
  BasicTensor<T> face_pre2 = numcore::fully_connected(face_act1, face_fc2_w_, face_fc2_b_);
  BasicTensor<T> face_rep = numcore::relu(face_pre2);

  BasicTensor<T> joint;
  HeadCache<T> local;
  if (body_blob) {
    if (body_blob->dim(0) != rows) {
      throw ShapeError(fmt::format("detection head: {} face rows but {} body rows", rows,
                                   body_blob->dim(0)));
    }
    local.body_shape = body_blob->shape();
    local.body_in = flatten_rows(*body_blob);
    local.body_pre1 = numcore::fully_connected(local.body_in, body_fc1_w_, body_fc1_b_);
    local.body_act1 = numcore::relu(local.body_pre1);
    local.body_pre2 = numcore::fully_connected(local.body_act1, body_fc2_w_, body_fc2_b_);
    const BasicTensor<T> body_rep = numcore::relu(local.body_pre2);
    joint = BasicTensor<T>({rows, 2 * hidden_});
    for (int r = 0; r < rows; ++r) {
      for (int j = 0; j < hidden_; ++j) {
        joint[static_cast<std::size_t>(r) * 2 * hidden_ + j] = face_rep[static_cast<std::size_t>(r) * hidden_ + j];
        joint[static_cast<std::size_t>(r) * 2 * hidden_ + hidden_ + j] =
            body_rep[static_cast<std::size_t>(r) * hidden_ + j];
      }
    }
  } else {
    joint = std::move(face_rep);
  }

  HeadOutput<T> out{numcore::fully_connected(joint, cls_w_, cls_b_),
                    numcore::fully_connected(joint, reg_w_, reg_b_)};
  if (cache) {
    local.face_shape = face_blob.shape();
    local.face_in = std::move(face_in);
    local.face_pre1 = std::move(face_pre1);
    local.face_act1 = std::move(face_act1);
    local.face_pre2 = std::move(face_pre2);
    local.joint = std::move(joint);
    *cache = std::move(local);
  }
  return out;
}

template <typename T>
HeadInputGrads<T> BasicDetectionHead<T>::backward(const HeadOutput<T>& grads,
                                                  const HeadCache<T>& cache) {
  BasicTensor<T> g_joint = numcore::fully_connected_backward(grads.logits, cache.joint, cls_w_, cls_b_);
  const BasicTensor<T> g_joint_reg =
      numcore::fully_connected_backward(grads.deltas, cache.joint, reg_w_, reg_b_);
  for (std::size_t i = 0; i < g_joint.size(); ++i) g_joint[i] += g_joint_reg[i];

  const int rows = g_joint.dim(0);
  BasicTensor<T> g_face_rep({rows, hidden_});
  BasicTensor<T> g_body_rep;
  if (context_enabled()) {
    g_body_rep = BasicTensor<T>({rows, hidden_});
    for (int r = 0; r < rows; ++r) {
      for (int j = 0; j < hidden_; ++j) {
        g_face_rep[static_cast<std::size_t>(r) * hidden_ + j] = g_joint[static_cast<std::size_t>(r) * 2 * hidden_ + j];
        g_body_rep[static_cast<std::size_t>(r) * hidden_ + j] =
            g_joint[static_cast<std::size_t>(r) * 2 * hidden_ + hidden_ + j];
      }
    }
  } else {
    g_face_rep = std::move(g_joint);
  }

  HeadInputGrads<T> result;
  {
    const BasicTensor<T> g2 = numcore::relu_backward(g_face_rep, cache.face_pre2);
    const BasicTensor<T> g_act1 = numcore::fully_connected_backward(g2, cache.face_act1, face_fc2_w_, face_fc2_b_);
    const BasicTensor<T> g1 = numcore::relu_backward(g_act1, cache.face_pre1);
    result.face = numcore::fully_connected_backward(g1, cache.face_in, face_fc1_w_, face_fc1_b_)
                      .reshaped(cache.face_shape);
  }
  if (context_enabled()) {
    const BasicTensor<T> g2 = numcore::relu_backward(g_body_rep, cache.body_pre2);
    const BasicTensor<T> g_act1 = numcore::fully_connected_backward(g2, cache.body_act1, body_fc2_w_, body_fc2_b_);
    const BasicTensor<T> g1 = numcore::relu_backward(g_act1, cache.body_pre1);
    result.body = numcore::fully_connected_backward(g1, cache.body_in, body_fc1_w_, body_fc1_b_)
                      .reshaped(cache.body_shape);
  }
  return result;
}

template <typename T>
numcore::ParamRefs<T> BasicDetectionHead<T>::params() {
  numcore::ParamRefs<T> refs{&face_fc1_w_, &face_fc1_b_, &face_fc2_w_, &face_fc2_b_};
  for (auto* p : body_params()) refs.push_back(p);
  for (auto* p : {&cls_w_, &cls_b_, &reg_w_, &reg_b_}) refs.push_back(p);
  return refs;
}

template <typename T>
numcore::ParamRefs<T> BasicDetectionHead<T>::body_params() {
  if (!context_enabled()) return {};
  return {&body_fc1_w_, &body_fc1_b_, &body_fc2_w_, &body_fc2_b_};
}

TargetAssignment assign_targets(std::span<const proposal::Box> regions,
                                std::span<const proposal::Box> gt, double pos_iou,
                                double neg_iou) {
  if (!(pos_iou > neg_iou)) {
    throw std::invalid_argument(
        fmt::format("assign_targets: pos_iou {} must exceed neg_iou {}", pos_iou, neg_iou));
  }
  const std::size_t n = regions.size();
  TargetAssignment a{std::vector<int>(n, kNegative), std::vector<int>(n, -1),
                     std::vector<double>(n, 0.0), std::vector<proposal::Deltas>(n, {0, 0, 0, 0})};
  if (gt.empty()) return a;

  std::vector<double> overlaps(n * gt.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < gt.size(); ++j) {
      const double o = evalkit::iou(regions[i], gt[j]);
      overlaps[i * gt.size() + j] = o;
      if (o > a.max_iou[i]) {
        a.max_iou[i] = o;
        a.matched_gt[i] = static_cast<int>(j);
      }
    }
    if (a.matched_gt[i] < 0) a.matched_gt[i] = 0;
    if (a.max_iou[i] >= pos_iou) {
      a.labels[i] = kPositive;
    } else if (a.max_iou[i] >= neg_iou) {
      a.labels[i] = kIgnored;
    }
  }
  // Every ground truth keeps its best-overlapping region(s) as positives.
  for (std::size_t j = 0; j < gt.size(); ++j) {
    double best = 0.0;
    for (std::size_t i = 0; i < n; ++i) best = std::max(best, overlaps[i * gt.size() + j]);
    if (best <= 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) {
      if (overlaps[i * gt.size() + j] == best) {
        a.labels[i] = kPositive;
        a.matched_gt[i] = static_cast<int>(j);
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (a.labels[i] == kPositive) a.targets[i] = proposal::encode_deltas(regions[i], gt[a.matched_gt[i]]);
  }
  return a;
}

template <typename T>
DetectionLoss<T> detection_loss(const HeadOutput<T>& out, std::span<const int> labels,
                                std::span<const proposal::Deltas> targets, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("detection_loss: lambda must be >= 0");
  const int rows = out.logits.dim(0);
  if (labels.size() != static_cast<std::size_t>(rows) || targets.size() != labels.size() ||
      out.deltas.dim(0) != rows) {
    throw ShapeError(fmt::format("detection_loss: {} rows, {} labels, {} targets", rows,
                                 labels.size(), targets.size()));
  }
  std::vector<int> cls_labels(labels.size());
  BasicTensor<T> target({rows, 4});
  BasicTensor<T> weight({rows, 4});
  for (int r = 0; r < rows; ++r) {
    cls_labels[r] = labels[r] == kIgnored ? numcore::kIgnoreLabel : labels[r];
    if (labels[r] == kPositive) {
      for (int j = 0; j < 4; ++j) {
        target[static_cast<std::size_t>(r) * 4 + j] = static_cast<T>(targets[r][j]);
        weight[static_cast<std::size_t>(r) * 4 + j] = T(1);
      }
    }
  }
  auto cls = numcore::softmax_cross_entropy(out.logits, cls_labels);
  auto reg = numcore::smooth_l1(out.deltas, target, weight);
  DetectionLoss<T> loss;
  loss.cls = cls.value;
  loss.reg = reg.value;
  loss.total = cls.value + lambda * reg.value;
  loss.grads.logits = std::move(cls.grad);
  loss.grads.deltas = std::move(reg.grad);
  for (auto& g : loss.grads.deltas.data()) g = static_cast<T>(g * lambda);
  return loss;
}

template class BasicDetectionHead<float>;
template class BasicDetectionHead<double>;
template DetectionLoss<float> detection_loss(const HeadOutput<float>&, std::span<const int>,
                                             std::span<const proposal::Deltas>, double);
template DetectionLoss<double> detection_loss(const HeadOutput<double>&, std::span<const int>,
                                              std::span<const proposal::Deltas>, double);

}  // namespace cms::context
