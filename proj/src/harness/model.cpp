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

#include "cmsrcnn/harness/model.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cmsrcnn/msfusion/l2norm.hpp"
#include "cmsrcnn/numcore/layers.hpp"
#include "cmsrcnn/numcore/losses.hpp"
#include "cmsrcnn/proposal/nms.hpp"

namespace cms::harness {

using msfusion::FeatureMap;
using msfusion::Source;

Tensor image_tensor(const GrayImage& image, int multiple) {
  const int h = (image.height + multiple - 1) / multiple * multiple;
  const int w = (image.width + multiple - 1) / multiple * multiple;
  Tensor t({1, 1, h, w});
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      t[static_cast<std::size_t>(y) * w + x] = (static_cast<float>(image.at(x, y)) - 128.0f) / 64.0f;
    }
  }
  return t;
}

Backbone::Backbone(const BackboneConfig& config, numcore::Rng& rng)
    : strides_(harness::tap_strides(config)) {
  int in = 1;
  for (std::size_t s = 0; s < config.widths.size(); ++s) {
    std::vector<ConvLayer> set;
    const int out = config.widths[s];
    for (int r = 0; r < config.repeats[s]; ++r) {
      const std::string base = fmt::format("backbone.set{}.conv{}", s, r);
      ConvLayer layer{Param(base + ".weight", Tensor({out, in, 3, 3})),
                      Param(base + ".bias", Tensor({out})),
                      (s == 0 && r == 0) ? config.stem_stride : 1};
      numcore::glorot_uniform(layer.weights, in * 9, out * 9, rng);
      set.push_back(std::move(layer));
      in = out;
    }
    sets_.push_back(std::move(set));
  }
}

std::vector<int> Backbone::tap_channels() const {
  std::vector<int> ch;
  for (std::size_t s = sets_.size() - msfusion::kNumSources; s < sets_.size(); ++s) {
    ch.push_back(sets_[s].back().weights.value.dim(0));
  }
  return ch;
}

Taps Backbone::forward(const Tensor& image, BackboneCache* cache) const {
  Taps taps;
  const std::size_t first_tap = sets_.size() - msfusion::kNumSources;
  Tensor x = image;
  if (cache) *cache = BackboneCache{};
  for (std::size_t s = 0; s < sets_.size(); ++s) {
    if (s > 0) {
      auto pooled = numcore::max_pool2d(x, 2, 2);
      if (cache) {
        cache->pool_input_shapes.push_back(x.shape());
        cache->pool_argmax.push_back(std::move(pooled.argmax));
      }
      x = std::move(pooled.output);
    }
    for (const ConvLayer& layer : sets_[s]) {
      Tensor pre = numcore::conv2d(x, layer.weights, layer.bias, {layer.stride, 1});
      Tensor act = numcore::relu(pre);
      if (cache) {
        cache->inputs.push_back(std::move(x));
        cache->pre_activations.push_back(std::move(pre));
      }
      x = std::move(act);
    }
    if (s >= first_tap) {
      const int k = static_cast<int>(s - first_tap);
      taps[k] = FeatureMap{x, strides_[k], static_cast<Source>(k)};
    }
  }
  return taps;
}

void Backbone::backward(std::span<const Tensor> tap_grads, const BackboneCache& cache) {
  const std::size_t first_tap = sets_.size() - msfusion::kNumSources;
  std::size_t layer = cache.inputs.size();
  Tensor g;
  for (std::size_t s = sets_.size(); s-- > 0;) {
    if (s >= first_tap) {
      const Tensor& tg = tap_grads[s - first_tap];
      if (g.empty()) {
        g = tg;
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += tg[i];
      }
    }
    for (std::size_t r = sets_[s].size(); r-- > 0;) {
      --layer;
      ConvLayer& conv = sets_[s][r];
      g = numcore::relu_backward(g, cache.pre_activations[layer]);
      if (s == 0 && r == 0) {
        // The image needs no gradient; only the parameter gradients matter.
        numcore::conv2d_backward(g, cache.inputs[layer], conv.weights, conv.bias, {conv.stride, 1});
        return;
      }
      g = numcore::conv2d_backward(g, cache.inputs[layer], conv.weights, conv.bias, {conv.stride, 1});
    }
    if (s > 0) {
      g = numcore::max_pool2d_backward(g, cache.pool_argmax[s - 1], cache.pool_input_shapes[s - 1]);
    }
  }
}

numcore::ParamRefs<float> Backbone::params() {
  numcore::ParamRefs<float> refs;
  for (auto& set : sets_) {
    for (auto& layer : set) {
      refs.push_back(&layer.weights);
      refs.push_back(&layer.bias);
    }
  }
  return refs;
}

namespace {

std::vector<Box> boxes_of(std::span<const proposal::Anchor> anchors) {
  std::vector<Box> out;
  out.reserve(anchors.size());
  for (const auto& a : anchors) out.push_back(a.box);
  return out;
}

// Keeps up to batch * pos_fraction positives and fills the rest with
// negatives; returns the chosen indices in ascending order.
std::vector<int> sample_rows(std::span<const int> labels, int batch, double pos_fraction,
                             numcore::Rng& rng) {
  std::vector<int> pos, neg;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) {
    if (labels[i] == context::kPositive) pos.push_back(i);
    if (labels[i] == context::kNegative) neg.push_back(i);
  }
  const std::size_t n_pos = std::min(pos.size(), static_cast<std::size_t>(batch * pos_fraction));
  std::shuffle(pos.begin(), pos.end(), rng);
  pos.resize(n_pos);
  const std::size_t n_neg = std::min(neg.size(), static_cast<std::size_t>(batch) - n_pos);
  std::shuffle(neg.begin(), neg.end(), rng);
  neg.resize(n_neg);
  pos.insert(pos.end(), neg.begin(), neg.end());
  std::sort(pos.begin(), pos.end());
  return pos;
}

double rms(std::span<const float> values) {
  double acc = 0.0;
  for (float v : values) acc += static_cast<double>(v) * v;
  return values.empty() ? 0.0 : std::sqrt(acc / values.size());
}

void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

bool StepLosses::finite() const {
  return std::isfinite(rpn_cls) && std::isfinite(rpn_reg) && std::isfinite(det_cls) &&
         std::isfinite(det_reg);
}

struct CmsRcnn::RoiForward {
  std::vector<context::RoiBatch<float>> face_batches, body_batches;
  msfusion::FuseCache<float> face_cache, body_cache;
  Tensor face_blob, body_blob;
};

msfusion::FusionBlock make_fusion_block(const Config& config, FusionSite site, numcore::Rng& rng) {
  const auto& widths = config.backbone.widths;
  const std::vector<int> ch(widths.end() - msfusion::kNumSources, widths.end());
  switch (site) {
    case FusionSite::kRpn:
      return msfusion::FusionBlock("rpn.fuse", ch, config.fusion.rpn_init, config.fusion.rpn_channels, rng);
    case FusionSite::kFace:
      return msfusion::FusionBlock("roi.face.fuse", ch, config.fusion.roi_init, config.fusion.roi_channels, rng);
    case FusionSite::kBody:
      break;
  }
  return msfusion::FusionBlock("roi.body.fuse", ch, config.fusion.roi_init, config.fusion.roi_channels, rng);
}

CmsRcnn::CmsRcnn(const Config& config) : config_(config) {
  validate(config_);
  numcore::Rng rng(config_.seed);
  backbone_ = Backbone(config_.backbone, rng);
  rpn_fusion_ = make_fusion_block(config_, FusionSite::kRpn, rng);
  const int anchors = static_cast<int>(config_.anchors.scales.size() * config_.anchors.ratios.size());
  rpn_head_ = proposal::RpnHead("rpn.head", config_.fusion.rpn_channels, config_.rpn.hidden, anchors, rng);
  face_fusion_ = make_fusion_block(config_, FusionSite::kFace, rng);
  const int p = config_.roi.pool_size;
  const int blob = config_.fusion.roi_channels * p * p;
  if (config_.context.enabled) {
    body_fusion_ = make_fusion_block(config_, FusionSite::kBody, rng);
  }
  head_ = context::DetectionHead("det", blob, config_.context.enabled ? blob : 0,
                                 config_.head_hidden, rng);
}

void CmsRcnn::calibrate(std::span<const GrayImage> warmup) {
  if (warmup.empty()) return;
  double target = 0.0;
  std::array<double, msfusion::kNumSources> rpn_rms{}, roi_rms{};
  for (const GrayImage& img : warmup) {
    const Taps taps = backbone_.forward(image_tensor(img, max_stride()));
    target += rms(taps[2].tensor.data());
    const auto aligned = msfusion::align_spatial<float>(taps, Source::kConv5);
    for (int k = 0; k < msfusion::kNumSources; ++k) {
      rpn_rms[k] += rms(msfusion::l2_normalize_forward(aligned.maps[k]).normalized.tensor.data());
      roi_rms[k] += rms(msfusion::l2_normalize_forward(taps[k]).normalized.tensor.data());
    }
  }
  for (int k = 0; k < msfusion::kNumSources; ++k) {
    if (rpn_rms[k] > 0.0) rpn_fusion_.set_scale(k, target / rpn_rms[k]);
    if (roi_rms[k] > 0.0) {
      face_fusion_.set_scale(k, target / roi_rms[k]);
      if (config_.context.enabled) body_fusion_.set_scale(k, target / roi_rms[k]);
    }
  }
}

CmsRcnn::RoiForward CmsRcnn::roi_forward(const Taps& taps, std::span<const Box> regions,
                                         double image_w, double image_h, bool keep_cache) const {
  RoiForward f;
  const int p = config_.roi.pool_size;
  for (const FeatureMap& m : taps) {
    f.face_batches.push_back(context::roi_pool(m, regions, p, context::RegionKind::kFace));
  }
  f.face_blob = context::roi_fuse<float>(f.face_batches, face_fusion_,
                                         keep_cache ? &f.face_cache : nullptr);
  if (config_.context.enabled) {
    std::vector<Box> bodies;
    bodies.reserve(regions.size());
    for (const Box& r : regions) {
      bodies.push_back(context::context_box(r, config_.context.relation, image_w, image_h));
    }
    for (const FeatureMap& m : taps) {
      f.body_batches.push_back(context::roi_pool<float>(m, bodies, p, context::RegionKind::kBody));
    }
    f.body_blob = context::roi_fuse<float>(f.body_batches, body_fusion_,
                                           keep_cache ? &f.body_cache : nullptr);
  }
  if (!keep_cache) {
    f.face_batches.clear();
    f.body_batches.clear();
  }
  return f;
}

StepLosses CmsRcnn::train_step(const GrayImage& image, std::span<const Box> gt,
                               numcore::Rng& rng) {
  const double img_w = image.width, img_h = image.height;
  StepLosses losses;

  BackboneCache bcache;
  const Taps taps = backbone_.forward(image_tensor(image, max_stride()), &bcache);

  // Multi-scale RPN.
  const auto aligned = msfusion::align_spatial<float>(taps, Source::kConv5);
  msfusion::FuseCache<float> fcache;
  const FeatureMap fused = rpn_fusion_.forward(aligned.maps, &fcache);
  proposal::RpnCache<float> rcache;
  const proposal::RpnOutput<float> rpn_out = rpn_head_.forward(fused.tensor, &rcache);
  const auto anchors = proposal::generate_anchors(fused.height(), fused.width(), fused.stride,
                                                  config_.anchors.scales, config_.anchors.ratios);
  const std::vector<Box> anchor_boxes = boxes_of(anchors);
  context::TargetAssignment anchor_targets =
      context::assign_targets(anchor_boxes, gt, config_.rpn.pos_iou, config_.rpn.neg_iou);
  {
    const std::vector<int> keep =
        sample_rows(anchor_targets.labels, config_.rpn.batch, config_.rpn.pos_fraction, rng);
    std::vector<int> sampled(anchor_targets.labels.size(), context::kIgnored);
    for (int i : keep) sampled[i] = anchor_targets.labels[i];
    anchor_targets.labels = std::move(sampled);
  }
  const context::HeadOutput<float> rpn_rows{proposal::anchor_rows(rpn_out.logits, 2),
                                            proposal::anchor_rows(rpn_out.deltas, 4)};
  const auto rpn_loss = context::detection_loss<float>(rpn_rows, anchor_targets.labels,
                                                       anchor_targets.targets, config_.train.lambda);
  losses.rpn_cls = rpn_loss.cls;
  losses.rpn_reg = rpn_loss.reg;

  // Proposals carry no gradient; ground truth joins them as extra regions.
  std::vector<Box> regions;
  for (const auto& p : proposal::propose_from_outputs(rpn_out, anchors, img_w, img_h, config_.rpn.train)) {
    regions.push_back(p.box);
  }
  regions.insert(regions.end(), gt.begin(), gt.end());

  std::array<Tensor, msfusion::kNumSources> tap_grads;
  for (int k = 0; k < msfusion::kNumSources; ++k) tap_grads[k] = Tensor(taps[k].tensor.shape());

  if (!regions.empty()) {
    const auto roi_targets =
        context::assign_targets(regions, gt, config_.roi.pos_iou, config_.roi.neg_iou);
    const std::vector<int> chosen =
        sample_rows(roi_targets.labels, config_.roi.batch, config_.roi.pos_fraction, rng);
    if (!chosen.empty()) {
      std::vector<Box> picked;
      std::vector<int> labels;
      std::vector<proposal::Deltas> targets;
      for (int i : chosen) {
        picked.push_back(regions[i]);
        labels.push_back(roi_targets.labels[i]);
        targets.push_back(roi_targets.targets[i]);
      }
      RoiForward rf = roi_forward(taps, picked, img_w, img_h, true);
      context::HeadCache<float> hcache;
      const auto out = head_.forward(rf.face_blob, config_.context.enabled ? &rf.body_blob : nullptr,
                                     &hcache);
      const auto det_loss = context::detection_loss<float>(out, labels, targets, config_.train.lambda);
      losses.det_cls = det_loss.cls;
      losses.det_reg = det_loss.reg;

      const auto head_grads = head_.backward(det_loss.grads, hcache);
      const auto face_grads = context::roi_fuse_backward<float>(head_grads.face, rf.face_cache, face_fusion_);
      for (int k = 0; k < msfusion::kNumSources; ++k) {
        add_into(tap_grads[k], context::roi_pool_backward(face_grads[k], rf.face_batches[k]));
      }
      if (config_.context.enabled) {
        const auto body_grads =
            context::roi_fuse_backward<float>(head_grads.body, rf.body_cache, body_fusion_);
        for (int k = 0; k < msfusion::kNumSources; ++k) {
          add_into(tap_grads[k], context::roi_pool_backward(body_grads[k], rf.body_batches[k]));
        }
      }
    }
  }

  const proposal::RpnOutput<float> rpn_grads{
      proposal::anchor_rows_backward(rpn_loss.grads.logits, rpn_out.logits.shape(), 2),
      proposal::anchor_rows_backward(rpn_loss.grads.deltas, rpn_out.deltas.shape(), 4)};
  const Tensor g_fused = rpn_head_.backward(rpn_grads, rcache);
  const auto g_aligned = rpn_fusion_.backward(g_fused, fcache);
  const auto g_taps = msfusion::align_spatial_backward<float>(g_aligned, aligned);
  for (int k = 0; k < msfusion::kNumSources; ++k) add_into(tap_grads[k], g_taps[k]);

  backbone_.backward(tap_grads, bcache);
  return losses;
}

std::vector<ScoredBox> CmsRcnn::detect(const GrayImage& image, double score_floor) const {
  const double img_w = image.width, img_h = image.height;
  const Taps taps = backbone_.forward(image_tensor(image, max_stride()));
  const auto aligned = msfusion::align_spatial<float>(taps, Source::kConv5);
  const FeatureMap fused = rpn_fusion_.forward(aligned.maps);
  const auto rpn_out = rpn_head_.forward(fused.tensor);
  const auto anchors = proposal::generate_anchors(fused.height(), fused.width(), fused.stride,
                                                  config_.anchors.scales, config_.anchors.ratios);
  std::vector<Box> regions;
  for (const auto& p : proposal::propose_from_outputs(rpn_out, anchors, img_w, img_h, config_.rpn.test)) {
    regions.push_back(p.box);
  }
  if (regions.empty()) return {};

  const RoiForward rf = roi_forward(taps, regions, img_w, img_h, false);
  const auto out = head_.forward(rf.face_blob, config_.context.enabled ? &rf.body_blob : nullptr);
  const Tensor probs = numcore::softmax(out.logits);

  std::vector<Box> boxes;
  std::vector<double> scores;
  for (std::size_t r = 0; r < regions.size(); ++r) {
    const double score = probs[r * 2 + 1];
    if (!(score > score_floor)) continue;
    const proposal::Deltas d{out.deltas[r * 4], out.deltas[r * 4 + 1], out.deltas[r * 4 + 2],
                             out.deltas[r * 4 + 3]};
    const Box b = proposal::clip_box(proposal::decode_deltas(regions[r], d), img_w, img_h);
    if (!(b.w > 0.0 && b.h > 0.0)) continue;
    boxes.push_back(b);
    scores.push_back(score);
  }
  std::vector<ScoredBox> result;
  for (std::size_t i : proposal::nms(boxes, scores, config_.detect.nms)) {
    result.push_back({boxes[i], scores[i]});
  }
  return result;
}

numcore::ParamRefs<float> CmsRcnn::params() {
  numcore::ParamRefs<float> refs = backbone_.params();
  for (auto* p : rpn_fusion_.params()) refs.push_back(p);
  for (auto* p : rpn_head_.params()) refs.push_back(p);
  for (auto* p : face_fusion_.params()) refs.push_back(p);
  if (config_.context.enabled) {
    for (auto* p : body_fusion_.params()) refs.push_back(p);
  }
  for (auto* p : head_.params()) refs.push_back(p);
  return refs;
}

}  // namespace cms::harness
