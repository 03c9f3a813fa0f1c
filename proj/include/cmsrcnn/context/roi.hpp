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

#include <cmath>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "cmsrcnn/msfusion/feature_map.hpp"
#include "cmsrcnn/msfusion/fusion.hpp"
#include "cmsrcnn/proposal/anchors.hpp"
#include "cmsrcnn/proposal/box.hpp"

namespace cms::context {

using proposal::Box;

/// Fixed face -> body offset in the anchor-delta parametrization:
/// t_x = (x_b - x_f) / w_f, t_y = (y_b - y_f) / h_f,
/// t_w = log(w_b / w_f), t_h = log(h_b / h_f).
struct SpatialRelation {
  double tx = 0.0;
  double ty = 1.5;
  double tw = std::log(2.0);
  double th = std::log(4.0);

  proposal::Deltas as_deltas() const { return {tx, ty, tw, th}; }
  bool valid() const {
    return std::isfinite(tx) && std::isfinite(ty) && std::isfinite(tw) && std::isfinite(th);
  }
};

/// Body box before clipping.
Box context_box_unclipped(const Box& face, const SpatialRelation& rel);

/// Body box clipped to the image; each side keeps at least one pixel.
Box context_box(const Box& face, const SpatialRelation& rel, double image_w, double image_h);

/// Half-open integer cell rectangle [x0, x1) x [y0, y1) on a feature map.
struct CellRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool operator==(const CellRect&) const = default;
};

/// floor(start / stride), ceil(end / stride), clamped to the map and widened
/// to at least one cell per axis.
CellRect project_roi(const Box& box, int stride, int map_h, int map_w);

enum class RegionKind { kFace, kBody };

inline std::string_view region_kind_name(RegionKind k) {
  return k == RegionKind::kFace ? "face" : "body";
}

/// Pooled features for a batch of regions taken from one source map.
template <typename T>
struct RoiBatch {
  numcore::BasicTensor<T> pooled;  // (R, C, P, P)
  std::vector<std::int64_t> argmax;
  numcore::Shape map_shape;
  msfusion::Source source = msfusion::Source::kConv5;
  RegionKind kind = RegionKind::kFace;
  int pool_size = 0;
};

/// A single region's pooled feature, (C, P, P).
template <typename T>
struct RoiFeature {
  numcore::BasicTensor<T> tensor;
  msfusion::Source source = msfusion::Source::kConv5;
  RegionKind kind = RegionKind::kFace;
};

/// RoI max pooling of a single-image map. The projected rectangle is split
/// at floor(i * extent / P); an empty sub-bin is widened to one cell.
template <typename T>
RoiBatch<T> roi_pool(const msfusion::BasicFeatureMap<T>& map, std::span<const Box> boxes,
                     int pool_size, RegionKind kind);

template <typename T>
RoiFeature<T> roi_pool_single(const msfusion::BasicFeatureMap<T>& map, const Box& box,
                              int pool_size, RegionKind kind);

/// Gradient with respect to the source map.
template <typename T>
numcore::BasicTensor<T> roi_pool_backward(const numcore::BasicTensor<T>& grad_pooled,
                                          const RoiBatch<T>& batch);

/// Fuses per-source RoI batches of one region kind with `block`
/// (normalize, rescale, concat, 1x1 reduce). Output is (R, C_out, P, P).
template <typename T>
numcore::BasicTensor<T> roi_fuse(std::span<const RoiBatch<T>> batches,
                                 const msfusion::BasicFusionBlock<T>& block,
                                 msfusion::FuseCache<T>* cache = nullptr);

template <typename T>
std::vector<numcore::BasicTensor<T>> roi_fuse_backward(const numcore::BasicTensor<T>& grad_out,
                                                       const msfusion::FuseCache<T>& cache,
                                                       msfusion::BasicFusionBlock<T>& block);

}  // namespace cms::context
