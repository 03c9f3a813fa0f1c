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

#include "cmsrcnn/context/roi.hpp"

#include <fmt/format.h>

#include <algorithm>

#include "cmsrcnn/numcore/layers.hpp"

namespace cms::context {

using numcore::BasicTensor;
using numcore::ShapeError;
using numcore::shape_str;

Box context_box_unclipped(const Box& face, const SpatialRelation& rel) {
  return proposal::decode_deltas(face, rel.as_deltas());
}

namespace {

// Clamps [lo, hi] into [0, extent] keeping at least one pixel.
std::pair<double, double> clamp_span(double lo, double hi, double extent) {
  lo = std::clamp(lo, 0.0, extent);
  hi = std::clamp(hi, 0.0, extent);
  if (hi - lo < 1.0) {
    if (lo + 1.0 <= extent) {
      hi = lo + 1.0;
    } else {
      hi = extent;
      lo = std::max(0.0, extent - 1.0);
    }
  }
  return {lo, hi};
}

}  // namespace

Box context_box(const Box& face, const SpatialRelation& rel, double image_w, double image_h) {
  const Box body = context_box_unclipped(face, rel);
  const auto [x1, x2] = clamp_span(body.x1(), body.x2(), image_w);
  const auto [y1, y2] = clamp_span(body.y1(), body.y2(), image_h);
  return Box::from_corners(x1, y1, x2, y2);
}

CellRect project_roi(const Box& box, int stride, int map_h, int map_w) {
  if (stride < 1 || map_h < 1 || map_w < 1) {
    throw std::invalid_argument(
        fmt::format("project_roi: invalid stride {} or map {}x{}", stride, map_h, map_w));
  }
  auto axis = [stride](double lo, double hi, int extent) {
    int start = static_cast<int>(std::floor(lo / stride));
    int end = static_cast<int>(std::ceil(hi / stride));
    start = std::clamp(start, 0, extent);
    end = std::clamp(end, 0, extent);
    if (end <= start) {
      if (start < extent) {
        end = start + 1;
      } else {
        start = extent - 1;
        end = extent;
      }
    }
    return std::pair{start, end};
  };
  const auto [x0, x1] = axis(box.x1(), box.x2(), map_w);
  const auto [y0, y1] = axis(box.y1(), box.y2(), map_h);
  return CellRect{x0, y0, x1, y1};
}

template <typename T>
RoiBatch<T> roi_pool(const msfusion::BasicFeatureMap<T>& map, std::span<const Box> boxes,
                     int pool_size, RegionKind kind) {
  if (pool_size < 1) throw std::invalid_argument("roi_pool: pool size must be >= 1");
  if (map.tensor.order() != 4 || map.tensor.dim(0) != 1) {
    throw ShapeError("roi_pool: expected a single-image map, got " +
                     shape_str(map.tensor.shape()));
  }
  if (boxes.empty()) throw std::invalid_argument("roi_pool: no regions");
  const int c = map.channels(), h = map.height(), w = map.width(), p = pool_size;
  const int r_count = static_cast<int>(boxes.size());
  RoiBatch<T> out{BasicTensor<T>({r_count, c, p, p}), {}, map.tensor.shape(), map.source, kind, p};
  out.argmax.resize(out.pooled.size());

  std::vector<int> ys(p), ye(p), xs(p), xe(p);
  auto split = [p](int start, int extent, std::vector<int>& s, std::vector<int>& e) {
    for (int i = 0; i < p; ++i) {
      s[i] = start + (i * extent) / p;
      e[i] = start + ((i + 1) * extent) / p;
      if (e[i] <= s[i]) e[i] = s[i] + 1;
    }
  };
  std::size_t o = 0;
  for (int r = 0; r < r_count; ++r) {
    const CellRect rect = project_roi(boxes[r], map.stride, h, w);
    split(rect.y0, rect.height(), ys, ye);
    split(rect.x0, rect.width(), xs, xe);
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t base = static_cast<std::size_t>(ch) * h * w;
      for (int py = 0; py < p; ++py) {
        for (int px = 0; px < p; ++px, ++o) {
          std::size_t best = base + static_cast<std::size_t>(ys[py]) * w + xs[px];
          T best_v = map.tensor[best];
          for (int y = ys[py]; y < ye[py]; ++y) {
            for (int x = xs[px]; x < xe[px]; ++x) {
              const std::size_t idx = base + static_cast<std::size_t>(y) * w + x;
              if (map.tensor[idx] > best_v) {
                best_v = map.tensor[idx];
                best = idx;
              }
            }
          }
          out.pooled[o] = best_v;
          out.argmax[o] = static_cast<std::int64_t>(best);
        }
      }
    }
  }
  return out;
}

template <typename T>
RoiFeature<T> roi_pool_single(const msfusion::BasicFeatureMap<T>& map, const Box& box,
                              int pool_size, RegionKind kind) {
  RoiBatch<T> batch = roi_pool(map, std::span<const Box>(&box, 1), pool_size, kind);
  return RoiFeature<T>{std::move(batch.pooled).reshaped({map.channels(), pool_size, pool_size}),
                       map.source, kind};
}

template <typename T>
BasicTensor<T> roi_pool_backward(const BasicTensor<T>& grad_pooled, const RoiBatch<T>& batch) {
  return numcore::scatter_argmax_grad(grad_pooled, batch.argmax, batch.map_shape);
}

template <typename T>
BasicTensor<T> roi_fuse(std::span<const RoiBatch<T>> batches,
                        const msfusion::BasicFusionBlock<T>& block,
                        msfusion::FuseCache<T>* cache) {
  if (batches.empty()) throw std::invalid_argument("roi_fuse: no inputs");
  std::vector<msfusion::BasicFeatureMap<T>> maps;
  for (const RoiBatch<T>& b : batches) {
    if (b.kind != batches.front().kind) {
      throw std::invalid_argument(fmt::format("roi_fuse: mixed region kinds ({} and {})",
                                              region_kind_name(batches.front().kind),
                                              region_kind_name(b.kind)));
    }
    if (b.pool_size != batches.front().pool_size) {
      throw ShapeError(fmt::format("roi_fuse: mixed pooling resolutions {} and {}",
                                   batches.front().pool_size, b.pool_size));
    }
    // Pooled tensors share the P x P grid, so they fuse as stride-1 maps.
    maps.push_back(msfusion::BasicFeatureMap<T>{b.pooled, 1, b.source});
  }
  return block.forward(maps, cache).tensor;
}

template <typename T>
std::vector<BasicTensor<T>> roi_fuse_backward(const BasicTensor<T>& grad_out,
                                              const msfusion::FuseCache<T>& cache,
                                              msfusion::BasicFusionBlock<T>& block) {
  return block.backward(grad_out, cache);
}

#define CMS_INSTANTIATE_ROI(T)                                                                 \
  template RoiBatch<T> roi_pool(const msfusion::BasicFeatureMap<T>&, std::span<const Box>,     \
                                int, RegionKind);                                              \
  template RoiFeature<T> roi_pool_single(const msfusion::BasicFeatureMap<T>&, const Box&, int, \
                                         RegionKind);                                          \
  template BasicTensor<T> roi_pool_backward(const BasicTensor<T>&, const RoiBatch<T>&);        \
  template BasicTensor<T> roi_fuse(std::span<const RoiBatch<T>>,                               \
                                   const msfusion::BasicFusionBlock<T>&,                       \
                                   msfusion::FuseCache<T>*);                                   \
  template std::vector<BasicTensor<T>> roi_fuse_backward(                                      \
      const BasicTensor<T>&, const msfusion::FuseCache<T>&, msfusion::BasicFusionBlock<T>&);

CMS_INSTANTIATE_ROI(float)
CMS_INSTANTIATE_ROI(double)

}  // namespace cms::context
