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

// Brute-force reference implementations used only by the tests.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <set>
#include <vector>

#include "cmsrcnn/context/roi.hpp"
#include "cmsrcnn/proposal/box.hpp"

namespace cms::oracle {

/// IoU of two integer-corner boxes by counting unit pixels.
inline double pixel_iou(int ax1, int ay1, int ax2, int ay2, int bx1, int by1, int bx2, int by2) {
  const int lo_x = std::min(ax1, bx1), hi_x = std::max(ax2, bx2);
  const int lo_y = std::min(ay1, by1), hi_y = std::max(ay2, by2);
  std::int64_t inter = 0, uni = 0;
  for (int y = lo_y; y < hi_y; ++y) {
    for (int x = lo_x; x < hi_x; ++x) {
      const bool in_a = x >= ax1 && x < ax2 && y >= ay1 && y < ay2;
      const bool in_b = x >= bx1 && x < bx2 && y >= by1 && y < by2;
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Maximum of one channel of a (1, C, H, W) map over the cells a box covers,
/// found by testing every cell for overlap with [x1, x2) x [y1, y2) scaled by
/// the stride, widened to one cell per axis like the projection rule.
template <typename T>
T roi_max(const numcore::BasicTensor<T>& map, int channel, const proposal::Box& box, int stride) {
  const int h = map.dim(2), w = map.dim(3);
  auto cells = [&](double lo, double hi, int extent) {
    std::vector<int> out;
    for (int i = 0; i < extent; ++i) {
      // Cell i spans [i*stride, (i+1)*stride); the box end is exclusive.
      if ((i + 1) * static_cast<double>(stride) > lo && i * static_cast<double>(stride) < hi) {
        out.push_back(i);
      }
    }
    if (out.empty()) {
      int i = static_cast<int>(lo / stride);
      out.push_back(std::clamp(i, 0, extent - 1));
    }
    return out;
  };
  T best = -std::numeric_limits<T>::infinity();
  for (int y : cells(box.y1(), box.y2(), h)) {
    for (int x : cells(box.x1(), box.x2(), w)) best = std::max(best, map.at(0, channel, y, x));
  }
  return best;
}

/// All-points AP from first principles: for every distinct score threshold,
/// precision and recall of the detections scoring at or above it; precision
/// at recall r is the best precision at any recall >= r; the area is summed
/// over the recall steps.
inline double threshold_ap(const std::vector<double>& scores, const std::vector<bool>& tp,
                           int num_gt) {
  if (num_gt <= 0) return 0.0;
  std::set<double, std::greater<>> thresholds(scores.begin(), scores.end());
  std::vector<std::pair<double, double>> pr;  // (recall, precision)
  for (double t : thresholds) {
    int kept = 0, hits = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) {
        ++kept;
        hits += tp[i] ? 1 : 0;
      }
    }
    pr.emplace_back(static_cast<double>(hits) / num_gt, static_cast<double>(hits) / kept);
  }
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < pr.size(); ++i) {
    const double r = pr[i].first;
    if (r <= prev_recall) continue;
    double best = 0.0;
    for (const auto& [rj, pj] : pr) {
      if (rj >= r) best = std::max(best, pj);
    }
    ap += (r - prev_recall) * best;
    prev_recall = r;
  }
  return ap;
}

}  // namespace cms::oracle
