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

#include "cmsrcnn/proposal/nms.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cmsrcnn/evalkit/evaluate.hpp"

namespace cms::proposal {

std::vector<std::size_t> order_by_score(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

std::vector<std::size_t> nms(std::span<const Box> boxes, std::span<const double> scores,
                             double iou_threshold) {
  if (boxes.size() != scores.size()) {
    throw std::invalid_argument("nms: boxes and scores differ in length");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw std::invalid_argument("nms: non-finite score");
  }
  std::vector<std::size_t> kept;
  std::vector<bool> suppressed(boxes.size(), false);
  const auto order = order_by_score(scores);
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const std::size_t i = order[oi];
    if (suppressed[i]) continue;
    kept.push_back(i);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const std::size_t j = order[oj];
      if (!suppressed[j] && evalkit::iou(boxes[i], boxes[j]) > iou_threshold) suppressed[j] = true;
    }
  }
  return kept;
}

}  // namespace cms::proposal
