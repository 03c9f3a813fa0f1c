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

#include "cmsrcnn/proposal/anchors.hpp"

#include <algorithm>
#include <stdexcept>

namespace cms::proposal {

std::vector<Anchor> generate_anchors(int map_h, int map_w, int stride,
                                     std::span<const double> scales,
                                     std::span<const double> ratios) {
  if (scales.empty() || ratios.empty()) {
    throw std::invalid_argument("generate_anchors: scales and ratios must be non-empty");
  }
  if (map_h < 0 || map_w < 0 || stride < 1) {
    throw std::invalid_argument("generate_anchors: invalid map size or stride");
  }
  for (double v : scales) {
    if (!(v > 0.0)) throw std::invalid_argument("generate_anchors: scales must be positive");
  }
  for (double v : ratios) {
    if (!(v > 0.0)) throw std::invalid_argument("generate_anchors: ratios must be positive");
  }
  std::vector<Anchor> anchors;
  anchors.reserve(static_cast<std::size_t>(map_h) * map_w * scales.size() * ratios.size());
  for (int r = 0; r < map_h; ++r) {
    for (int c = 0; c < map_w; ++c) {
      const double cx = (c + 0.5) * stride;
      const double cy = (r + 0.5) * stride;
      for (std::size_t s = 0; s < scales.size(); ++s) {
        const double side = scales[s] * stride;
        for (std::size_t q = 0; q < ratios.size(); ++q) {
          const double root = std::sqrt(ratios[q]);
          Box box{cx, cy, side * root, side / root};
          if (ratios[q] == 1.0) box.h = box.w;
          anchors.push_back(Anchor{box, r, c, static_cast<int>(s), static_cast<int>(q)});
        }
      }
    }
  }
  return anchors;
}

Deltas encode_deltas(const Box& src, const Box& target) {
  return {(target.cx - src.cx) / src.w, (target.cy - src.cy) / src.h,
          std::log(target.w / src.w), std::log(target.h / src.h)};
}

Box decode_deltas(const Box& src, const Deltas& t) {
  const double tw = std::clamp(t[2], -kDeltaClamp, kDeltaClamp);
  const double th = std::clamp(t[3], -kDeltaClamp, kDeltaClamp);
  return Box{src.cx + t[0] * src.w, src.cy + t[1] * src.h, src.w * std::exp(tw),
             src.h * std::exp(th)};
}

}  // namespace cms::proposal
