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

#include <algorithm>
#include <cmath>

namespace cms::proposal {

/// Axis-aligned rectangle in image pixels, stored as center and extents.
/// Corner form uses the continuous convention x2 = x1 + w.
struct Box {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  static Box from_corners(double x1, double y1, double x2, double y2) {
    return Box{(x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1};
  }
  static Box from_xywh(double x1, double y1, double w, double h) {
    return Box{x1 + w / 2.0, y1 + h / 2.0, w, h};
  }

  double x1() const { return cx - w / 2.0; }
  double y1() const { return cy - h / 2.0; }
  double x2() const { return cx + w / 2.0; }
  double y2() const { return cy + h / 2.0; }
  double area() const { return w * h; }

  bool valid() const {
    return std::isfinite(cx) && std::isfinite(cy) && std::isfinite(w) && std::isfinite(h) &&
           w > 0.0 && h > 0.0;
  }

  Box translated(double dx, double dy) const { return Box{cx + dx, cy + dy, w, h}; }
};

/// Intersects the box with [0, width] x [0, height]. The result can have zero
/// extent when the box lies outside the image.
inline Box clip_box(const Box& b, double width, double height) {
  const double x1 = std::clamp(b.x1(), 0.0, width);
  const double y1 = std::clamp(b.y1(), 0.0, height);
  const double x2 = std::clamp(b.x2(), 0.0, width);
  const double y2 = std::clamp(b.y2(), 0.0, height);
  return Box::from_corners(x1, y1, x2, y2);
}

}  // namespace cms::proposal
