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

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "cmsrcnn/proposal/box.hpp"

namespace cms::proposal {

struct Anchor {
  Box box;
  int row = 0;
  int col = 0;
  int scale_index = 0;
  int ratio_index = 0;
};

/// One anchor per (cell, scale, ratio), ordered row, col, scale, ratio.
/// Each has area (scale * stride)^2 and aspect w / h = ratio, centered at
/// ((col + 0.5) * stride, (row + 0.5) * stride).
std::vector<Anchor> generate_anchors(int map_h, int map_w, int stride,
                                     std::span<const double> scales,
                                     std::span<const double> ratios);

/// (t_x, t_y, t_w, t_h): center offsets in units of the source extents and
/// log extent ratios.
using Deltas = std::array<double, 4>;

/// Bound on |t_w|, |t_h| applied before exponentiation in decode_deltas.
inline const double kDeltaClamp = std::log(1000.0 / 16.0);

Deltas encode_deltas(const Box& src, const Box& target);
Box decode_deltas(const Box& src, const Deltas& t);

}  // namespace cms::proposal
