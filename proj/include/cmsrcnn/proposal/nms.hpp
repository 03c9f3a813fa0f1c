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

#include <cstddef>
#include <span>
#include <vector>

#include "cmsrcnn/proposal/box.hpp"

namespace cms::proposal {

/// Greedy non-maximum suppression. Returns kept indices in descending score
/// order (ties by ascending index); a box is suppressed when its IoU with an
/// already-kept box exceeds `iou_threshold`.
std::vector<std::size_t> nms(std::span<const Box> boxes, std::span<const double> scores,
                             double iou_threshold);

/// Indices sorted by descending score, ties by ascending index.
std::vector<std::size_t> order_by_score(std::span<const double> scores);

}  // namespace cms::proposal
