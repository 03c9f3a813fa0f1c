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
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cmsrcnn/proposal/box.hpp"

namespace cms::evalkit {

using proposal::Box;

/// Intersection over union; 0 for disjoint boxes.
double iou(const Box& a, const Box& b);

struct Detection {
  std::string image_id;
  Box box;
  double score = 0.0;
};

/// Ground-truth boxes keyed by image id.
using GroundTruth = std::map<std::string, std::vector<Box>>;

/// The discrete criterion: TP iff IoU is strictly greater than this.
inline constexpr double kMatchThreshold = 0.5;

/// Detection indices sorted by descending score, ties by ascending index.
std::vector<std::size_t> rank_by_score(std::span<const Detection> dets);

/// Greedy matching in global score order. Entry i is true iff detection i is
/// a true positive: its best-IoU still-unmatched ground truth in the same
/// image overlaps by more than `threshold`; that ground truth is consumed.
std::vector<bool> match(std::span<const Detection> dets, const GroundTruth& gt,
                        double threshold = kMatchThreshold);

struct PrPoint {
  double threshold = 0.0;
  double recall = 0.0;
  double precision = 0.0;
};

struct PrCurve {
  std::vector<PrPoint> points;  // descending threshold, non-decreasing recall
  double ap = 0.0;
};

/// Sweeps the distinct score thresholds of a ranked list. `flags` and
/// `scores` are in rank order.
PrCurve pr_curve(const std::vector<bool>& flags, std::span<const double> scores, int num_gt);

/// All-points AP: precision envelope made non-increasing from the right, then
/// integrated over recall.
double average_precision(const PrCurve& curve);

/// match + pr_curve + average_precision over a whole detection set.
PrCurve evaluate(std::span<const Detection> dets, const GroundTruth& gt,
                 double threshold = kMatchThreshold);

std::size_t count_boxes(const GroundTruth& gt);

}  // namespace cms::evalkit
