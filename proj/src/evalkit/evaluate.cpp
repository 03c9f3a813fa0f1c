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

#include "cmsrcnn/evalkit/evaluate.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace cms::evalkit {

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<std::size_t> rank_by_score(std::span<const Detection> dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });
  return order;
}

std::vector<bool> match(std::span<const Detection> dets, const GroundTruth& gt,
                        double threshold) {
  std::map<std::string, std::vector<bool>> consumed;
  for (const auto& [image, boxes] : gt) consumed[image].assign(boxes.size(), false);

  std::vector<bool> tp(dets.size(), false);
  for (std::size_t i : rank_by_score(dets)) {
    const auto it = gt.find(dets[i].image_id);
    if (it == gt.end()) continue;
    std::vector<bool>& used = consumed[dets[i].image_id];
    double best = -1.0;
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < it->second.size(); ++j) {
      if (used[j]) continue;
      const double o = iou(dets[i].box, it->second[j]);
      if (o > best) {  // strict: ties keep the lower index
        best = o;
        best_j = j;
      }
    }
    if (best > threshold) {
      tp[i] = true;
      used[best_j] = true;
    }
  }
  return tp;
}

PrCurve pr_curve(const std::vector<bool>& flags, std::span<const double> scores, int num_gt) {
  if (num_gt < 0) throw std::invalid_argument("pr_curve: negative ground-truth count");
  if (flags.size() != scores.size()) {
    throw std::invalid_argument("pr_curve: flags and scores differ in length");
  }
  PrCurve curve;
  if (num_gt == 0) return curve;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (flags[i]) ++tp;
    // One operating point per distinct threshold: emit after the last of a tie.
    if (i + 1 < flags.size() && scores[i + 1] == scores[i]) continue;
    const double n = static_cast<double>(i + 1);
    curve.points.push_back(PrPoint{scores[i], static_cast<double>(tp) / num_gt, tp / n});
  }
  curve.ap = average_precision(curve);
  return curve;
}

double average_precision(const PrCurve& curve) {
  const auto& pts = curve.points;
  std::vector<double> envelope(pts.size());
  double running = 0.0;
  for (std::size_t k = pts.size(); k-- > 0;) {
    running = std::max(running, pts[k].precision);
    envelope[k] = running;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    ap += (pts[k].recall - prev_recall) * envelope[k];
    prev_recall = pts[k].recall;
  }
  return ap;
}

PrCurve evaluate(std::span<const Detection> dets, const GroundTruth& gt, double threshold) {
  const std::vector<bool> tp = match(dets, gt, threshold);
  const std::vector<std::size_t> order = rank_by_score(dets);
  std::vector<bool> ranked_flags(order.size());
  std::vector<double> ranked_scores(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    ranked_flags[k] = tp[order[k]];
    ranked_scores[k] = dets[order[k]].score;
  }
  return pr_curve(ranked_flags, ranked_scores, static_cast<int>(count_boxes(gt)));
}

std::size_t count_boxes(const GroundTruth& gt) {
  std::size_t n = 0;
  for (const auto& [image, boxes] : gt) n += boxes.size();
  return n;
}

}  // namespace cms::evalkit
