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

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "cmsrcnn/context/head.hpp"
#include "cmsrcnn/context/roi.hpp"
#include "cmsrcnn/evalkit/evaluate.hpp"
#include "oracles.hpp"

namespace cms::context {
namespace {

using msfusion::FeatureMap;
using msfusion::Source;
using numcore::Rng;
using numcore::Shape;
using numcore::Tensor;

TEST(ContextBoxTest, IdentityRelation) {
  const Box face{31, 17, 6, 9};
  const Box body = context_box_unclipped(face, SpatialRelation{0, 0, 0, 0});
  EXPECT_EQ(body.cx, face.cx);
  EXPECT_EQ(body.cy, face.cy);
  EXPECT_EQ(body.w, face.w);
  EXPECT_EQ(body.h, face.h);
}

TEST(ContextBoxTest, DefaultRelationHandCase) {
  const Box body = context_box_unclipped(Box{10, 10, 2, 2}, SpatialRelation{});
  EXPECT_DOUBLE_EQ(body.cx, 10.0);
  EXPECT_DOUBLE_EQ(body.cy, 13.0);
  EXPECT_DOUBLE_EQ(body.w, 4.0);
  EXPECT_DOUBLE_EQ(body.h, 8.0);
}

TEST(ContextBoxTest, ClippedAtImageBottom) {
  const Box body = context_box(Box{40, 92, 10, 12}, SpatialRelation{}, 96, 96);
  EXPECT_TRUE(body.valid());
  EXPECT_GE(body.y1(), 0.0);
  EXPECT_LE(body.y2(), 96.0);
  EXPECT_GE(body.h, 1.0);
  const Box below = context_box(Box{40, 95, 4, 4}, SpatialRelation{0, 5, 0, 0}, 96, 96);
  EXPECT_TRUE(below.valid());
  EXPECT_GE(below.w, 1.0);
  EXPECT_GE(below.h, 1.0);
  EXPECT_LE(below.y2(), 96.0);
}

TEST(ContextBoxTest, CommutesWithTranslation) {
  Rng rng(50);
  std::uniform_real_distribution<double> pos(-50, 50), ext(1, 40);
  std::uniform_int_distribution<int> shift(-64, 64);
  const SpatialRelation rel{};
  for (int i = 0; i < 500; ++i) {
    // Integer shifts and extents keep every operation exact.
    const Box face{std::round(pos(rng)), std::round(pos(rng)), std::round(ext(rng)), std::round(ext(rng))};
    const double dx = shift(rng), dy = shift(rng);
    const Box a = context_box_unclipped(face.translated(dx, dy), rel);
    const Box b = context_box_unclipped(face, rel).translated(dx, dy);
    EXPECT_EQ(a.cx, b.cx);
    EXPECT_EQ(a.cy, b.cy);
    EXPECT_EQ(a.w, b.w);
    EXPECT_EQ(a.h, b.h);
  }
}

TEST(ContextBoxTest, ScalesWithFace) {
  Rng rng(51);
  std::uniform_real_distribution<double> pos(-50, 50), ext(1, 40);
  const SpatialRelation rel{0.2, 1.5, 0.7, 1.4};
  for (int i = 0; i < 500; ++i) {
    const Box face{pos(rng), pos(rng), ext(rng), ext(rng)};
    const Box big{face.cx, face.cy, 2 * face.w, 2 * face.h};
    const Box a = context_box_unclipped(face, rel);
    const Box b = context_box_unclipped(big, rel);
    EXPECT_NEAR(b.cx - big.cx, 2 * (a.cx - face.cx), 1e-6 * std::abs(a.cx - face.cx) + 1e-12);
    EXPECT_NEAR(b.cy - big.cy, 2 * (a.cy - face.cy), 1e-6 * std::abs(a.cy - face.cy));
    EXPECT_NEAR(b.w, 2 * a.w, 1e-6 * a.w);
    EXPECT_NEAR(b.h, 2 * a.h, 1e-6 * a.h);
  }
}

TEST(ProjectRoiTest, Cases) {
  EXPECT_EQ(project_roi(Box::from_corners(32, 32, 96, 96), 16, 10, 10), (CellRect{2, 2, 6, 6}));
  const CellRect tiny = project_roi(Box::from_corners(33, 33, 34, 35), 16, 10, 10);
  EXPECT_EQ(tiny.width(), 1);
  EXPECT_EQ(tiny.height(), 1);
  EXPECT_EQ(project_roi(Box::from_corners(3, 4, 9, 11), 1, 20, 20), (CellRect{3, 4, 9, 11}));
  EXPECT_EQ(project_roi(Box::from_corners(3.5, 4.2, 8.5, 10.7), 1, 20, 20), (CellRect{3, 4, 9, 11}));
  const CellRect outside = project_roi(Box::from_corners(200, 200, 210, 210), 16, 4, 4);
  EXPECT_EQ(outside, (CellRect{3, 3, 4, 4}));
}

FeatureMap random_map(int c, int h, int w, int stride, Rng& rng) {
  std::uniform_real_distribution<float> u(-5, 5);
  Tensor t({1, c, h, w});
  for (auto& v : t.data()) v = u(rng);
  return FeatureMap{t, stride, Source::kConv5};
}

TEST(RoiPoolTest, SingleBinMatchesBruteForce) {
  Rng rng(52);
  const FeatureMap map = random_map(3, 12, 10, 4, rng);
  std::uniform_real_distribution<double> x(0, 39), y(0, 47);
  std::vector<Box> boxes;
  for (int i = 0; i < 1000; ++i) {
    const double x1 = x(rng), y1 = y(rng);
    std::uniform_real_distribution<double> w(0.5, 40 - x1), h(0.5, 48 - y1);
    boxes.push_back(Box::from_xywh(x1, y1, w(rng), h(rng)));
  }
  const auto batch = roi_pool(map, boxes, 1, RegionKind::kFace);
  ASSERT_EQ(batch.pooled.shape(), (Shape{1000, 3, 1, 1}));
  for (int r = 0; r < 1000; ++r)
    for (int c = 0; c < 3; ++c)
      EXPECT_EQ(batch.pooled[r * 3 + c], oracle::roi_max(map.tensor, c, boxes[r], 4));
}

TEST(RoiPoolTest, ConstantMapAndQuadrants) {
  const FeatureMap flat{Tensor({1, 2, 6, 6}, 1.25f), 2, Source::kConv4};
  const std::vector<Box> some{Box::from_corners(1, 1, 9, 7), Box::from_corners(0, 0, 2, 2)};
  const auto c = roi_pool(flat, some, 3, RegionKind::kBody);
  for (float v : c.pooled.data()) EXPECT_EQ(v, 1.25f);

  std::vector<float> vals{3, 1, 8, 2, 4, 0, 5, 7, 6, 9, 1, 2, 0, 5, 3, 4};
  const FeatureMap m{Tensor({1, 1, 4, 4}, vals), 1, Source::kConv5};
  const std::vector<Box> full{Box::from_corners(0, 0, 4, 4)};
  const auto q = roi_pool(m, full, 2, RegionKind::kFace);
  EXPECT_EQ(q.pooled[0], 4.0f);
  EXPECT_EQ(q.pooled[1], 8.0f);
  EXPECT_EQ(q.pooled[2], 9.0f);
  EXPECT_EQ(q.pooled[3], 4.0f);
}

TEST(RoiPoolTest, BackwardRoutesToArgmax) {
  std::vector<float> vals{3, 1, 8, 2, 4, 0, 5, 7, 6, 9, 1, 2, 0, 5, 3, 4};
  const FeatureMap m{Tensor({1, 1, 4, 4}, vals), 1, Source::kConv5};
  const std::vector<Box> full{Box::from_corners(0, 0, 4, 4), Box::from_corners(0, 0, 2, 2)};
  const auto batch = roi_pool(m, full, 2, RegionKind::kFace);
  const Tensor g = roi_pool_backward(Tensor(batch.pooled.shape(), 1.0f), batch);
  // The value 4 at (1, 0) wins its quadrant once for the full box and once
  // for the 2x2 box's bin.
  EXPECT_EQ(g.at(0, 0, 1, 0), 2.0f);
  EXPECT_EQ(g.at(0, 0, 0, 2), 1.0f);
  EXPECT_EQ(g.at(0, 0, 2, 1), 1.0f);
  float total = 0.0f;
  for (float v : g.data()) total += v;
  EXPECT_EQ(total, 8.0f);
}

TEST(RoiFuseTest, SingleSourceIdentityGivesNormalizedFeature) {
  Rng rng(53);
  const FeatureMap map = random_map(3, 6, 6, 2, rng);
  const std::vector<Box> boxes{Box::from_corners(0, 0, 8, 8)};
  const std::vector<RoiBatch<float>> batches{roi_pool(map, boxes, 2, RegionKind::kFace)};
  const std::vector<double> init{1.0};
  msfusion::FusionBlock block("roi.face", {3}, init, 3, rng);
  block.weights().value.fill(0.0f);
  for (int i = 0; i < 3; ++i) block.weights().value[i * 3 + i] = 1.0f;
  block.bias().value.fill(0.0f);
  const Tensor out = roi_fuse<float>(batches, block);
  const auto& pooled = batches[0].pooled;
  ASSERT_EQ(out.shape(), pooled.shape());
  for (int p = 0; p < 4; ++p) {
    double n = 0.0;
    for (int c = 0; c < 3; ++c) n += double(pooled[c * 4 + p]) * pooled[c * 4 + p];
    n = std::sqrt(n);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(out[c * 4 + p], pooled[c * 4 + p] / n, 1e-6);
  }
}

TEST(RoiFuseTest, VggWidthsAndKindCheck) {
  Rng rng(54);
  const std::vector<double> init{57.75, 81.67, 81.67};
  msfusion::FusionBlock block("roi.body", {256, 512, 512}, init, 512, rng);
  EXPECT_EQ(block.in_channels(), 1280);
  std::vector<RoiBatch<float>> batches;
  const std::vector<Box> boxes{Box::from_corners(0, 0, 64, 64)};
  const int widths[] = {256, 512, 512};
  for (int i = 0; i < 3; ++i) {
    FeatureMap m{Tensor({1, widths[i], 4, 4}, 1.0f), 16, static_cast<Source>(i)};
    batches.push_back(roi_pool(m, boxes, 7, i == 2 ? RegionKind::kFace : RegionKind::kBody));
  }
  EXPECT_THROW(roi_fuse<float>(batches, block), std::invalid_argument);
  batches[2].kind = RegionKind::kBody;
  EXPECT_EQ(roi_fuse<float>(batches, block).shape(), (Shape{1, 512, 7, 7}));
}

TEST(DetectionHeadTest, ZeroWeightsGiveEvenOdds) {
  Rng rng(55);
  DetectionHead head("det", 12, 12, 8, rng);
  for (auto* p : head.params()) p->value.fill(0.0f);
  const Tensor face({3, 3, 2, 2}, 1.0f), body({3, 3, 2, 2}, -1.0f);
  const auto out = head.forward(face, &body);
  EXPECT_EQ(out.logits.shape(), (Shape{3, 2}));
  EXPECT_EQ(out.deltas.shape(), (Shape{3, 4}));
  for (float v : out.logits.data()) EXPECT_EQ(v, 0.0f);
}

TEST(DetectionHeadTest, ContextDisabledUsesFaceOnly) {
  Rng rng(56);
  DetectionHead head("det", 12, 0, 8, rng);
  EXPECT_FALSE(head.context_enabled());
  EXPECT_TRUE(head.body_params().empty());
  for (auto* p : head.params()) EXPECT_EQ(p->name.find("body"), std::string::npos) << p->name;
  const Tensor face({2, 3, 2, 2}, 0.5f), body({2, 3, 2, 2}, 1.0f);
  EXPECT_NO_THROW(head.forward(face, nullptr));
  EXPECT_THROW(head.forward(face, &body), std::invalid_argument);
  DetectionHead with_ctx("det", 12, 12, 8, rng);
  EXPECT_THROW(with_ctx.forward(face, nullptr), std::invalid_argument);
}

TEST(DetectionHeadTest, ZeroBodyPathMatchesFaceOnlyHead) {
  Rng rng(57);
  const int hidden = 6;
  DetectionHead ctx("det", 12, 8, hidden, rng);
  DetectionHead solo("det", 12, 0, hidden, rng);
  for (auto* p : ctx.body_params()) p->value.fill(0.0f);
  std::map<std::string, numcore::Param*> by_name;
  for (auto* p : ctx.params()) by_name[p->name] = p;
  for (auto* p : solo.params()) {
    const auto& src = by_name.at(p->name)->value;
    if (src.shape() == p->value.shape()) {
      p->value = src;
    } else {
      // Sibling layers: keep the face columns of the joint weight matrix.
      const int out = p->value.dim(0), in = p->value.dim(1), joint = src.dim(1);
      for (int o = 0; o < out; ++o)
        for (int i = 0; i < in; ++i) p->value[o * in + i] = src[o * joint + i];
    }
  }
  std::uniform_real_distribution<float> u(-2, 2);
  Tensor face({4, 3, 2, 2}), body({4, 2, 2, 2});
  for (auto& v : face.data()) v = u(rng);
  for (auto& v : body.data()) v = u(rng);
  const auto a = ctx.forward(face, &body);
  const auto b = solo.forward(face, nullptr);
  for (std::size_t i = 0; i < a.logits.size(); ++i) EXPECT_EQ(a.logits[i], b.logits[i]);
  for (std::size_t i = 0; i < a.deltas.size(); ++i) EXPECT_EQ(a.deltas[i], b.deltas[i]);
}

TEST(AssignTargetsTest, Cases) {
  const std::vector<Box> gt{Box::from_corners(10, 10, 30, 30)};
  // Same box; disjoint; IoU 0.4 with the gt while the first region stays its best match.
  const auto between = Box::from_corners(10, 10, 30, 18);
  ASSERT_NEAR(evalkit::iou(between, gt[0]), 0.4, 1e-12);
  const std::vector<Box> regions{gt[0], Box::from_corners(50, 50, 60, 60), between};
  const auto t = assign_targets(regions, gt, 0.5, 0.3);
  EXPECT_EQ(t.labels, (std::vector<int>{kPositive, kNegative, kIgnored}));
  for (double d : t.targets[0]) EXPECT_EQ(d, 0.0);
  EXPECT_EQ(t.matched_gt[0], 0);

  const auto none = assign_targets(regions, std::vector<Box>{}, 0.5, 0.3);
  EXPECT_EQ(none.labels, (std::vector<int>{kNegative, kNegative, kNegative}));
  EXPECT_THROW(assign_targets(regions, gt, 0.3, 0.5), std::invalid_argument);
}

TEST(AssignTargetsTest, BestMatchIsPositiveBelowThreshold) {
  const std::vector<Box> gt{Box::from_corners(0, 0, 10, 10)};
  const std::vector<Box> regions{Box::from_corners(0, 0, 10, 4), Box::from_corners(40, 40, 50, 50)};
  const auto t = assign_targets(regions, gt, 0.5, 0.3);
  EXPECT_EQ(t.labels[0], kPositive);
  EXPECT_EQ(t.labels[1], kNegative);
}

TEST(DetectionLossTest, NoPositivesIsClassificationOnly) {
  HeadOutput<float> out{Tensor({2, 2}, std::vector<float>{0.3f, -0.2f, 1.0f, 0.5f}),
                        Tensor({2, 4}, 0.7f)};
  const std::vector<int> labels{kNegative, kNegative};
  const std::vector<proposal::Deltas> targets(2, proposal::Deltas{0, 0, 0, 0});
  const auto loss = detection_loss(out, labels, targets, 1.0);
  EXPECT_EQ(loss.reg, 0.0);
  EXPECT_DOUBLE_EQ(loss.total, loss.cls);
  for (float g : loss.grads.deltas.data()) EXPECT_EQ(g, 0.0f);
}

TEST(DetectionLossTest, PerfectPredictions) {
  HeadOutput<double> out{numcore::TensorD({2, 2}, std::vector<double>{-40, 40, 40, -40}),
                         numcore::TensorD({2, 4}, std::vector<double>{0.1, -0.2, 0.3, 0.4, 9, 9, 9, 9})};
  const std::vector<int> labels{kPositive, kNegative};
  const std::vector<proposal::Deltas> targets{{0.1, -0.2, 0.3, 0.4}, {0, 0, 0, 0}};
  const auto loss = detection_loss(out, labels, targets, 1.0);
  EXPECT_EQ(loss.reg, 0.0);
  EXPECT_LT(loss.cls, 1e-30);
}

TEST(DetectionLossTest, HandMicroBatch) {
  HeadOutput<double> out{numcore::TensorD({2, 2}, std::vector<double>{1, 2, 0, 0}),
                         numcore::TensorD({2, 4}, std::vector<double>{0.5, 0, 2, 0, 5, 5, 5, 5})};
  const std::vector<int> labels{kPositive, kNegative};
  const std::vector<proposal::Deltas> targets{{0, 0, 0, 0}, {0, 0, 0, 0}};
  const auto loss = detection_loss(out, labels, targets, 2.0);
  const double cls = (std::log(1 + std::exp(-1.0)) + std::log(2.0)) / 2;
  const double reg = 0.125 + 1.5;
  EXPECT_NEAR(loss.cls, cls, 1e-6);
  EXPECT_NEAR(loss.reg, reg, 1e-6);
  EXPECT_NEAR(loss.total, cls + 2.0 * reg, 1e-6);
}

}  // namespace
}  // namespace cms::context
