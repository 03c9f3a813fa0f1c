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
#include <random>

#include "cmsrcnn/evalkit/evaluate.hpp"
#include "cmsrcnn/numcore/gradcheck.hpp"
#include "cmsrcnn/numcore/losses.hpp"
#include "cmsrcnn/proposal/anchors.hpp"
#include "cmsrcnn/proposal/nms.hpp"
#include "cmsrcnn/proposal/rpn.hpp"

namespace cms::proposal {
namespace {

using numcore::Rng;
using numcore::Tensor;

TEST(AnchorsTest, SingleCell) {
  const std::vector<double> scales{8}, ratios{1};
  const auto a = generate_anchors(1, 1, 16, scales, ratios);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0].box.cx, 8.0);
  EXPECT_EQ(a[0].box.cy, 8.0);
  EXPECT_EQ(a[0].box.w, 128.0);
  EXPECT_EQ(a[0].box.h, 128.0);
}

TEST(AnchorsTest, CountAndShape) {
  const std::vector<double> scales{1, 2, 4}, ratios{0.5, 1, 2};
  const auto a = generate_anchors(2, 2, 16, scales, ratios);
  ASSERT_EQ(a.size(), 36u);
  for (const auto& an : a) {
    const double s = scales[an.scale_index] * 16;
    EXPECT_NEAR(an.box.area(), s * s, 1e-9 * s * s);
    EXPECT_NEAR(an.box.w / an.box.h, ratios[an.ratio_index], 1e-12);
  }
  EXPECT_THROW(generate_anchors(2, 2, 16, std::vector<double>{}, ratios), std::invalid_argument);
}

TEST(AnchorsTest, TranslationEquivariant) {
  const std::vector<double> scales{0.75, 2}, ratios{0.8, 1.5};
  const int stride = 8, h = 5, w = 7;
  const auto a = generate_anchors(h, w, stride, scales, ratios);
  const std::size_t per_cell = scales.size() * ratios.size();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& base = a[i % per_cell];
    EXPECT_EQ(a[i].box.cx, base.box.cx + a[i].col * stride);
    EXPECT_EQ(a[i].box.cy, base.box.cy + a[i].row * stride);
    EXPECT_EQ(a[i].box.w, base.box.w);
    EXPECT_EQ(a[i].box.h, base.box.h);
  }
}

TEST(DeltasTest, IdentityAndHandCase) {
  const Box src{10, 10, 2, 2};
  const Box same = decode_deltas(src, {0, 0, 0, 0});
  EXPECT_EQ(same.cx, src.cx);
  EXPECT_EQ(same.w, src.w);
  const Deltas t = encode_deltas(src, Box{10, 13, 4, 8});
  EXPECT_EQ(t[0], 0.0);
  EXPECT_EQ(t[1], 1.5);
  EXPECT_DOUBLE_EQ(t[2], std::log(2.0));
  EXPECT_DOUBLE_EQ(t[3], std::log(4.0));
}

TEST(DeltasTest, RoundTrip) {
  Rng rng(40);
  std::uniform_real_distribution<double> pos(-100, 100), ext(2, 100);
  for (int i = 0; i < 1000; ++i) {
    const Box src{pos(rng), pos(rng), ext(rng), ext(rng)};
    const Box dst{pos(rng), pos(rng), ext(rng), ext(rng)};
    const Box back = decode_deltas(src, encode_deltas(src, dst));
    EXPECT_NEAR(back.cx, dst.cx, 1e-9 * std::max(1.0, std::abs(dst.cx)));
    EXPECT_NEAR(back.cy, dst.cy, 1e-9 * std::max(1.0, std::abs(dst.cy)));
    EXPECT_NEAR(back.w, dst.w, 1e-9 * dst.w);
    EXPECT_NEAR(back.h, dst.h, 1e-9 * dst.h);
  }
}

TEST(DeltasTest, WidthMonotoneInTw) {
  const Box src{0, 0, 5, 7};
  double prev = 0.0;
  for (double tw = -3.0; tw <= 3.0; tw += 0.25) {
    const double w = decode_deltas(src, {0, 0, tw, 0}).w;
    EXPECT_GT(w, prev);
    prev = w;
  }
}

TEST(NmsTest, HandCases) {
  const std::vector<Box> one{Box{5, 5, 4, 4}};
  const std::vector<double> s1{0.3};
  EXPECT_EQ(nms(one, s1, 0.5), (std::vector<std::size_t>{0}));

  const std::vector<Box> twins{Box{5, 5, 4, 4}, Box{5, 5, 4, 4}};
  const std::vector<double> s2{0.9, 0.8};
  EXPECT_EQ(nms(twins, s2, 0.5), (std::vector<std::size_t>{0}));

  // A-B and B-C overlap above the threshold, A and C are disjoint.
  const auto a = Box::from_corners(0, 0, 10, 10);
  const auto b = Box::from_corners(5, 0, 15, 10);
  const auto c = Box::from_corners(10, 0, 20, 10);
  ASSERT_NEAR(evalkit::iou(a, b), 1.0 / 3.0, 1e-12);
  ASSERT_NEAR(evalkit::iou(b, c), 1.0 / 3.0, 1e-12);
  ASSERT_EQ(evalkit::iou(a, c), 0.0);
  const std::vector<Box> chain{a, b, c};
  const std::vector<double> s3{0.9, 0.8, 0.7};
  EXPECT_EQ(nms(chain, s3, 0.3), (std::vector<std::size_t>{0, 2}));
}

TEST(NmsTest, TiesBreakByIndex) {
  const std::vector<Box> boxes{Box{5, 5, 2, 2}, Box{50, 50, 2, 2}, Box{90, 9, 2, 2}};
  const std::vector<double> scores{0.5, 0.5, 0.5};
  EXPECT_EQ(nms(boxes, scores, 0.5), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(order_by_score(scores), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(NmsTest, Postconditions) {
  Rng rng(41);
  std::uniform_real_distribution<double> pos(0, 60), ext(2, 30), score(0, 1);
  std::uniform_int_distribution<int> count(0, 40);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = count(rng);
    std::vector<Box> boxes;
    std::vector<double> scores;
    for (int i = 0; i < n; ++i) {
      boxes.push_back(Box::from_xywh(pos(rng), pos(rng), ext(rng), ext(rng)));
      scores.push_back(std::round(score(rng) * 20) / 20);
    }
    const auto kept = nms(boxes, scores, 0.45);
    std::vector<bool> is_kept(n, false);
    for (std::size_t k = 0; k < kept.size(); ++k) {
      ASSERT_LT(kept[k], static_cast<std::size_t>(n));
      ASSERT_FALSE(is_kept[kept[k]]);
      is_kept[kept[k]] = true;
      if (k > 0) {
        const bool ordered = scores[kept[k - 1]] > scores[kept[k]] ||
                             (scores[kept[k - 1]] == scores[kept[k]] && kept[k - 1] < kept[k]);
        EXPECT_TRUE(ordered);
      }
      for (std::size_t j = 0; j < k; ++j) EXPECT_LE(evalkit::iou(boxes[kept[j]], boxes[kept[k]]), 0.45);
    }
    for (int i = 0; i < n; ++i) {
      if (is_kept[i]) continue;
      bool covered = false;
      for (std::size_t k : kept) covered = covered || evalkit::iou(boxes[k], boxes[i]) > 0.45;
      EXPECT_TRUE(covered);
    }
  }
}

TEST(NmsTest, RejectsBadInput) {
  const std::vector<Box> boxes{Box{5, 5, 2, 2}};
  EXPECT_THROW(nms(boxes, std::vector<double>{}, 0.5), std::invalid_argument);
  EXPECT_THROW(nms(boxes, std::vector<double>{NAN}, 0.5), std::invalid_argument);
}

TEST(RpnHeadTest, ZeroWeightsGiveHalfObjectness) {
  Rng rng(42);
  RpnHead head("rpn", 4, 8, 3, rng);
  for (auto* p : head.params()) p->value.fill(0.0f);
  const auto out = head.forward(Tensor({1, 4, 3, 3}, 1.0f));
  EXPECT_EQ(out.logits.shape(), (numcore::Shape{1, 6, 3, 3}));
  EXPECT_EQ(out.deltas.shape(), (numcore::Shape{1, 12, 3, 3}));
  const Tensor probs = numcore::softmax(anchor_rows(out.logits, 2));
  for (int r = 0; r < probs.dim(0); ++r) EXPECT_FLOAT_EQ(probs[r * 2 + 1], 0.5f);
}

TEST(RpnHeadTest, AnchorRowsRoundTrip) {
  Rng rng(43);
  std::uniform_real_distribution<float> u(-1, 1);
  Tensor t({1, 8, 2, 3});
  for (auto& v : t.data()) v = u(rng);
  const Tensor rows = anchor_rows(t, 4);
  EXPECT_EQ(rows.shape(), (numcore::Shape{12, 4}));
  // Row for cell (y=1, x=2), anchor 1 holds channels 4..7 at that cell.
  for (int j = 0; j < 4; ++j) EXPECT_EQ(rows[(1 * 3 * 2 + 2 * 2 + 1) * 4 + j], t.at(0, 4 + j, 1, 2));
  const Tensor back = anchor_rows_backward(rows, t.shape(), 4);
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(back[i], t[i]);
}

RpnOutput<float> random_output(int a, int h, int w, Rng& rng, bool equal_logits) {
  std::uniform_real_distribution<float> u(-2, 2);
  RpnOutput<float> out{Tensor({1, 2 * a, h, w}), Tensor({1, 4 * a, h, w})};
  for (auto& v : out.logits.data()) v = equal_logits ? 0.0f : u(rng);
  for (auto& v : out.deltas.data()) v = 0.5f * u(rng);
  return out;
}

TEST(ProposeTest, ZeroTopKIsEmpty) {
  Rng rng(44);
  const std::vector<double> scales{1, 2}, ratios{1};
  const auto anchors = generate_anchors(4, 4, 8, scales, ratios);
  const auto out = random_output(2, 4, 4, rng, false);
  EXPECT_TRUE(propose_from_outputs(out, anchors, 32, 32, {100, 0, 0.7, 1.0}).empty());
}

TEST(ProposeTest, BoxesStayInsideImage) {
  Rng rng(45);
  const std::vector<double> scales{1, 3}, ratios{0.5, 2};
  const auto anchors = generate_anchors(6, 5, 8, scales, ratios);
  for (int trial = 0; trial < 20; ++trial) {
    const auto out = random_output(4, 6, 5, rng, false);
    const auto props = propose_from_outputs(out, anchors, 40, 48, {50, 20, 0.7, 2.0});
    EXPECT_LE(props.size(), 20u);
    for (std::size_t i = 0; i < props.size(); ++i) {
      const Box& b = props[i].box;
      EXPECT_GE(b.x1(), 0.0);
      EXPECT_GE(b.y1(), 0.0);
      EXPECT_LE(b.x2(), 40.0);
      EXPECT_LE(b.y2(), 48.0);
      EXPECT_GE(b.w, 2.0);
      EXPECT_GE(b.h, 2.0);
      if (i > 0) {
        EXPECT_GE(props[i - 1].objectness, props[i].objectness);
      }
    }
  }
}

TEST(ProposeTest, EqualObjectnessFollowsAnchorOrder) {
  Rng rng(46);
  const std::vector<double> scales{1}, ratios{1};
  const auto anchors = generate_anchors(3, 3, 16, scales, ratios);
  RpnOutput<float> out{Tensor({1, 2, 3, 3}, 0.0f), Tensor({1, 4, 3, 3}, 0.0f)};
  const auto props = propose_from_outputs(out, anchors, 48, 48, {100, 100, 0.7, 1.0});
  ASSERT_EQ(props.size(), 9u);
  for (std::size_t i = 0; i < props.size(); ++i) {
    EXPECT_EQ(props[i].box.cx, anchors[i].box.cx);
    EXPECT_EQ(props[i].box.cy, anchors[i].box.cy);
  }
}

TEST(RpnHeadTest, GradientCheck) {
  Rng rng(47);
  using numcore::TensorD;
  BasicRpnHead<double> head("rpn", 3, 4, 2, rng);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto* p : head.params()) {
    if (p->value.order() == 1) for (auto& v : p->value.data()) v = 0.5 * u(rng);
  }
  TensorD x({1, 3, 4, 4});
  for (auto& v : x.data()) v = u(rng);
  auto pack = [](const RpnOutput<double>& o) {
    TensorD flat({static_cast<int>(o.logits.size() + o.deltas.size())});
    std::copy(o.logits.data().begin(), o.logits.data().end(), flat.data().begin());
    std::copy(o.deltas.data().begin(), o.deltas.data().end(), flat.data().begin() + o.logits.size());
    return flat;
  };
  auto regime = [&](const TensorD& in) {
    RpnCache<double> cache;
    head.forward(in, &cache);
    std::vector<std::int64_t> mask;
    for (double v : cache.pre_activation.data()) mask.push_back(v > 0);
    return mask;
  };
  const auto rep = numcore::check_gradient(
      [&](const TensorD& in) { return pack(head.forward(in)); },
      [&](const TensorD& in, const TensorD& g) {
        RpnCache<double> cache;
        const auto out = head.forward(in, &cache);
        RpnOutput<double> grads{out.logits, out.deltas};
        std::copy(g.data().begin(), g.data().begin() + out.logits.size(), grads.logits.data().begin());
        std::copy(g.data().begin() + out.logits.size(), g.data().end(), grads.deltas.data().begin());
        auto copy = head;
        return copy.backward(grads, cache);
      },
      x, {.epsilon = 1e-3, .seed = 9, .regime = regime});
  EXPECT_GT(rep.checked, 0u);
  EXPECT_LT(rep.max_rel_error, 1e-4);
}

}  // namespace
}  // namespace cms::proposal
