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

#include "cmsrcnn/msfusion/fusion.hpp"
#include "cmsrcnn/msfusion/l2norm.hpp"
#include "cmsrcnn/numcore/gradcheck.hpp"
#include "cmsrcnn/numcore/init.hpp"

namespace cms::msfusion {
namespace {

using numcore::ParamD;
using numcore::Rng;
using numcore::Shape;
using numcore::Tensor;
using numcore::TensorD;

TensorD random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  TensorD t(shape);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

BasicFeatureMap<double> map_of(TensorD t, int stride, Source s) {
  return BasicFeatureMap<double>{std::move(t), stride, s};
}

double pixel_norm(const TensorD& t, int n, int y, int x) {
  double s = 0.0;
  for (int c = 0; c < t.dim(1); ++c) s += t.at(n, c, y, x) * t.at(n, c, y, x);
  return std::sqrt(s);
}

TEST(L2NormalizeTest, HandCases) {
  const auto r = l2_normalize_forward(map_of(TensorD({1, 2, 1, 1}, std::vector<double>{3, 4}), 1,
                                             Source::kConv5));
  EXPECT_NEAR(r.normalized.tensor[0], 0.6, 1e-15);
  EXPECT_NEAR(r.normalized.tensor[1], 0.8, 1e-15);

  const auto z = l2_normalize_forward(FeatureMap{Tensor({1, 3, 1, 1}, 0.0f), 1, Source::kConv5});
  for (float v : z.normalized.tensor.data()) EXPECT_EQ(v, 0.0f);
  const Tensor gz = l2_normalize_backward(Tensor({1, 3, 1, 1}, 1.0f), Tensor({1, 3, 1, 1}, 0.0f),
                                          z.norms);
  for (float v : gz.data()) EXPECT_EQ(v, 0.0f);
}

TEST(L2NormalizeTest, UnitNormProperty) {
  Rng rng(21);
  const TensorD x = random_tensor({1, 5, 100, 100}, rng, -10, 10);
  const auto r = l2_normalize_forward(map_of(x, 1, Source::kConv3));
  for (int y = 0; y < 100; ++y)
    for (int xx = 0; xx < 100; ++xx) EXPECT_NEAR(pixel_norm(r.normalized.tensor, 0, y, xx), 1.0, 1e-6);
}

TEST(L2NormalizeTest, ScaleInvariance) {
  Rng rng(22);
  const Tensor x = random_tensor({1, 4, 20, 20}, rng, -3, 3).cast<float>();
  Tensor scaled = x;
  for (auto& v : scaled.data()) v *= 1000.0f;
  const auto a = l2_normalize_forward(FeatureMap{x, 1, Source::kConv4});
  const auto b = l2_normalize_forward(FeatureMap{scaled, 1, Source::kConv4});
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(a.normalized.tensor[i], b.normalized.tensor[i], 1e-6);
  }
}

TEST(L2NormalizeTest, BackwardAnnihilatesRadialDirection) {
  Rng rng(23);
  const TensorD x = random_tensor({1, 4, 10, 10}, rng, -2, 2);
  const auto r = l2_normalize_forward(map_of(x, 1, Source::kConv5));
  const TensorD g = l2_normalize_backward(x, x, r.norms);  // grad_out parallel to x
  for (double v : g.data()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(L2NormalizeTest, SingleChannelHasZeroGradient) {
  const TensorD x({1, 1, 1, 3}, std::vector<double>{-2.5, 0.7, 4.0});
  const auto r = l2_normalize_forward(map_of(x, 1, Source::kConv5));
  const TensorD g = l2_normalize_backward(TensorD({1, 1, 1, 3}, 1.0), x, r.norms);
  for (double v : g.data()) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(L2NormalizeTest, MatchesFiniteDifferences) {
  Rng rng(24);
  TensorD x = random_tensor({1, 4, 1, 1}, rng, 0.5, 2.0);
  x[1] = -x[1];
  const auto rep = numcore::check_gradient(
      [](const TensorD& in) { return l2_normalize_forward(map_of(in, 1, Source::kConv5)).normalized.tensor; },
      [](const TensorD& in, const TensorD& g) {
        return l2_normalize_backward(g, in, l2_normalize_forward(map_of(in, 1, Source::kConv5)).norms);
      },
      x, {.epsilon = 1e-3, .seed = 3});
  EXPECT_LT(rep.max_rel_error, 1e-4);
}

TEST(ScaleApplyTest, OnesIsIdentity) {
  Rng rng(25);
  const TensorD x = random_tensor({1, 3, 4, 4}, rng);
  BasicScaleVector<double> s("g", 3, 1.0);
  const auto y = scale_apply(map_of(x, 2, Source::kConv3), s);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y.tensor[i], x[i]);
  EXPECT_EQ(y.stride, 2);
}

TEST(ScaleApplyTest, ScalarChannelDoubles) {
  const TensorD xhat({1, 1, 1, 3}, std::vector<double>{1, -1, 1});
  BasicScaleVector<double> s("g", 1, 2.0);
  const auto y = scale_apply(map_of(xhat, 1, Source::kConv5), s);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(y.tensor[i], 2.0 * xhat[i]);
  const TensorD g({1, 1, 1, 3}, std::vector<double>{0.5, 2.0, -1.0});
  const auto grads = scale_backward(g, xhat, s);
  EXPECT_DOUBLE_EQ(grads.grad_gamma[0], 0.5 - 2.0 - 1.0);
  EXPECT_DOUBLE_EQ(s.gamma.grad[0], 0.5 - 2.0 - 1.0);
}

TEST(ScaleApplyTest, RejectsChannelMismatch) {
  BasicScaleVector<double> s("g", 2, 1.0);
  EXPECT_THROW(scale_apply(map_of(TensorD({1, 3, 2, 2}), 1, Source::kConv5), s),
               std::invalid_argument);
}

TEST(ScaleApplyTest, GammaGradientMatchesFiniteDifferences) {
  Rng rng(26);
  const TensorD xhat = random_tensor({2, 3, 3, 3}, rng);
  BasicScaleVector<double> s("g", 3, 1.0);
  const TensorD gamma = random_tensor({3}, rng, 0.5, 3.0);
  auto with_gamma = [&](const TensorD& g) {
    BasicScaleVector<double> sv = s;
    sv.gamma.value = g;
    return sv;
  };
  const auto rep = numcore::check_gradient(
      [&](const TensorD& g) { return scale_apply(map_of(xhat, 1, Source::kConv5), with_gamma(g)).tensor; },
      [&](const TensorD& g, const TensorD& go) {
        auto sv = with_gamma(g);
        return scale_backward(go, xhat, sv).grad_gamma;
      },
      gamma, {.epsilon = 1e-3, .seed = 5});
  EXPECT_LT(rep.max_rel_error, 1e-4);
}

TEST(AlignSpatialTest, PoolsByStrideRatio) {
  Rng rng(27);
  std::vector<BasicFeatureMap<double>> maps{
      map_of(random_tensor({1, 2, 16, 16}, rng), 4, Source::kConv3),
      map_of(random_tensor({1, 3, 8, 8}, rng), 8, Source::kConv4),
      map_of(random_tensor({1, 2, 4, 4}, rng), 16, Source::kConv5)};
  const auto r = align_spatial<double>(maps, Source::kConv5);
  ASSERT_EQ(r.factors, (std::vector<int>{4, 2, 1}));
  for (const auto& m : r.maps) {
    EXPECT_EQ(m.height(), 4);
    EXPECT_EQ(m.width(), 4);
    EXPECT_EQ(m.stride, 16);
  }
  const auto& c3 = maps[0].tensor;
  double expect = c3.at(0, 1, 4, 8);
  for (int y = 4; y < 8; ++y)
    for (int x = 8; x < 12; ++x) expect = std::max(expect, c3.at(0, 1, y, x));
  EXPECT_EQ(r.maps[0].tensor.at(0, 1, 1, 2), expect);
  for (std::size_t i = 0; i < maps[2].tensor.size(); ++i) {
    EXPECT_EQ(r.maps[2].tensor[i], maps[2].tensor[i]);
  }
}

TEST(AlignSpatialTest, RejectsNonIntegerFactor) {
  std::vector<BasicFeatureMap<double>> maps{
      map_of(TensorD({1, 1, 6, 6}), 8, Source::kConv3),
      map_of(TensorD({1, 1, 4, 4}), 12, Source::kConv5)};
  EXPECT_THROW(align_spatial<double>(maps, Source::kConv5), std::exception);
}

TEST(FuseTest, SingleMapIdentityReducerGivesNormalizedMap) {
  Rng rng(28);
  const TensorD x = random_tensor({1, 3, 4, 5}, rng);
  std::vector<BasicFeatureMap<double>> maps{map_of(x, 8, Source::kConv5)};
  std::vector<BasicScaleVector<double>> scales{BasicScaleVector<double>("g", 3, 1.0)};
  TensorD eye({3, 3, 1, 1}, 0.0);
  for (int i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
  const ParamD w("w", eye), b("b", TensorD({3}, 0.0));
  const auto fused = fuse<double>(maps, scales, w, b);
  const auto normed = l2_normalize_forward(maps[0]).normalized.tensor;
  ASSERT_EQ(fused.tensor.shape(), x.shape());
  EXPECT_EQ(fused.stride, 8);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(fused.tensor[i], normed[i], 1e-15);
}

TEST(FuseTest, VggWidthsConcatenateTo1280) {
  Rng rng(29);
  const std::vector<double> init{57.75, 81.67, 81.67};
  BasicFusionBlock<double> block("roi.face", {256, 512, 512}, init, 512, rng);
  EXPECT_EQ(block.in_channels(), 1280);
  EXPECT_EQ(block.weights().value.shape(), (Shape{512, 1280, 1, 1}));
  EXPECT_EQ(block.scales()[0].gamma.value[0], 57.75);
  EXPECT_EQ(block.scales()[2].gamma.value[511], 81.67);
}

TEST(FuseTest, InvariantToScalingAnInput) {
  Rng rng(30);
  const std::vector<double> init{66.84, 94.52};
  BasicFusionBlock<double> block("f", {3, 3}, init, 4, rng);
  std::vector<BasicFeatureMap<double>> maps{map_of(random_tensor({1, 3, 3, 3}, rng), 8, Source::kConv4),
                                            map_of(random_tensor({1, 3, 3, 3}, rng), 8, Source::kConv5)};
  const auto base = block.forward(maps);
  for (auto& v : maps[0].tensor.data()) v *= 1000.0;
  const auto scaled = block.forward(maps);
  for (std::size_t i = 0; i < base.tensor.size(); ++i) {
    EXPECT_NEAR(scaled.tensor[i], base.tensor[i], 1e-5 * std::max(1.0, std::abs(base.tensor[i])));
  }
}

TEST(FuseTest, RejectsMisalignedMaps) {
  Rng rng(31);
  const std::vector<double> init{1.0, 1.0};
  BasicFusionBlock<double> block("f", {2, 2}, init, 2, rng);
  std::vector<BasicFeatureMap<double>> maps{map_of(TensorD({1, 2, 4, 4}, 1.0), 8, Source::kConv4),
                                            map_of(TensorD({1, 2, 2, 2}, 1.0), 16, Source::kConv5)};
  EXPECT_THROW(block.forward(maps), std::exception);
}

TEST(FuseTest, TwoMapThreeChannelGradientCheck) {
  Rng rng(32);
  const std::vector<double> init{2.0, 3.0};
  BasicFusionBlock<double> block("f", {3, 3}, init, 2, rng);
  TensorD a = random_tensor({1, 3, 2, 2}, rng, 1.0, 3.0);
  const TensorD b = random_tensor({1, 3, 2, 2}, rng, 1.0, 3.0);
  a[1] = -a[1];
  auto forward = [&](const TensorD& in) {
    std::vector<BasicFeatureMap<double>> maps{map_of(in, 4, Source::kConv4), map_of(b, 4, Source::kConv5)};
    return block.forward(maps).tensor;
  };
  auto backward = [&](const TensorD& in, const TensorD& g) {
    std::vector<BasicFeatureMap<double>> maps{map_of(in, 4, Source::kConv4), map_of(b, 4, Source::kConv5)};
    FuseCache<double> cache;
    block.forward(maps, &cache);
    return block.backward(g, cache)[0];
  };
  const auto rep = numcore::check_gradient(forward, backward, a, {.epsilon = 1e-3, .seed = 7});
  EXPECT_LT(rep.max_rel_error, 1e-4);
}

}  // namespace
}  // namespace cms::msfusion
