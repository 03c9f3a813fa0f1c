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

#include "cmsrcnn/harness/gradsuite.hpp"

#include <fmt/format.h>

#include <functional>
#include <random>

#include "cmsrcnn/context/head.hpp"
#include "cmsrcnn/context/roi.hpp"
#include "cmsrcnn/msfusion/fusion.hpp"
#include "cmsrcnn/msfusion/l2norm.hpp"
#include "cmsrcnn/numcore/layers.hpp"
#include "cmsrcnn/numcore/losses.hpp"
#include "cmsrcnn/proposal/rpn.hpp"

namespace cms::harness {
namespace {

using numcore::GradCheckOptions;
using numcore::ParamD;
using numcore::Rng;
using numcore::Shape;
using numcore::TensorD;
using Regime = std::vector<std::int64_t>;
using MapD = msfusion::BasicFeatureMap<double>;

TensorD random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  TensorD t(shape);
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Magnitudes in [lo, hi] with random signs. Keeps per-pixel norms away from
// zero, where the O(eps^2) truncation error of central differences on the
// normalization grows like 1 / norm^3.
TensorD random_signed(const Shape& shape, Rng& rng, double lo = 1.0, double hi = 3.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::bernoulli_distribution sign(0.5);
  TensorD t(shape);
  for (double& v : t.data()) v = sign(rng) ? u(rng) : -u(rng);
  return t;
}

ParamD random_param(const std::string& name, const Shape& shape, Rng& rng, double lo = -1.0,
                    double hi = 1.0) {
  return ParamD(name, random_tensor(shape, rng, lo, hi));
}

Regime positive_mask(const TensorD& t) {
  Regime r(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) r[i] = t[i] > 0.0;
  return r;
}

// Zero-initialized biases put ReLU pre-activations exactly on the kink.
template <typename Block>
void randomize_biases(Block& block, Rng& rng) {
  for (ParamD* p : block.params()) {
    if (p->name.ends_with(".bias")) p->value = random_tensor(p->value.shape(), rng, -0.5, 0.5);
  }
}

void append(Regime& dst, const Regime& src) { dst.insert(dst.end(), src.begin(), src.end()); }

TensorD concat_flat(const TensorD& a, const TensorD& b) {
  std::vector<double> v(a.data().begin(), a.data().end());
  v.insert(v.end(), b.data().begin(), b.data().end());
  const int n = static_cast<int>(v.size());
  return TensorD({n}, std::move(v));
}

std::pair<TensorD, TensorD> split_flat(const TensorD& g, const Shape& a, const Shape& b) {
  const std::size_t na = numcore::shape_numel(a);
  std::vector<double> va(g.data().begin(), g.data().begin() + na);
  std::vector<double> vb(g.data().begin() + na, g.data().end());
  return {TensorD(a, std::move(va)), TensorD(b, std::move(vb))};
}

class Suite {
 public:
  explicit Suite(std::uint64_t seed) : seed_(seed) {}

  void input(const std::string& name, const numcore::ForwardFn& forward,
             const numcore::BackwardFn& backward, const TensorD& x,
             numcore::RegimeFn regime = {}) {
    GradCheckOptions opt{1e-3, seed_ + cases_.size(), std::move(regime)};
    cases_.push_back({name, numcore::check_gradient(forward, backward, x, opt)});
  }

  // Checks d(output)/d(param) by routing the probe through param.value.
  void param(const std::string& name, ParamD& p, const std::function<TensorD()>& forward,
             const std::function<void(const TensorD&)>& backward,
             const std::function<Regime()>& regime = {}) {
    const TensorD original = p.value;
    numcore::RegimeFn r;
    if (regime) {
      r = [&](const TensorD& x) {
        p.value = x;
        return regime();
      };
    }
    input(
        name,
        [&](const TensorD& x) {
          p.value = x;
          return forward();
        },
        [&](const TensorD& x, const TensorD& g) {
          p.value = x;
          p.zero_grad();
          backward(g);
          return p.grad;
        },
        original, r);
    p.value = original;
    p.zero_grad();
  }

  std::vector<GradCase> take() { return std::move(cases_); }

 private:
  std::uint64_t seed_;
  std::vector<GradCase> cases_;
};

void check_dense(Suite& suite, Rng& rng) {
  // conv2d: strided 3x3 with padding, and the pointwise 1x1 path.
  for (const auto& [label, k, geom] :
       {std::tuple{"conv2d", 3, numcore::ConvGeometry{2, 1}},
        std::tuple{"conv2d_1x1", 1, numcore::ConvGeometry{1, 0}}}) {
    TensorD x = random_tensor({2, 3, 5, 5}, rng);
    ParamD w = random_param("w", {4, 3, k, k}, rng);
    ParamD b = random_param("b", {4}, rng);
    const auto g = geom;
    suite.input(
        std::string(label) + "/input",
        [&](const TensorD& in) { return numcore::conv2d(in, w, b, g); },
        [&](const TensorD& in, const TensorD& go) { return numcore::conv2d_backward(go, in, w, b, g); }, x);
    suite.param(
        std::string(label) + "/weights", w, [&] { return numcore::conv2d(x, w, b, g); },
        [&](const TensorD& go) { numcore::conv2d_backward(go, x, w, b, g); });
    suite.param(
        std::string(label) + "/bias", b, [&] { return numcore::conv2d(x, w, b, g); },
        [&](const TensorD& go) { numcore::conv2d_backward(go, x, w, b, g); });
  }

  for (const auto& [label, k, stride] : {std::tuple{"max_pool2d", 2, 2}, std::tuple{"max_pool2d_overlap", 3, 2}}) {
    const TensorD x = random_tensor({1, 2, 7, 7}, rng);
    const int kk = k, ss = stride;
    suite.input(
        std::string(label) + "/input",
        [=](const TensorD& in) { return numcore::max_pool2d(in, kk, ss).output; },
        [=](const TensorD& in, const TensorD& go) {
          const auto p = numcore::max_pool2d(in, kk, ss);
          return numcore::max_pool2d_backward(go, p.argmax, in.shape());
        },
        x, [=](const TensorD& in) { return numcore::max_pool2d(in, kk, ss).argmax; });
  }

  {
    const TensorD x = random_tensor({2, 3, 4, 4}, rng);
    suite.input(
        "relu/input", [](const TensorD& in) { return numcore::relu(in); },
        [](const TensorD& in, const TensorD& go) { return numcore::relu_backward(go, in); }, x,
        positive_mask);
  }

  {
    TensorD x = random_tensor({3, 7}, rng);
    ParamD w = random_param("w", {5, 7}, rng);
    ParamD b = random_param("b", {5}, rng);
    suite.input(
        "fully_connected/input", [&](const TensorD& in) { return numcore::fully_connected(in, w, b); },
        [&](const TensorD& in, const TensorD& go) { return numcore::fully_connected_backward(go, in, w, b); },
        x);
    suite.param(
        "fully_connected/weights", w, [&] { return numcore::fully_connected(x, w, b); },
        [&](const TensorD& go) { numcore::fully_connected_backward(go, x, w, b); });
    suite.param(
        "fully_connected/bias", b, [&] { return numcore::fully_connected(x, w, b); },
        [&](const TensorD& go) { numcore::fully_connected_backward(go, x, w, b); });
  }
}

void check_losses(Suite& suite, Rng& rng) {
  {
    const TensorD logits = random_tensor({5, 3}, rng, -2.0, 2.0);
    const std::vector<int> labels{0, 2, numcore::kIgnoreLabel, 1, 2};
    auto scalar = [labels](const TensorD& in) {
      return TensorD({1}, numcore::softmax_cross_entropy(in, labels).value);
    };
    suite.input(
        "softmax_cross_entropy/logits", scalar,
        [labels](const TensorD& in, const TensorD& go) {
          TensorD g = numcore::softmax_cross_entropy(in, labels).grad;
          for (double& v : g.data()) v *= go[0];
          return g;
        },
        logits);
  }
  {
    const TensorD pred = random_tensor({4, 4}, rng, -2.5, 2.5);
    const TensorD target = random_tensor({4, 4}, rng);
    TensorD weights({4, 4});
    for (int c = 0; c < 4; ++c) {
      weights[c] = 1.0;
      weights[8 + c] = 1.0;
      weights[12 + c] = 0.5;
    }
    suite.input(
        "smooth_l1/pred",
        [=](const TensorD& in) { return TensorD({1}, numcore::smooth_l1(in, target, weights).value); },
        [=](const TensorD& in, const TensorD& go) {
          TensorD g = numcore::smooth_l1(in, target, weights).grad;
          for (double& v : g.data()) v *= go[0];
          return g;
        },
        pred, [=](const TensorD& in) {
          Regime r(in.size());
          for (std::size_t i = 0; i < in.size(); ++i) r[i] = std::abs(in[i] - target[i]) < 1.0;
          return r;
        });
  }
}

void check_fusion(Suite& suite, Rng& rng) {
  {
    const TensorD x = random_signed({2, 4, 3, 3}, rng);
    suite.input(
        "l2_normalize/input",
        [](const TensorD& in) { return msfusion::l2_normalize_forward(MapD{in, 1}).normalized.tensor; },
        [](const TensorD& in, const TensorD& go) {
          const auto r = msfusion::l2_normalize_forward(MapD{in, 1});
          return msfusion::l2_normalize_backward(go, in, r.norms);
        },
        x);
  }
  {
    TensorD x = random_tensor({2, 3, 2, 2}, rng);
    msfusion::BasicScaleVector<double> scale("gamma", 3, 1.0);
    scale.gamma.value = random_tensor({3}, rng, 0.5, 3.0);
    suite.input(
        "scale_apply/input",
        [&](const TensorD& in) { return msfusion::scale_apply(MapD{in, 1}, scale).tensor; },
        [&](const TensorD& in, const TensorD& go) {
          return msfusion::scale_backward(go, in, scale).grad_normalized;
        },
        x);
    suite.param(
        "scale_apply/gamma", scale.gamma, [&] { return msfusion::scale_apply(MapD{x, 1}, scale).tensor; },
        [&](const TensorD& go) { msfusion::scale_backward(go, x, scale); });
  }

  {
    // Three sources at strides 2/4/8 pooled down to the deepest grid.
    std::vector<MapD> maps{MapD{random_tensor({1, 2, 8, 8}, rng), 2, msfusion::Source::kConv3},
                           MapD{random_tensor({1, 3, 4, 4}, rng), 4, msfusion::Source::kConv4},
                           MapD{random_tensor({1, 3, 2, 2}, rng), 8, msfusion::Source::kConv5}};
    for (int k = 0; k < 2; ++k) {
      suite.input(
          fmt::format("align_spatial/{}", msfusion::source_name(maps[k].source)),
          [&, k](const TensorD& in) {
            auto m = maps;
            m[k].tensor = in;
            return msfusion::align_spatial<double>(m, msfusion::Source::kConv5).maps[k].tensor;
          },
          [&, k](const TensorD& in, const TensorD& go) {
            auto m = maps;
            m[k].tensor = in;
            const auto al = msfusion::align_spatial<double>(m, msfusion::Source::kConv5);
            std::vector<TensorD> grads;
            for (const auto& a : al.maps) grads.push_back(TensorD(a.tensor.shape()));
            grads[k] = go;
            return msfusion::align_spatial_backward<double>(grads, al)[k];
          },
          maps[k].tensor, [&, k](const TensorD& in) {
            auto m = maps;
            m[k].tensor = in;
            return msfusion::align_spatial<double>(m, msfusion::Source::kConv5).argmax[k];
          });
    }
  }

  {
    Rng init(7);
    const std::vector<double> gammas{1.5, 2.0, 2.5};
    msfusion::BasicFusionBlock<double> block("fuse", {2, 3, 3}, gammas, 4, init);
    std::vector<MapD> maps;
    for (int k = 0; k < 3; ++k) {
      maps.push_back(MapD{random_signed({1, k == 0 ? 2 : 3, 3, 3}, rng), 8, static_cast<msfusion::Source>(k)});
    }
    auto forward = [&] { return block.forward(maps).tensor; };
    auto backward = [&](const TensorD& go) {
      msfusion::FuseCache<double> cache;
      block.forward(maps, &cache);
      return block.backward(go, cache);
    };
    for (int k = 0; k < 3; ++k) {
      suite.input(
          fmt::format("fuse/{}", msfusion::source_name(maps[k].source)),
          [&, k](const TensorD& in) {
            const TensorD keep = maps[k].tensor;
            maps[k].tensor = in;
            TensorD out = forward();
            maps[k].tensor = keep;
            return out;
          },
          [&, k](const TensorD& in, const TensorD& go) {
            const TensorD keep = maps[k].tensor;
            maps[k].tensor = in;
            TensorD g = backward(go)[k];
            maps[k].tensor = keep;
            return g;
          },
          maps[k].tensor);
    }
    for (ParamD* p : block.params()) {
      suite.param("fuse/" + p->name, *p, forward, [&](const TensorD& go) { backward(go); });
    }
  }
}

void check_roi(Suite& suite, Rng& rng) {
  const std::vector<proposal::Box> boxes{proposal::Box::from_xywh(1, 2, 7, 5),
                                         proposal::Box::from_xywh(0, 0, 12, 12),
                                         proposal::Box::from_xywh(6, 7, 3, 4)};
  {
    const MapD map{random_tensor({1, 3, 6, 6}, rng), 2, msfusion::Source::kConv4};
    auto pool = [&](const TensorD& in) {
      return context::roi_pool<double>(MapD{in, map.stride, map.source}, boxes, 2,
                                       context::RegionKind::kFace);
    };
    suite.input(
        "roi_pool/map", [&](const TensorD& in) { return pool(in).pooled; },
        [&](const TensorD& in, const TensorD& go) { return context::roi_pool_backward(go, pool(in)); },
        map.tensor, [&](const TensorD& in) { return pool(in).argmax; });
  }
  {
    Rng init(11);
    const std::vector<double> gammas{1.2, 1.8, 2.4};
    msfusion::BasicFusionBlock<double> block("roi_fuse", {2, 3, 3}, gammas, 3, init);
    std::vector<context::RoiBatch<double>> batches;
    const int strides[3] = {2, 4, 8};
    const int sizes[3] = {8, 4, 2};
    for (int k = 0; k < 3; ++k) {
      const MapD map{random_signed({1, k == 0 ? 2 : 3, sizes[k], sizes[k]}, rng), strides[k],
                     static_cast<msfusion::Source>(k)};
      batches.push_back(context::roi_pool<double>(map, boxes, 2, context::RegionKind::kBody));
    }
    auto forward = [&] { return context::roi_fuse<double>(batches, block); };
    auto backward = [&](const TensorD& go) {
      msfusion::FuseCache<double> cache;
      context::roi_fuse<double>(batches, block, &cache);
      return context::roi_fuse_backward(go, cache, block);
    };
    for (int k = 0; k < 3; ++k) {
      suite.input(
          fmt::format("roi_fuse/{}", msfusion::source_name(batches[k].source)),
          [&, k](const TensorD& in) {
            const TensorD keep = batches[k].pooled;
            batches[k].pooled = in;
            TensorD out = forward();
            batches[k].pooled = keep;
            return out;
          },
          [&, k](const TensorD& in, const TensorD& go) {
            const TensorD keep = batches[k].pooled;
            batches[k].pooled = in;
            TensorD g = backward(go)[k];
            batches[k].pooled = keep;
            return g;
          },
          batches[k].pooled);
    }
    for (ParamD* p : block.params()) {
      suite.param("roi_fuse/" + p->name, *p, forward, [&](const TensorD& go) { backward(go); });
    }
  }
}

void check_heads(Suite& suite, Rng& rng) {
  {
    Rng init(13);
    proposal::BasicRpnHead<double> head("rpn", 4, 3, 2, init);
    randomize_biases(head, rng);
    TensorD x = random_tensor({1, 4, 4, 4}, rng);
    Shape logit_shape, delta_shape;
    auto forward = [&](const TensorD& in) {
      const auto out = head.forward(in);
      logit_shape = out.logits.shape();
      delta_shape = out.deltas.shape();
      return concat_flat(out.logits, out.deltas);
    };
    auto backward = [&](const TensorD& in, const TensorD& go) {
      proposal::RpnCache<double> cache;
      const auto out = head.forward(in, &cache);
      auto [gl, gd] = split_flat(go, out.logits.shape(), out.deltas.shape());
      return head.backward({gl, gd}, cache);
    };
    auto regime = [&](const TensorD& in) {
      proposal::RpnCache<double> cache;
      head.forward(in, &cache);
      return positive_mask(cache.pre_activation);
    };
    suite.input("rpn_head/input", forward, backward, x, regime);
    for (ParamD* p : head.params()) {
      suite.param(
          "rpn_head/" + p->name, *p, [&] { return forward(x); },
          [&](const TensorD& go) { backward(x, go); }, [&] { return regime(x); });
    }
  }
  {
    Rng init(17);
    const int rows = 3, c = 2, pool = 2, dim = c * pool * pool;
    context::BasicDetectionHead<double> head("det", dim, dim, 5, init);
    randomize_biases(head, rng);
    TensorD face = random_tensor({rows, c, pool, pool}, rng);
    TensorD body = random_tensor({rows, c, pool, pool}, rng);
    auto run = [&] {
      const auto out = head.forward(face, &body);
      return concat_flat(out.logits, out.deltas);
    };
    auto grads = [&](const TensorD& go) {
      context::HeadCache<double> cache;
      const auto out = head.forward(face, &body, &cache);
      auto [gl, gd] = split_flat(go, out.logits.shape(), out.deltas.shape());
      return head.backward({gl, gd}, cache);
    };
    auto regime = [&] {
      context::HeadCache<double> cache;
      head.forward(face, &body, &cache);
      Regime r = positive_mask(cache.face_pre1);
      append(r, positive_mask(cache.face_pre2));
      append(r, positive_mask(cache.body_pre1));
      append(r, positive_mask(cache.body_pre2));
      return r;
    };
    for (TensorD* blob : {&face, &body}) {
      const bool is_face = blob == &face;
      suite.input(
          is_face ? "detection_head/face" : "detection_head/body",
          [&, blob](const TensorD& in) {
            const TensorD keep = *blob;
            *blob = in;
            TensorD out = run();
            *blob = keep;
            return out;
          },
          [&, blob, is_face](const TensorD& in, const TensorD& go) {
            const TensorD keep = *blob;
            *blob = in;
            auto g = grads(go);
            *blob = keep;
            return is_face ? g.face : g.body;
          },
          *blob, [&, blob](const TensorD& in) {
            const TensorD keep = *blob;
            *blob = in;
            Regime r = regime();
            *blob = keep;
            return r;
          });
    }
    for (ParamD* p : head.params()) {
      suite.param("detection_head/" + p->name, *p, run, [&](const TensorD& go) { grads(go); }, regime);
    }
  }
}

}  // namespace

std::vector<GradCase> run_grad_suite(std::uint64_t seed) {
  Suite suite(seed);
  Rng rng(seed);
  check_dense(suite, rng);
  check_losses(suite, rng);
  check_fusion(suite, rng);
  check_roi(suite, rng);
  check_heads(suite, rng);
  return suite.take();
}

}  // namespace cms::harness
