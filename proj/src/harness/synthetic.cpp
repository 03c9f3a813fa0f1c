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

#include "cmsrcnn/harness/synthetic.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "cmsrcnn/evalkit/io.hpp"

namespace cms::harness {

using proposal::Box;

namespace {

class Canvas {
 public:
  explicit Canvas(int size) : size_(size), px_(static_cast<std::size_t>(size) * size, 0.0) {}

  int size() const { return size_; }
  double& at(int x, int y) { return px_[static_cast<std::size_t>(y) * size_ + x]; }

  // Paints value(x, y) over the pixels covered by `inside`, weighting by
  // 2x2 supersampled coverage.
  void paint(const Box& bounds, const std::function<bool(double, double)>& inside,
             const std::function<double(int, int)>& value) {
    const int x0 = std::max(0, static_cast<int>(std::floor(bounds.x1())));
    const int y0 = std::max(0, static_cast<int>(std::floor(bounds.y1())));
    const int x1 = std::min(size_, static_cast<int>(std::ceil(bounds.x2())));
    const int y1 = std::min(size_, static_cast<int>(std::ceil(bounds.y2())));
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        int hits = 0;
        for (double sy : {0.25, 0.75}) {
          for (double sx : {0.25, 0.75}) hits += inside(x + sx, y + sy) ? 1 : 0;
        }
        if (hits == 0) continue;
        const double c = hits / 4.0;
        at(x, y) = at(x, y) * (1.0 - c) + value(x, y) * c;
      }
    }
  }

  GrayImage quantize() const {
    GrayImage img(size_, size_);
    for (std::size_t i = 0; i < px_.size(); ++i) {
      img.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(px_[i]), 0L, 255L));
    }
    return img;
  }

 private:
  int size_;
  std::vector<double> px_;
};

double uniform(numcore::Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(numcore::Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

struct Texture {
  int kind = 0;  // 0 horizontal stripes, 1 vertical stripes, 2 diagonal, 3 checker
  int period = 2;
  double a = 0.0, b = 255.0;
  int phase = 0;

  double operator()(int x, int y) const {
    int t = 0;
    switch (kind) {
      case 0: t = (y + phase) / period; break;
      case 1: t = (x + phase) / period; break;
      case 2: t = (x + y + phase) / period; break;
      default: t = (x / period) + (y / period) + phase; break;
    }
    return (t % 2 == 0) ? a : b;
  }
};

Texture random_texture(numcore::Rng& rng) {
  Texture t;
  t.kind = uniform_int(rng, 0, 3);
  t.period = uniform_int(rng, 1, 3);
  t.a = uniform(rng, 0.0, 110.0);
  t.b = uniform(rng, 150.0, 255.0);
  t.phase = uniform_int(rng, 0, 5);
  return t;
}

bool overlaps(const Box& a, const Box& b, double margin = 0.0) {
  return a.x1() - margin < b.x2() && b.x1() - margin < a.x2() && a.y1() - margin < b.y2() &&
         b.y1() - margin < a.y2();
}

bool overlaps_any(const Box& a, const std::vector<Box>& others, double margin = 0.0) {
  return std::any_of(others.begin(), others.end(),
                     [&](const Box& b) { return overlaps(a, b, margin); });
}

void draw_face(Canvas& canvas, const Box& f, numcore::Rng& rng) {
  const double skin = uniform(rng, 175.0, 235.0);
  const double dark = uniform(rng, 10.0, 50.0);
  canvas.paint(
      f,
      [&](double x, double y) {
        const double dx = (x - f.cx) / (f.w / 2), dy = (y - f.cy) / (f.h / 2);
        return dx * dx + dy * dy <= 1.0;
      },
      [&](int, int) { return skin; });
  const double ey = f.y1() + 0.4 * f.h;
  const double erx = std::max(0.55, 0.13 * f.w), ery = std::max(0.55, 0.09 * f.h);
  for (double ex : {f.x1() + 0.3 * f.w, f.x1() + 0.7 * f.w}) {
    canvas.paint(
        Box{ex, ey, 2 * erx, 2 * ery},
        [&](double x, double y) {
          const double dx = (x - ex) / erx, dy = (y - ey) / ery;
          return dx * dx + dy * dy <= 1.0;
        },
        [&](int, int) { return dark; });
  }
  const double my = f.y1() + 0.72 * f.h;
  const double mh = std::max(0.6, 0.07 * f.h);
  const Box mouth = Box::from_corners(f.cx - 0.2 * f.w, my - mh / 2, f.cx + 0.2 * f.w, my + mh / 2);
  canvas.paint(
      mouth, [&](double x, double y) { return x >= mouth.x1() && x < mouth.x2() && y >= mouth.y1() && y < mouth.y2(); },
      [&](int, int) { return dark; });
}

void draw_body(Canvas& canvas, const Box& face, const Box& body, numcore::Rng& rng) {
  const double tone = uniform(rng, 25.0, 75.0);
  const double neck_w = 0.45 * face.w;
  const double neck_top = face.y2() - 0.15 * face.h;
  const double torso_top = face.y2() + 0.2 * face.h;
  const double r = 0.45 * face.w;
  const double left = body.x1(), right = body.x2(), bottom = body.y2();
  canvas.paint(
      Box::from_corners(left, neck_top, right, bottom),
      [&](double x, double y) {
        if (y >= neck_top && y < torso_top + r && std::abs(x - face.cx) <= neck_w / 2) return true;
        if (y < torso_top || y >= bottom || x < left || x >= right) return false;
        // Rounded shoulders.
        const double cy = torso_top + r;
        if (y < cy) {
          const double cx = x < left + r ? left + r : (x > right - r ? right - r : x);
          const double dx = x - cx, dy = y - cy;
          return dx * dx + dy * dy <= r * r;
        }
        return true;
      },
      [&](int, int) { return tone; });
}

// Overdraws the band of `f` that covers `fraction` of its area, entering
// from a random side.
void occlude(Canvas& canvas, const Box& f, double fraction, numcore::Rng& rng) {
  if (fraction <= 0.0) return;
  const int side = uniform_int(rng, 0, 3);
  Box band = f;
  switch (side) {
    case 0: band = Box::from_corners(f.x1(), f.y1(), f.x2(), f.y1() + fraction * f.h); break;
    case 1: band = Box::from_corners(f.x1(), f.y2() - fraction * f.h, f.x2(), f.y2()); break;
    case 2: band = Box::from_corners(f.x1(), f.y1(), f.x1() + fraction * f.w, f.y2()); break;
    default: band = Box::from_corners(f.x2() - fraction * f.w, f.y1(), f.x2(), f.y2()); break;
  }
  const Texture tex = random_texture(rng);
  canvas.paint(
      band,
      [&](double x, double y) {
        return x >= band.x1() && x < band.x2() && y >= band.y1() && y < band.y2();
      },
      tex);
}

double face_width(const DataConfig& d, numcore::Rng& rng) {
  if (uniform(rng, 0.0, 1.0) < d.tiny_fraction) return uniform(rng, d.tiny_min, d.min_face);
  return std::exp(uniform(rng, std::log(d.min_face), std::log(d.max_face)));
}

Box place(double w, double h, int size, numcore::Rng& rng) {
  const double x1 = uniform(rng, 0.0, size - w);
  const double y1 = uniform(rng, 0.0, size - h);
  return Box::from_xywh(x1, y1, w, h);
}

constexpr int kPlacementAttempts = 60;

}  // namespace

SyntheticScene render_scene(const DataConfig& d, const context::SpatialRelation& relation,
                            double occlusion_prob, numcore::Rng& rng) {
  const int s = d.image_size;
  Canvas canvas(s);
  const double base = uniform(rng, 90.0, 160.0);
  const double gx = uniform(rng, -0.4, 0.4), gy = uniform(rng, -0.4, 0.4);
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) canvas.at(x, y) = base + gx * (x - s / 2) + gy * (y - s / 2);
  }

  SyntheticScene scene;
  std::vector<Box> reserved;  // face and body boxes of real faces
  const int n_faces = uniform_int(rng, d.min_faces, d.max_faces);
  for (int i = 0; i < n_faces; ++i) {
    const double w = face_width(d, rng);
    const double h = w * d.aspect;
    for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
      const Box face = place(w, h, s, rng);
      const Box body = context::context_box(face, relation, s, s);
      if (overlaps_any(face, scene.faces, 2.0) || overlaps_any(face, scene.bodies, 2.0) ||
          overlaps_any(body, scene.faces, 2.0)) {
        continue;
      }
      scene.faces.push_back(face);
      scene.bodies.push_back(body);
      const bool occluded = uniform(rng, 0.0, 1.0) < occlusion_prob;
      scene.occlusion.push_back(occluded ? uniform(rng, d.occlusion_min, d.occlusion_max) : 0.0);
      break;
    }
  }
  reserved = scene.faces;
  reserved.insert(reserved.end(), scene.bodies.begin(), scene.bodies.end());

  std::vector<Box> decoys, decoy_regions;
  const int n_decoys = uniform_int(rng, 0, d.max_decoys);
  for (int i = 0; i < n_decoys; ++i) {
    const double w = face_width(d, rng);
    const double h = w * d.aspect;
    for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
      const Box decoy = place(w, h, s, rng);
      const Box below = context::context_box(decoy, relation, s, s);
      if (overlaps_any(below, reserved, 2.0) || overlaps_any(decoy, decoys, 2.0)) continue;
      decoys.push_back(decoy);
      decoy_regions.push_back(below);
      break;
    }
  }

  std::vector<Box> keep_clear = reserved;
  keep_clear.insert(keep_clear.end(), decoys.begin(), decoys.end());
  keep_clear.insert(keep_clear.end(), decoy_regions.begin(), decoy_regions.end());
  const int n_distractors = uniform_int(rng, 0, d.distractors);
  for (int i = 0; i < n_distractors; ++i) {
    const double w = uniform(rng, 4.0, d.max_face), h = uniform(rng, 4.0, d.max_face);
    const Texture tex = random_texture(rng);
    for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
      const Box patch = place(w, h, s, rng);
      if (overlaps_any(patch, keep_clear, 1.0)) continue;
      const bool round = uniform(rng, 0.0, 1.0) < 0.5;
      canvas.paint(
          patch,
          [&](double x, double y) {
            if (!round) return x >= patch.x1() && x < patch.x2() && y >= patch.y1() && y < patch.y2();
            const double dx = (x - patch.cx) / (patch.w / 2), dy = (y - patch.cy) / (patch.h / 2);
            return dx * dx + dy * dy <= 1.0;
          },
          tex);
      break;
    }
  }

  for (std::size_t i = 0; i < scene.faces.size(); ++i) {
    draw_body(canvas, scene.faces[i], scene.bodies[i], rng);
  }
  for (std::size_t i = 0; i < scene.faces.size(); ++i) {
    draw_face(canvas, scene.faces[i], rng);
    occlude(canvas, scene.faces[i], scene.occlusion[i], rng);
  }
  for (std::size_t i = 0; i < decoys.size(); ++i) {
    const Box& decoy = decoys[i];
    if (d.decoy_stub > 0.0) {
      const Box& region = decoy_regions[i];
      const double bottom = std::min(region.y2(), decoy.y2() + d.decoy_stub * decoy.h);
      draw_body(canvas, decoy, Box::from_corners(region.x1(), region.y1(), region.x2(), bottom), rng);
    }
    draw_face(canvas, decoy, rng);
    occlude(canvas, decoy, uniform(rng, d.decoy_occlusion_min, 1.0), rng);
  }

  std::normal_distribution<double> noise(0.0, 4.0);
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) canvas.at(x, y) += noise(rng);
  }
  scene.image = canvas.quantize();
  return scene;
}

DatasetSummary gen_synthetic(const Config& config, int n_images, int n_val, std::uint64_t seed,
                             const std::filesystem::path& out) {
  namespace fs = std::filesystem;
  if (n_images < 1) throw std::invalid_argument("gen-data: need at least one image");
  if (n_val < 0 || n_val > n_images) {
    throw std::invalid_argument(
        fmt::format("gen-data: validation count {} outside [0, {}]", n_val, n_images));
  }
  validate(config);

  std::vector<int> order(n_images);
  std::iota(order.begin(), order.end(), 0);
  numcore::Rng split_rng(seed ^ 0x5eed5eedull);
  std::shuffle(order.begin(), order.end(), split_rng);
  std::vector<bool> is_val(n_images, false);
  for (int i = 0; i < n_val; ++i) is_val[order[i]] = true;

  std::error_code ec;
  for (const char* split : {"train", "val"}) {
    fs::create_directories(out / split, ec);
    if (ec) {
      throw std::runtime_error(
          fmt::format("cannot create '{}': {}", (out / split).string(), ec.message()));
    }
  }

  std::vector<evalkit::AnnotationEntry> faces[2], bodies[2];
  DatasetSummary summary;
  for (int i = 0; i < n_images; ++i) {
    const int split = is_val[i] ? 1 : 0;
    numcore::Rng rng(seed * 1000003ull + static_cast<std::uint64_t>(i));
    const double occ = split ? config.data.val_occlusion_prob : config.data.occlusion_prob;
    const SyntheticScene scene = render_scene(config.data, config.context.relation, occ, rng);
    const std::string name = fmt::format("img_{:05d}.pgm", i);
    write_pgm(out / (split ? "val" : "train") / name, scene.image);
    for (std::size_t k = 0; k < scene.faces.size(); ++k) {
      faces[split].push_back({name, scene.faces[k]});
      bodies[split].push_back({name, scene.bodies[k]});
    }
    (split ? summary.val_images : summary.train_images) += 1;
    (split ? summary.val_faces : summary.train_faces) += static_cast<int>(scene.faces.size());
  }
  for (int split = 0; split < 2; ++split) {
    const fs::path dir = out / (split ? "val" : "train");
    evalkit::write_annotations(dir / "annotations.txt", faces[split]);
    evalkit::write_annotations(dir / "bodies.txt", bodies[split]);
  }
  return summary;
}

}  // namespace cms::harness
