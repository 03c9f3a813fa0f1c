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

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cmsrcnn/context/roi.hpp"
#include "cmsrcnn/harness/config.hpp"
#include "cmsrcnn/harness/pgm.hpp"
#include "cmsrcnn/numcore/init.hpp"

namespace cms::harness {

/// One rendered image with its annotated faces. Decoys (occluded face
/// patterns on a truncated torso, never a full body) are drawn but not
/// annotated.
struct SyntheticScene {
  GrayImage image;
  std::vector<proposal::Box> faces;
  std::vector<proposal::Box> bodies;
  std::vector<double> occlusion;  // fraction of each face box overdrawn
};

/// Renders one scene. `occlusion_prob` is the chance that a face is
/// partially overdrawn with distractor texture.
SyntheticScene render_scene(const DataConfig& data, const context::SpatialRelation& relation,
                            double occlusion_prob, numcore::Rng& rng);

struct DatasetSummary {
  int train_images = 0;
  int val_images = 0;
  int train_faces = 0;
  int val_faces = 0;
};

/// Writes `n_images` scenes under out/train and out/val (n_val of them held
/// out, chosen by a seeded shuffle), each split with annotations.txt and a
/// parallel bodies.txt.
DatasetSummary gen_synthetic(const Config& config, int n_images, int n_val, std::uint64_t seed,
                             const std::filesystem::path& out);

}  // namespace cms::harness
