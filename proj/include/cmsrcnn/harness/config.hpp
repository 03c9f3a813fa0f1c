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
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cmsrcnn/context/roi.hpp"
#include "cmsrcnn/proposal/rpn.hpp"

namespace cms::harness {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BackboneConfig {
  std::vector<int> widths{16, 32, 32};
  std::vector<int> repeats{1, 2, 2};
  int stem_stride = 2;
};

struct FusionConfig {
  int rpn_channels = 32;
  int roi_channels = 16;
  std::vector<double> rpn_init{66.84, 94.52, 94.52};
  std::vector<double> roi_init{57.75, 81.67, 81.67};
  // Rescale the init constants from a warm-up batch (non-VGG backbones).
  bool calibrate = true;
};

struct AnchorConfig {
  std::vector<double> scales{0.75, 1.25, 2.0, 3.0};
  std::vector<double> ratios{0.8};
};

struct RpnConfig {
  int hidden = 32;
  double pos_iou = 0.7;
  double neg_iou = 0.3;
  int batch = 256;
  double pos_fraction = 0.5;
  proposal::ProposalConfig train{2000, 300, 0.7, 2.0};
  proposal::ProposalConfig test{1000, 100, 0.7, 2.0};
};

struct RoiConfig {
  int pool_size = 7;
  double pos_iou = 0.5;
  double neg_iou = 0.3;
  int batch = 128;
  double pos_fraction = 0.25;
};

struct ContextConfig {
  bool enabled = true;
  std::string fusion = "late";
  context::SpatialRelation relation;
};

struct TrainConfig {
  int iterations = 3000;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double lambda = 1.0;
  // Fraction of the run after which lr is multiplied by lr_decay.
  double lr_decay_at = 0.75;
  double lr_decay = 0.1;
  int checkpoint_every = 500;
};

struct DetectConfig {
  double nms = 0.3;
  double score_floor = 0.05;
};

struct DataConfig {
  int image_size = 96;
  int min_faces = 1;
  int max_faces = 3;
  double min_face = 8.0;
  double max_face = 26.0;
  double tiny_fraction = 0.15;
  double tiny_min = 6.0;
  double aspect = 1.25;  // face h / w
  double occlusion_prob = 0.5;
  double val_occlusion_prob = 0.0;
  double occlusion_min = 0.0;
  double occlusion_max = 1.0;
  int max_decoys = 2;
  double decoy_occlusion_min = 0.5;
  // Decoys stand on a torso stub ending this many face heights below the face.
  double decoy_stub = 1.5;
  int distractors = 4;
};

struct Config {
  std::uint64_t seed = 7;
  BackboneConfig backbone;
  FusionConfig fusion;
  AnchorConfig anchors;
  RpnConfig rpn;
  RoiConfig roi;
  int head_hidden = 64;
  ContextConfig context;
  TrainConfig train;
  DetectConfig detect;
  DataConfig data;
};

/// Desk-scale default.
Config default_config();
/// The VGG-16 layout with the original fusion constants, uncalibrated.
Config vgg16_config();
Config preset(std::string_view name);

/// Applies one `key=value` assignment; unknown keys and bad values throw.
void set_value(Config& config, std::string_view key, std::string_view value);
void apply_override(Config& config, std::string_view assignment);

/// Parses `key = value` lines; `[section]` headers prefix following keys
/// with `section.`. `#` starts a comment.
Config parse_config(std::istream& in, std::string_view origin, Config base = default_config());
Config load_config(const std::filesystem::path& path, Config base = default_config());

/// Throws ConfigError describing the first inconsistent field.
void validate(const Config& config);

/// Every key in canonical order, one `key = value` line each.
std::string dump(const Config& config);
std::vector<std::string> config_keys();

/// FNV-1a over the keys that shape the parameter set.
std::uint64_t config_hash(const Config& config);

/// Strides of the three tapped maps (conv3, conv4, conv5).
std::vector<int> tap_strides(const BackboneConfig& backbone);

}  // namespace cms::harness
