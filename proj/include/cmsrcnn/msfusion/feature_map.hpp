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

#include <stdexcept>
#include <string>
#include <string_view>

#include "cmsrcnn/numcore/tensor.hpp"

namespace cms::msfusion {

/// The three backbone taps that feed fusion, named after their VGG-16
/// counterparts regardless of the configured backbone depth.
enum class Source { kConv3 = 0, kConv4 = 1, kConv5 = 2 };

inline constexpr int kNumSources = 3;

inline std::string_view source_name(Source s) {
  switch (s) {
    case Source::kConv3: return "conv3";
    case Source::kConv4: return "conv4";
    case Source::kConv5: return "conv5";
  }
  return "?";
}

inline Source parse_source(std::string_view name) {
  if (name == "conv3") return Source::kConv3;
  if (name == "conv4") return Source::kConv4;
  if (name == "conv5") return Source::kConv5;
  throw std::invalid_argument("unknown feature source '" + std::string(name) + "'");
}

/// A (N, C, H, W) activation together with its cumulative stride relative to
/// the input image.
template <typename T>
struct BasicFeatureMap {
  numcore::BasicTensor<T> tensor;
  int stride = 1;
  Source source = Source::kConv5;

  int channels() const { return tensor.dim(1); }
  int height() const { return tensor.dim(2); }
  int width() const { return tensor.dim(3); }
};

using FeatureMap = BasicFeatureMap<float>;

}  // namespace cms::msfusion
