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

#include <filesystem>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmsrcnn/evalkit/evaluate.hpp"

// Line formats (whitespace separated, '#' starts a comment):
//   annotation: image_file x1 y1 w h
//   detection:  image_file score x1 y1 w h
//   PR CSV:     threshold,recall,precision rows, closed by "# AP=<value>"

namespace cms::evalkit {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AnnotationEntry {
  std::string image_file;
  Box box;
};

std::vector<AnnotationEntry> read_annotations(const std::filesystem::path& path);
void write_annotations(const std::filesystem::path& path,
                       const std::vector<AnnotationEntry>& entries);

GroundTruth to_ground_truth(const std::vector<AnnotationEntry>& entries);

std::vector<Detection> read_detections(const std::filesystem::path& path);
void write_detections(std::ostream& out, const std::vector<Detection>& dets);
void write_detections(const std::filesystem::path& path, const std::vector<Detection>& dets);

void write_pr_csv(std::ostream& out, const PrCurve& curve);

/// Shortest round-trip decimal form, always with a fractional part ("1.0").
std::string format_real(double value);
/// Fixed-point with `digits` decimals.
std::string format_fixed(double value, int digits);

}  // namespace cms::evalkit
