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
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmsrcnn/evalkit/evaluate.hpp"
#include "cmsrcnn/harness/config.hpp"
#include "cmsrcnn/harness/model.hpp"
#include "cmsrcnn/harness/pgm.hpp"

namespace cms::harness {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Sample {
  std::string name;  // file name, the key used by annotation files
  GrayImage image;
  std::vector<Box> faces;
};

/// Loads every image of a split directory with its annotations.txt boxes.
/// A dataset root containing train/ resolves to that split.
std::vector<Sample> load_split(const std::filesystem::path& dir);
std::filesystem::path resolve_split(const std::filesystem::path& dir, const char* split);

inline constexpr const char* kTrainLogHeader = "iter,loss_rpn_cls,loss_rpn_reg,loss_det_cls,loss_det_reg";

/// Approximate joint training; writes one CSV line per iteration to `log`
/// and checkpoints to `checkpoint` periodically and at the end. A
/// non-finite loss or gradient throws TrainingError and leaves the last
/// saved checkpoint in place.
void train(const Config& config, const std::vector<Sample>& samples,
           const std::filesystem::path& checkpoint, std::ostream& log);

/// Builds a model for `config` and restores it from `checkpoint`.
CmsRcnn load_model(const Config& config, const std::filesystem::path& checkpoint,
                   bool ignore_hash = false);

struct DetectReport {
  std::vector<evalkit::Detection> detections;  // image order, score order within an image
  int failures = 0;
};

/// Runs the detector over `images` with `threads` workers. Results merge in
/// input order, so the output does not depend on the thread count. An
/// unreadable image is reported on `warnings` and counted as a failure.
DetectReport detect_images(const CmsRcnn& model, const std::vector<std::filesystem::path>& images,
                           double score_floor, int threads, std::ostream& warnings);

/// Evaluates a detection file against an annotation file and writes the PR
/// CSV to `csv_out`.
evalkit::PrCurve evaluate_files(const std::filesystem::path& detections,
                                const std::filesystem::path& annotations,
                                const std::filesystem::path& csv_out);

}  // namespace cms::harness
