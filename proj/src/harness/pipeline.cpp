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

#include "cmsrcnn/harness/pipeline.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <thread>

#include "cmsrcnn/evalkit/io.hpp"
#include "cmsrcnn/harness/checkpoint.hpp"
#include "cmsrcnn/numcore/sgd.hpp"

namespace cms::harness {

namespace fs = std::filesystem;

fs::path resolve_split(const fs::path& dir, const char* split) {
  if (fs::is_directory(dir / split)) return dir / split;
  return dir;
}

std::vector<Sample> load_split(const fs::path& dir) {
  const fs::path split = resolve_split(dir, "train");
  std::map<std::string, std::vector<Box>> gt;
  if (fs::exists(split / "annotations.txt")) {
    for (const auto& e : evalkit::read_annotations(split / "annotations.txt")) {
      gt[e.image_file].push_back(e.box);
    }
  }
  std::vector<Sample> samples;
  for (const fs::path& file : list_images(split)) {
    Sample s{file.filename().string(), read_pgm(file), {}};
    if (auto it = gt.find(s.name); it != gt.end()) s.faces = it->second;
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw std::runtime_error(fmt::format("no .pgm images in '{}'", split.string()));
  return samples;
}

void train(const Config& config, const std::vector<Sample>& samples, const fs::path& checkpoint,
           std::ostream& log) {
  if (samples.empty()) throw TrainingError("training set is empty");
  CmsRcnn model(config);
  const std::uint64_t hash = config_hash(config);
  if (config.fusion.calibrate) {
    constexpr std::size_t kWarmup = 8;
    std::vector<GrayImage> warmup;
    for (std::size_t i = 0; i < std::min(kWarmup, samples.size()); ++i) warmup.push_back(samples[i].image);
    model.calibrate(warmup);
  }
  auto params = model.params();
  numcore::Sgd<float> sgd({config.train.lr, config.train.momentum, config.train.weight_decay});
  numcore::Rng rng(config.seed ^ 0x9e3779b97f4a7c15ull);

  save_checkpoint(checkpoint, hash, params);
  int last_saved = 0;
  log << kTrainLogHeader << "\n";

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  const int decay_iter = static_cast<int>(config.train.lr_decay_at * config.train.iterations);
  for (int it = 1; it <= config.train.iterations; ++it) {
    if (cursor == order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const Sample& s = samples[order[cursor++]];
    sgd.set_lr(it > decay_iter ? config.train.lr * config.train.lr_decay : config.train.lr);
    const StepLosses l = model.train_step(s.image, s.faces, rng);
    fmt::print(log, "{},{:.6f},{:.6f},{:.6f},{:.6f}\n", it, l.rpn_cls, l.rpn_reg, l.det_cls, l.det_reg);
    if (!l.finite()) {
      log.flush();
      throw TrainingError(fmt::format(
          "non-finite loss at iteration {} ({}); last good checkpoint is from iteration {}", it,
          s.name, last_saved));
    }
    try {
      sgd.step(params);
    } catch (const numcore::NonFiniteGradient& e) {
      log.flush();
      throw TrainingError(fmt::format("{} at iteration {}; last good checkpoint is from iteration {}",
                                      e.what(), it, last_saved));
    }
    if (it % config.train.checkpoint_every == 0 || it == config.train.iterations) {
      save_checkpoint(checkpoint, hash, params);
      last_saved = it;
    }
  }
  log.flush();
}

CmsRcnn load_model(const Config& config, const fs::path& checkpoint, bool ignore_hash) {
  CmsRcnn model(config);
  auto params = model.params();
  load_checkpoint(checkpoint, config_hash(config), params, ignore_hash);
  return model;
}

DetectReport detect_images(const CmsRcnn& model, const std::vector<fs::path>& images,
                           double score_floor, int threads, std::ostream& warnings) {
  struct Slot {
    std::vector<ScoredBox> boxes;
    std::string error;
  };
  std::vector<Slot> slots(images.size());
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < images.size(); i += step) {
      try {
        slots[i].boxes = model.detect(read_pgm(images[i]), score_floor);
      } catch (const ImageError& e) {
        slots[i].error = e.what();
      }
    }
  };
  const std::size_t n_threads =
      std::clamp<std::size_t>(threads < 1 ? 1 : static_cast<std::size_t>(threads), 1, std::max<std::size_t>(1, images.size()));
  if (n_threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work, t, n_threads);
    for (auto& th : pool) th.join();
  }

  DetectReport report;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!slots[i].error.empty()) {
      fmt::print(warnings, "warning: skipping {}: {}\n", images[i].string(), slots[i].error);
      ++report.failures;
      continue;
    }
    for (const ScoredBox& b : slots[i].boxes) {
      report.detections.push_back({images[i].filename().string(), b.box, b.score});
    }
  }
  return report;
}

evalkit::PrCurve evaluate_files(const fs::path& detections, const fs::path& annotations,
                                const fs::path& csv_out) {
  const auto dets = evalkit::read_detections(detections);
  const auto gt = evalkit::to_ground_truth(evalkit::read_annotations(annotations));
  const evalkit::PrCurve curve = evalkit::evaluate(dets, gt);
  std::ofstream out(csv_out);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", csv_out.string()));
  evalkit::write_pr_csv(out, curve);
  return curve;
}

}  // namespace cms::harness
