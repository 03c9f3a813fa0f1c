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

#include <CLI11.hpp>
#include <fmt/format.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "cmsrcnn/evalkit/io.hpp"
#include "cmsrcnn/harness/checkpoint.hpp"
#include "cmsrcnn/harness/config.hpp"
#include "cmsrcnn/harness/gradsuite.hpp"
#include "cmsrcnn/harness/model.hpp"
#include "cmsrcnn/harness/pipeline.hpp"
#include "cmsrcnn/harness/synthetic.hpp"

namespace {

using namespace cms;
namespace fs = std::filesystem;

struct CommonOptions {
  std::string config_path;
  std::string preset = "desk";
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "Config file (key = value lines)");
  cmd->add_option("--preset", o.preset, "Base configuration: desk or vgg16");
  cmd->add_option("--set", o.overrides, "Override a config key (key=value), repeatable");
  cmd->add_option("--seed", o.seed, "Seed (overrides the config seed)");
}

harness::Config resolve(const CommonOptions& o) {
  harness::Config c = harness::preset(o.preset);
  if (!o.config_path.empty()) c = harness::load_config(o.config_path, c);
  for (const auto& s : o.overrides) harness::apply_override(c, s);
  if (o.seed) c.seed = *o.seed;
  harness::validate(c);
  return c;
}

int run_gen_data(const CommonOptions& common, int n, int n_val, const std::string& out) {
  const harness::Config c = resolve(common);
  const auto s = harness::gen_synthetic(c, n, n_val, c.seed, out);
  fmt::print("train: {} images, {} faces\nval: {} images, {} faces\n", s.train_images,
             s.train_faces, s.val_images, s.val_faces);
  return 0;
}

int run_train(const CommonOptions& common, const std::string& data, const std::string& out,
              const std::string& log_path) {
  const harness::Config c = resolve(common);
  const auto samples = harness::load_split(data);
  const auto start = std::chrono::steady_clock::now();
  if (log_path.empty()) {
    harness::train(c, samples, out, std::cout);
  } else {
    std::ofstream log(log_path);
    if (!log) throw std::runtime_error(fmt::format("cannot write log '{}'", log_path));
    harness::train(c, samples, out, log);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  fmt::print(stderr, "trained {} iterations on {} images in {:.1f} s\n", c.train.iterations,
             samples.size(), secs);
  return 0;
}

int run_detect(const CommonOptions& common, const std::string& checkpoint, const std::string& input,
               const std::string& out, int threads, bool ignore_hash) {
  const harness::Config c = resolve(common);
  const harness::CmsRcnn model = harness::load_model(c, checkpoint, ignore_hash);
  const auto images = harness::list_images(input);
  const auto report = harness::detect_images(model, images, c.detect.score_floor, threads, std::cerr);
  evalkit::write_detections(fs::path(out), report.detections);
  fmt::print("{} detections over {} images\n", report.detections.size(), images.size());
  return report.failures == 0 ? 0 : 1;
}

int run_eval(const std::string& detections, const std::string& annotations, const std::string& out) {
  const auto curve = harness::evaluate_files(detections, annotations, out);
  fmt::print("points={}\n", curve.points.size());
  fmt::print("AP={}\n", evalkit::format_real(curve.ap));
  return 0;
}

int run_grad_check(std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  const auto cases = harness::run_grad_suite(seed);
  int failures = 0;
  for (const auto& gc : cases) {
    fmt::print("{} {:<44} max_rel_error={:.3e} checked={} skipped={}\n",
               gc.passed() ? "PASS" : "FAIL", gc.name, gc.report.max_rel_error, gc.report.checked,
               gc.report.skipped);
    if (!gc.passed() && gc.report.checked > 0) {
      fmt::print("     worst index {}: analytic {:.12g} numeric {:.12g}\n", gc.report.worst_index,
                 gc.report.worst_analytic, gc.report.worst_numeric);
    }
    failures += gc.passed() ? 0 : 1;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  fmt::print("{} cases, {} failed, {:.2f} s\n", cases.size(), failures, secs);
  return failures == 0 ? 0 : 1;
}

int run_config(const CommonOptions& common, bool scales) {
  const harness::Config c = resolve(common);
  fmt::print("{}", harness::dump(c));
  fmt::print("# config_hash = {:016x}\n", harness::config_hash(c));
  if (scales) {
    numcore::Rng rng(c.seed);
    for (auto site : {harness::FusionSite::kRpn, harness::FusionSite::kFace, harness::FusionSite::kBody}) {
      const auto block = harness::make_fusion_block(c, site, rng);
      for (const auto& s : block.scales()) {
        const float first = s.gamma.value[0];
        bool uniform = true;
        for (float v : s.gamma.value.data()) uniform = uniform && v == first;
        fmt::print("{} channels={} init={} uniform={}\n", s.gamma.name, s.channels(),
                   evalkit::format_real(s.init_value), uniform ? "true" : "false");
      }
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contextual multi-scale region-based face detector"};
  app.require_subcommand(1);

  CommonOptions common;

  auto* gen = app.add_subcommand("gen-data", "Render a synthetic face dataset");
  add_common(gen, common);
  int n = 800, n_val = 200;
  std::string out;
  gen->add_option("--n", n, "Total number of images")->capture_default_str();
  gen->add_option("--val", n_val, "Images held out for validation")->capture_default_str();
  gen->add_option("--out", out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train the detector");
  add_common(train, common);
  std::string data, ckpt_out, log_path;
  train->add_option("--data", data, "Dataset root or split directory")->required();
  train->add_option("--out", ckpt_out, "Checkpoint path")->required();
  train->add_option("--log", log_path, "Iteration log CSV (default: stdout)");

  auto* detect = app.add_subcommand("detect", "Detect faces in an image or directory");
  add_common(detect, common);
  std::string checkpoint, input, det_out;
  int threads = 1;
  bool ignore_hash = false;
  detect->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
  detect->add_option("--input", input, "PGM image or directory of images")->required();
  detect->add_option("--out", det_out, "Detection file")->required();
  detect->add_option("--threads", threads, "Worker threads")->capture_default_str();
  detect->add_flag("--ignore-config-hash", ignore_hash, "Load despite a config-hash mismatch");

  auto* eval = app.add_subcommand("eval", "Precision-recall evaluation");
  std::string det_in, ann_in, csv_out;
  eval->add_option("--detections", det_in, "Detection file")->required();
  eval->add_option("--annotations", ann_in, "Annotation file")->required();
  eval->add_option("--out", csv_out, "PR curve CSV")->required();

  auto* grad = app.add_subcommand("grad-check", "Finite-difference gradient suite");
  std::uint64_t grad_seed = 1;
  grad->add_option("--seed", grad_seed, "Seed for the random micro-inputs")->capture_default_str();

  auto* cfg = app.add_subcommand("config", "Print the resolved configuration");
  add_common(cfg, common);
  bool scales = false;
  cfg->add_flag("--scales", scales, "Also list the initial fusion scale of every source");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return run_gen_data(common, n, n_val, out);
    if (*train) return run_train(common, data, ckpt_out, log_path);
    if (*detect) return run_detect(common, checkpoint, input, det_out, threads, ignore_hash);
    if (*eval) return run_eval(det_in, ann_in, csv_out);
    if (*grad) return run_grad_check(grad_seed);
    if (*cfg) return run_config(common, scales);
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
