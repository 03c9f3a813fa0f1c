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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Criteria 5-7 drive the cmsrcnn binary end to end.
//
//   acceptance [--report FILE] [criterion numbers...]   (default: all)

#include <fmt/core.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "cmsrcnn/context/roi.hpp"
#include "cmsrcnn/evalkit/evaluate.hpp"
#include "cmsrcnn/harness/gradsuite.hpp"
#include "cmsrcnn/msfusion/l2norm.hpp"
#include "cmsrcnn/proposal/anchors.hpp"
#include "cmsrcnn/proposal/nms.hpp"
#include "oracles.hpp"

namespace {

using namespace cms;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;
using Rng = std::mt19937_64;

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------- 1

Outcome grad_suite() {
  const auto t0 = Clock::now();
  const auto cases = harness::run_grad_suite(1);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  int failed = 0;
  for (const auto& c : cases) {
    worst = std::max(worst, c.report.max_rel_error);
    failed += !c.passed();
  }
  return {failed == 0 && !cases.empty() && secs < 60.0,
          fmt::format("{} cases, {} failed, max rel error {:.2e}, {:.2f} s", cases.size(), failed,
                      worst, secs)};
}

// ---------------------------------------------------------------- 2

Outcome l2_invariants() {
  using numcore::TensorD;
  using MapD = msfusion::BasicFeatureMap<double>;
  Rng rng(2);
  std::uniform_real_distribution<double> u(-10, 10);
  const int c = 6, h = 100, w = 100;
  TensorD x({1, c, h, w}), g({1, c, h, w});
  for (auto& v : x.data()) v = u(rng);
  for (auto& v : g.data()) v = u(rng);
  const auto r = msfusion::l2_normalize_forward(MapD{x, 1, msfusion::Source::kConv4});

  TensorD big = x, small = x;
  for (auto& v : big.data()) v *= 1e3;
  for (auto& v : small.data()) v *= 1e-3;
  const auto rb = msfusion::l2_normalize_forward(MapD{big, 1, msfusion::Source::kConv4});
  const auto rs = msfusion::l2_normalize_forward(MapD{small, 1, msfusion::Source::kConv4});

  const TensorD dx = msfusion::l2_normalize_backward(g, x, r.norms);
  const TensorD radial = msfusion::l2_normalize_backward(x, x, r.norms);

  double norm_err = 0.0, scale_err = 0.0, ortho = 0.0, radial_resp = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < w; ++xx) {
      double n2 = 0.0, dot = 0.0, dx2 = 0.0, x2 = 0.0, rad2 = 0.0;
      for (int k = 0; k < c; ++k) {
        const double v = r.normalized.tensor.at(0, k, y, xx);
        n2 += v * v;
        scale_err = std::max({scale_err, std::abs(rb.normalized.tensor.at(0, k, y, xx) - v),
                              std::abs(rs.normalized.tensor.at(0, k, y, xx) - v)});
        dot += dx.at(0, k, y, xx) * x.at(0, k, y, xx);
        dx2 += dx.at(0, k, y, xx) * dx.at(0, k, y, xx);
        x2 += x.at(0, k, y, xx) * x.at(0, k, y, xx);
        rad2 += radial.at(0, k, y, xx) * radial.at(0, k, y, xx);
      }
      norm_err = std::max(norm_err, std::abs(std::sqrt(n2) - 1.0));
      if (dx2 > 0.0) ortho = std::max(ortho, std::abs(dot) / std::sqrt(dx2 * x2));
      radial_resp = std::max(radial_resp, std::sqrt(rad2 / x2));
    }
  }
  const bool pass = norm_err <= 1e-6 && scale_err <= 1e-6 && ortho <= 1e-5 && radial_resp <= 1e-5;
  return {pass, fmt::format("{} pixels: |norm-1| {:.1e}, scale drift {:.1e}, cos(dx,x) {:.1e}, "
                            "radial response {:.1e}",
                            h * w, norm_err, scale_err, ortho, radial_resp)};
}

// ---------------------------------------------------------------- 3

Outcome box_deltas() {
  using proposal::Box;
  Rng rng(3);
  std::uniform_real_distribution<double> pos(-100, 100), ext(2, 100);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Box src{pos(rng), pos(rng), ext(rng), ext(rng)};
    const Box dst{pos(rng), pos(rng), ext(rng), ext(rng)};
    const Box back = proposal::decode_deltas(src, proposal::encode_deltas(src, dst));
    worst = std::max({worst, std::abs(back.cx - dst.cx), std::abs(back.cy - dst.cy),
                      std::abs(back.w - dst.w), std::abs(back.h - dst.h)});
  }
  const auto t = proposal::encode_deltas(Box{10, 10, 2, 2}, Box{10, 13, 4, 8});
  const bool hand = t[0] == 0.0 && t[1] == 1.5 && std::abs(t[2] - std::log(2.0)) < 1e-12 &&
                    std::abs(t[3] - std::log(4.0)) < 1e-12;
  return {worst <= 1e-5 && hand,
          fmt::format("1000 round trips max error {:.1e}; hand case t=({}, {}, {:.6f}, {:.6f})",
                      worst, t[0], t[1], t[2], t[3])};
}

// ---------------------------------------------------------------- 4

struct ApInstance {
  std::vector<evalkit::Detection> dets;
  evalkit::GroundTruth gt;
};

ApInstance random_instance(Rng& rng) {
  using evalkit::Box;
  std::uniform_int_distribution<int> n_img(1, 4), n_gt(0, 4), n_det(0, 50), coord(0, 40);
  std::uniform_real_distribution<double> jitter(-4, 4), unit(0, 1);
  ApInstance inst;
  const int images = n_img(rng);
  for (int i = 0; i < images; ++i) {
    auto& boxes = inst.gt["img" + std::to_string(i)];
    for (int g = n_gt(rng); g > 0; --g) boxes.push_back(Box::from_xywh(coord(rng), coord(rng), 10, 12));
  }
  std::uniform_int_distribution<int> pick(0, images - 1);
  for (int d = n_det(rng); d > 0; --d) {
    const std::string id = "img" + std::to_string(pick(rng));
    const auto& boxes = inst.gt[id];
    Box b = Box::from_xywh(coord(rng), coord(rng), 10, 12);
    if (!boxes.empty() && unit(rng) < 0.7) {
      b = boxes[std::uniform_int_distribution<std::size_t>(0, boxes.size() - 1)(rng)];
      b = b.translated(jitter(rng), jitter(rng));
    }
    inst.dets.push_back(evalkit::Detection{id, b, std::round(unit(rng) * 10) / 10});
  }
  return inst;
}

bool nms_postconditions(const std::vector<proposal::Box>& boxes, const std::vector<double>& scores,
                        double thr) {
  const auto kept = proposal::nms(boxes, scores, thr);
  std::vector<bool> is_kept(boxes.size(), false);
  for (std::size_t k = 0; k < kept.size(); ++k) {
    if (kept[k] >= boxes.size() || is_kept[kept[k]]) return false;
    is_kept[kept[k]] = true;
    if (k > 0) {
      const double a = scores[kept[k - 1]], b = scores[kept[k]];
      if (a < b || (a == b && kept[k - 1] > kept[k])) return false;
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (evalkit::iou(boxes[kept[j]], boxes[kept[k]]) > thr) return false;
    }
  }
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (is_kept[i]) continue;
    bool covered = false;
    for (std::size_t k : kept) covered = covered || evalkit::iou(boxes[k], boxes[i]) > thr;
    if (!covered) return false;
  }
  return true;
}

Outcome oracles() {
  Rng rng(4);
  int iou_bad = 0;
  {
    std::uniform_int_distribution<int> coord(0, 30), ext(1, 15);
    for (int i = 0; i < 1000; ++i) {
      const int ax = coord(rng), ay = coord(rng), aw = ext(rng), ah = ext(rng);
      const int bx = coord(rng), by = coord(rng), bw = ext(rng), bh = ext(rng);
      const double got = evalkit::iou(evalkit::Box::from_xywh(ax, ay, aw, ah),
                                      evalkit::Box::from_xywh(bx, by, bw, bh));
      iou_bad += got != oracle::pixel_iou(ax, ay, ax + aw, ay + ah, bx, by, bx + bw, by + bh);
    }
  }

  int pool_bad = 0;
  {
    std::uniform_real_distribution<float> u(-5, 5);
    numcore::Tensor t({1, 3, 12, 10});
    for (auto& v : t.data()) v = u(rng);
    const msfusion::FeatureMap map{t, 4, msfusion::Source::kConv5};
    std::uniform_real_distribution<double> x(0, 39), y(0, 47);
    std::vector<proposal::Box> boxes;
    for (int i = 0; i < 1000; ++i) {
      const double x1 = x(rng), y1 = y(rng);
      std::uniform_real_distribution<double> w(0.5, 40 - x1), h(0.5, 48 - y1);
      boxes.push_back(proposal::Box::from_xywh(x1, y1, w(rng), h(rng)));
    }
    const auto batch = context::roi_pool(map, boxes, 1, context::RegionKind::kFace);
    for (int r = 0; r < 1000; ++r) {
      for (int c = 0; c < 3; ++c) pool_bad += batch.pooled[r * 3 + c] != oracle::roi_max(t, c, boxes[r], 4);
    }
  }

  double ap_worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const ApInstance inst = random_instance(rng);
    const auto flags = evalkit::match(inst.dets, inst.gt);
    std::vector<double> scores;
    for (const auto& d : inst.dets) scores.push_back(d.score);
    const double expect =
        oracle::threshold_ap(scores, flags, static_cast<int>(evalkit::count_boxes(inst.gt)));
    ap_worst = std::max(ap_worst, std::abs(evalkit::evaluate(inst.dets, inst.gt).ap - expect));
  }

  int nms_bad = 0;
  {
    std::uniform_real_distribution<double> pos(0, 60), ext(2, 30), unit(0, 1), thr(0.1, 0.8);
    std::uniform_int_distribution<int> count(0, 40);
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<proposal::Box> boxes;
      std::vector<double> scores;
      for (int i = count(rng); i > 0; --i) {
        boxes.push_back(proposal::Box::from_xywh(pos(rng), pos(rng), ext(rng), ext(rng)));
        scores.push_back(std::round(unit(rng) * 20) / 20);
      }
      nms_bad += !nms_postconditions(boxes, scores, thr(rng));
    }
  }

  return {iou_bad == 0 && pool_bad == 0 && ap_worst <= 1e-9 && nms_bad == 0,
          fmt::format("iou mismatches {}/1000, roi_pool mismatches {}/3000, AP max diff {:.1e} "
                      "over 100, NMS violations {}/1000",
                      iou_bad, pool_bad, ap_worst, nms_bad)};
}

// ---------------------------------------------------------------- 5-8

struct Cli {
  fs::path binary;
  fs::path work;

  // Runs the binary with stdout/stderr captured to `log`; returns the exit code.
  int run(const std::string& args, const fs::path& log) const {
    const std::string cmd =
        fmt::format("\"{}\" {} > \"{}\" 2>&1", binary.string(), args, log.string());
    const int status = std::system(cmd.c_str());
    return status == 0 ? 0 : (WIFEXITED(status) ? WEXITSTATUS(status) : -1);
  }
};

struct RunResult {
  bool ok = false;
  std::string error;
  double train_seconds = 0.0;
  double ap = 0.0;
};

double read_ap(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line, last;
  while (std::getline(in, line)) {
    if (!line.empty()) last = line;
  }
  const std::string tag = "# AP=";
  if (last.rfind(tag, 0) != 0) return -1.0;
  return std::stod(last.substr(tag.size()));
}

// gen-data (unless `data` already exists) -> train -> detect val -> eval, in `dir`.
RunResult pipeline(const Cli& cli, const fs::path& dir, const fs::path& data,
                   const std::string& gen_args, const std::string& model_args) {
  RunResult r;
  fs::create_directories(dir);
  auto step = [&](const std::string& name, const std::string& args) {
    if (cli.run(args, dir / (name + ".out")) == 0) return true;
    r.error = fmt::format("{} failed, see {}", name, (dir / (name + ".out")).string());
    return false;
  };
  if (!fs::exists(data) && !step("gen-data", fmt::format("gen-data --out \"{}\" {}", data.string(), gen_args))) {
    return r;
  }
  const auto t0 = Clock::now();
  if (!step("train", fmt::format("train --data \"{}\" --out \"{}\" --log \"{}\" {}", data.string(),
                                 (dir / "model.ckpt").string(), (dir / "train.csv").string(),
                                 model_args))) {
    return r;
  }
  r.train_seconds = seconds_since(t0);
  if (!step("detect", fmt::format("detect --checkpoint \"{}\" --input \"{}\" --out \"{}\" --threads 1 {}",
                                  (dir / "model.ckpt").string(), (data / "val").string(),
                                  (dir / "val.det").string(), model_args))) {
    return r;
  }
  if (!step("eval", fmt::format("eval --detections \"{}\" --annotations \"{}\" --out \"{}\"",
                                (dir / "val.det").string(), (data / "val" / "annotations.txt").string(),
                                (dir / "val.pr.csv").string()))) {
    return r;
  }
  r.ap = read_ap(dir / "val.pr.csv");
  r.ok = r.ap >= 0.0;
  if (!r.ok) r.error = "PR CSV has no AP line";
  return r;
}

const std::string kCleanGen = "--n 800 --val 200";
// Every validation image carries at least 60% occlusion on each face.
const std::string kOccludedGen =
    "--n 800 --val 200 --set data.val_occlusion_prob=1 --set data.occlusion_min=0.6";

Outcome end_to_end(const Cli& cli) {
  const auto r = pipeline(cli, cli.work / "e2e", cli.work / "e2e" / "data", kCleanGen, "");
  if (!r.ok) return {false, r.error};
  return {r.ap >= 0.85 && r.train_seconds <= 600.0,
          fmt::format("clean val AP {:.4f} (need >= 0.85), training {:.0f} s (limit 600)", r.ap,
                      r.train_seconds)};
}

Outcome context_ablation(const Cli& cli) {
  const fs::path data = cli.work / "occluded" / "data";
  const auto with = pipeline(cli, cli.work / "occluded" / "ctx", data, kOccludedGen, "");
  if (!with.ok) return {false, with.error};
  const auto without =
      pipeline(cli, cli.work / "occluded" / "noctx", data, kOccludedGen, "--set context.enabled=false");
  if (!without.ok) return {false, without.error};
  const double gap = with.ap - without.ap;
  return {gap >= 0.05, fmt::format("occluded val AP context {:.4f}, no context {:.4f}, gap {:.4f} "
                                   "(need >= 0.05)",
                                   with.ap, without.ap, gap)};
}

Outcome determinism(const Cli& cli) {
  const fs::path first = cli.work / "e2e";
  if (!fs::exists(first / "val.pr.csv")) {
    const auto r = pipeline(cli, first, first / "data", kCleanGen, "");
    if (!r.ok) return {false, r.error};
  }
  const fs::path second = cli.work / "rerun";
  const auto r = pipeline(cli, second, second / "data", kCleanGen, "");
  if (!r.ok) return {false, r.error};
  std::vector<std::string> differ;
  for (const char* f : {"model.ckpt", "val.det", "val.pr.csv", "train.csv", "data/val/annotations.txt"}) {
    if (slurp(first / f) != slurp(second / f) || slurp(first / f).empty()) differ.push_back(f);
  }
  std::string detail = "checkpoint, detections, PR CSV, train log and annotations byte-identical";
  if (!differ.empty()) {
    detail = "differ:";
    for (const auto& f : differ) detail += " " + f;
  }
  return {differ.empty(), detail};
}

Outcome vgg_scales(const Cli& cli) {
  const fs::path log = cli.work / "vgg16_scales.txt";
  if (cli.run("config --preset vgg16 --scales", log) != 0) return {false, "config command failed"};
  const std::string text = slurp(log);
  const std::vector<std::string> expected{
      "rpn.fuse.scale0 channels=256 init=66.84 ",      "rpn.fuse.scale1 channels=512 init=94.52 ",
      "rpn.fuse.scale2 channels=512 init=94.52 ",      "roi.face.fuse.scale0 channels=256 init=57.75 ",
      "roi.face.fuse.scale1 channels=512 init=81.67 ", "roi.face.fuse.scale2 channels=512 init=81.67 ",
      "roi.body.fuse.scale0 channels=256 init=57.75 ", "roi.body.fuse.scale1 channels=512 init=81.67 ",
      "roi.body.fuse.scale2 channels=512 init=81.67 "};
  int missing = 0;
  for (const auto& line : expected) missing += text.find(line) == std::string::npos;
  const bool keys = text.find("fusion.rpn_init = 66.84,94.52,94.52") != std::string::npos &&
                    text.find("fusion.roi_init = 57.75,81.67,81.67") != std::string::npos;
  return {missing == 0 && keys,
          fmt::format("rpn (66.84, 94.52, 94.52), roi (57.75, 81.67, 81.67): {} of {} scale lines "
                      "missing, config keys {}",
                      missing, expected.size(), keys ? "present" : "missing")};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  fs::path report_path;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--report" && i + 1 < argc) {
      report_path = argv[++i];
    } else {
      only.insert(std::atoi(argv[i]));
    }
  }
  std::ofstream report;
  if (!report_path.empty()) report.open(report_path);
  auto wanted = [&](int n) { return only.empty() || only.count(n) > 0; };

  Cli cli{CMS_CLI_PATH, fs::temp_directory_path() / fmt::format("cms_acceptance_{}", ::getpid())};
  fs::remove_all(cli.work);
  fs::create_directories(cli.work);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient suite", grad_suite},
      {"L2-norm invariants", l2_invariants},
      {"box deltas", box_deltas},
      {"oracle equivalence", oracles},
      {"end-to-end AP", [&] { return end_to_end(cli); }},
      {"context ablation", [&] { return context_ablation(cli); }},
      {"determinism", [&] { return determinism(cli); }},
      {"VGG-16 fusion inits", [&] { return vgg_scales(cli); }},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!wanted(n)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    const std::string line = fmt::format("criterion {} {}: {} | {} [{:.1f} s]\n", n,
                                         o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail,
                                         seconds_since(t0));
    fmt::print("{}", line);
    std::fflush(stdout);
    report << line << std::flush;
  }
  if (failures == 0) fs::remove_all(cli.work);
  else fmt::print("artifacts kept in {}\n", cli.work.string());
  return failures == 0 ? 0 : 1;
}
