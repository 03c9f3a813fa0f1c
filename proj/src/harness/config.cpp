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

#include "cmsrcnn/harness/config.hpp"

#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>

#include "cmsrcnn/evalkit/io.hpp"

namespace cms::harness {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename N>
N parse_number(std::string_view key, std::string_view text) {
  text = trim(text);
  N value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(fmt::format("config key '{}': cannot parse '{}'", key, text));
  }
  if constexpr (std::is_floating_point_v<N>) {
    if (!std::isfinite(value)) {
      throw ConfigError(fmt::format("config key '{}': value must be finite", key));
    }
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  text = trim(text);
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(fmt::format("config key '{}': expected true/false, got '{}'", key, text));
}

template <typename N>
std::vector<N> parse_list(std::string_view key, std::string_view text) {
  std::vector<N> out;
  text = trim(text);
  if (text.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = text.find(',', start);
    out.push_back(parse_number<N>(key, text.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string show(double v) { return evalkit::format_real(v); }
std::string show(int v) { return std::to_string(v); }
std::string show(std::uint64_t v) { return std::to_string(v); }
std::string show(bool v) { return v ? "true" : "false"; }
std::string show(const std::string& v) { return v; }

template <typename N>
std::string show(const std::vector<N>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += show(v[i]);
  }
  return out;
}

struct Key {
  std::string name;
  bool architecture;
  std::function<void(Config&, std::string_view)> set;
  std::function<std::string(const Config&)> get;
};

template <typename F>
Key field(std::string name, bool arch, F accessor) {
  using Ref = decltype(accessor(std::declval<Config&>()));
  using V = std::remove_cvref_t<Ref>;
  Key k;
  k.name = name;
  k.architecture = arch;
  k.set = [accessor, name](Config& c, std::string_view text) {
    V& slot = accessor(c);
    if constexpr (std::is_same_v<V, bool>) {
      slot = parse_bool(name, text);
    } else if constexpr (std::is_same_v<V, std::string>) {
      slot = std::string(trim(text));
    } else if constexpr (std::is_same_v<V, std::vector<int>>) {
      slot = parse_list<int>(name, text);
    } else if constexpr (std::is_same_v<V, std::vector<double>>) {
      slot = parse_list<double>(name, text);
    } else {
      slot = parse_number<V>(name, text);
    }
  };
  k.get = [accessor](const Config& c) { return show(accessor(const_cast<Config&>(c))); };
  return k;
}

#define CMS_FIELD(name, arch, member) \
  field(name, arch, [](Config& c) -> auto& { return c.member; })

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      CMS_FIELD("seed", false, seed),
      CMS_FIELD("backbone.widths", true, backbone.widths),
      CMS_FIELD("backbone.repeats", true, backbone.repeats),
      CMS_FIELD("backbone.stem_stride", true, backbone.stem_stride),
      CMS_FIELD("fusion.rpn_channels", true, fusion.rpn_channels),
      CMS_FIELD("fusion.roi_channels", true, fusion.roi_channels),
      CMS_FIELD("fusion.rpn_init", false, fusion.rpn_init),
      CMS_FIELD("fusion.roi_init", false, fusion.roi_init),
      CMS_FIELD("fusion.calibrate", false, fusion.calibrate),
      CMS_FIELD("anchors.scales", true, anchors.scales),
      CMS_FIELD("anchors.ratios", true, anchors.ratios),
      CMS_FIELD("rpn.hidden", true, rpn.hidden),
      CMS_FIELD("rpn.pos_iou", false, rpn.pos_iou),
      CMS_FIELD("rpn.neg_iou", false, rpn.neg_iou),
      CMS_FIELD("rpn.batch", false, rpn.batch),
      CMS_FIELD("rpn.pos_fraction", false, rpn.pos_fraction),
      CMS_FIELD("rpn.train_pre_nms_topk", false, rpn.train.pre_nms_topk),
      CMS_FIELD("rpn.train_post_nms_topk", false, rpn.train.post_nms_topk),
      CMS_FIELD("rpn.train_nms", false, rpn.train.nms_threshold),
      CMS_FIELD("rpn.test_pre_nms_topk", false, rpn.test.pre_nms_topk),
      CMS_FIELD("rpn.test_post_nms_topk", false, rpn.test.post_nms_topk),
      CMS_FIELD("rpn.test_nms", false, rpn.test.nms_threshold),
      CMS_FIELD("rpn.train_min_size", false, rpn.train.min_size),
      CMS_FIELD("rpn.test_min_size", false, rpn.test.min_size),
      CMS_FIELD("roi.pool_size", true, roi.pool_size),
      CMS_FIELD("roi.pos_iou", false, roi.pos_iou),
      CMS_FIELD("roi.neg_iou", false, roi.neg_iou),
      CMS_FIELD("roi.batch", false, roi.batch),
      CMS_FIELD("roi.pos_fraction", false, roi.pos_fraction),
      CMS_FIELD("head.hidden", true, head_hidden),
      CMS_FIELD("context.enabled", true, context.enabled),
      CMS_FIELD("context.fusion", true, context.fusion),
      CMS_FIELD("context.tx", false, context.relation.tx),
      CMS_FIELD("context.ty", false, context.relation.ty),
      CMS_FIELD("context.tw", false, context.relation.tw),
      CMS_FIELD("context.th", false, context.relation.th),
      CMS_FIELD("train.iterations", false, train.iterations),
      CMS_FIELD("train.lr", false, train.lr),
      CMS_FIELD("train.momentum", false, train.momentum),
      CMS_FIELD("train.weight_decay", false, train.weight_decay),
      CMS_FIELD("train.lambda", false, train.lambda),
      CMS_FIELD("train.lr_decay_at", false, train.lr_decay_at),
      CMS_FIELD("train.lr_decay", false, train.lr_decay),
      CMS_FIELD("train.checkpoint_every", false, train.checkpoint_every),
      CMS_FIELD("detect.nms", false, detect.nms),
      CMS_FIELD("detect.score_floor", false, detect.score_floor),
      CMS_FIELD("data.image_size", false, data.image_size),
      CMS_FIELD("data.min_faces", false, data.min_faces),
      CMS_FIELD("data.max_faces", false, data.max_faces),
      CMS_FIELD("data.min_face", false, data.min_face),
      CMS_FIELD("data.max_face", false, data.max_face),
      CMS_FIELD("data.tiny_fraction", false, data.tiny_fraction),
      CMS_FIELD("data.tiny_min", false, data.tiny_min),
      CMS_FIELD("data.aspect", false, data.aspect),
      CMS_FIELD("data.occlusion_prob", false, data.occlusion_prob),
      CMS_FIELD("data.val_occlusion_prob", false, data.val_occlusion_prob),
      CMS_FIELD("data.occlusion_min", false, data.occlusion_min),
      CMS_FIELD("data.occlusion_max", false, data.occlusion_max),
      CMS_FIELD("data.max_decoys", false, data.max_decoys),
      CMS_FIELD("data.decoy_occlusion_min", false, data.decoy_occlusion_min),
      CMS_FIELD("data.decoy_stub", false, data.decoy_stub),
      CMS_FIELD("data.distractors", false, data.distractors),
  };
  return table;
}

#undef CMS_FIELD

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

void require_unit(double v, std::string_view key) {
  require(v >= 0.0 && v <= 1.0, fmt::format("{} must lie in [0, 1], got {}", key, v));
}

}  // namespace

Config default_config() { return Config{}; }

Config vgg16_config() {
  Config c;
  c.backbone.widths = {64, 128, 256, 512, 512};
  c.backbone.repeats = {2, 2, 3, 3, 3};
  c.backbone.stem_stride = 1;
  c.fusion.rpn_channels = 512;
  c.fusion.roi_channels = 512;
  c.fusion.calibrate = false;
  c.anchors.scales = {2, 4, 8, 16, 32};
  c.anchors.ratios = {0.5, 1.0, 2.0};
  c.rpn.hidden = 512;
  c.head_hidden = 4096;
  return c;
}

Config preset(std::string_view name) {
  if (name == "desk") return default_config();
  if (name == "vgg16") return vgg16_config();
  throw ConfigError(fmt::format("unknown preset '{}' (expected desk or vgg16)", name));
}

void set_value(Config& config, std::string_view key, std::string_view value) {
  for (const Key& k : keys()) {
    if (k.name == key) {
      k.set(config, value);
      return;
    }
  }
  throw ConfigError(fmt::format("unknown config key '{}'", key));
}

void apply_override(Config& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError(fmt::format("override '{}' is not key=value", assignment));
  }
  set_value(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

Config parse_config(std::istream& in, std::string_view origin, Config base) {
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    try {
      if (s.front() == '[') {
        if (s.back() != ']') throw ConfigError("unterminated section header");
        section = std::string(trim(s.substr(1, s.size() - 2)));
        continue;
      }
      const auto eq = s.find('=');
      if (eq == std::string_view::npos) throw ConfigError("expected key = value");
      std::string key(trim(s.substr(0, eq)));
      if (!section.empty()) key = section + "." + key;
      set_value(base, key, trim(s.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("{}:{}: {}", origin, line_no, e.what()));
    }
  }
  return base;
}

Config load_config(const std::filesystem::path& path, Config base) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
  return parse_config(in, path.string(), std::move(base));
}

std::vector<int> tap_strides(const BackboneConfig& backbone) {
  std::vector<int> strides;
  int stride = backbone.stem_stride;
  for (std::size_t i = 0; i < backbone.widths.size(); ++i) {
    if (i > 0) stride *= 2;
    if (i + 3 >= backbone.widths.size()) strides.push_back(stride);
  }
  return strides;
}

void validate(const Config& c) {
  const auto& b = c.backbone;
  require(b.widths.size() >= 3, "backbone.widths needs at least 3 conv sets");
  require(b.widths.size() == b.repeats.size(),
          fmt::format("backbone.widths has {} entries but backbone.repeats has {}",
                      b.widths.size(), b.repeats.size()));
  for (int w : b.widths) require(w >= 1, "backbone.widths entries must be >= 1");
  for (int r : b.repeats) require(r >= 1, "backbone.repeats entries must be >= 1");
  require(b.stem_stride >= 1, "backbone.stem_stride must be >= 1");

  require(c.fusion.rpn_channels >= 1 && c.fusion.roi_channels >= 1,
          "fusion channel counts must be >= 1");
  require(c.fusion.rpn_init.size() == 3 && c.fusion.roi_init.size() == 3,
          "fusion.rpn_init and fusion.roi_init need one value per tapped map (3)");
  for (double v : c.fusion.rpn_init) require(v > 0.0, "fusion.rpn_init must be positive");
  for (double v : c.fusion.roi_init) require(v > 0.0, "fusion.roi_init must be positive");

  require(!c.anchors.scales.empty() && !c.anchors.ratios.empty(),
          "anchors.scales and anchors.ratios must be non-empty");
  for (double v : c.anchors.scales) require(v > 0.0, "anchor scales must be positive");
  for (double v : c.anchors.ratios) require(v > 0.0, "anchor ratios must be positive");

  require(c.rpn.hidden >= 1, "rpn.hidden must be >= 1");
  require(c.rpn.pos_iou > c.rpn.neg_iou, "rpn.pos_iou must exceed rpn.neg_iou");
  require(c.rpn.batch >= 1, "rpn.batch must be >= 1");
  require_unit(c.rpn.pos_fraction, "rpn.pos_fraction");
  for (const auto* p : {&c.rpn.train, &c.rpn.test}) {
    require(p->pre_nms_topk >= 0 && p->post_nms_topk >= 0, "rpn top-k values must be >= 0");
    require_unit(p->nms_threshold, "rpn nms threshold");
    require(p->min_size >= 0.0, "rpn min sizes must be >= 0");
  }

  require(c.roi.pool_size >= 1, "roi.pool_size must be >= 1");
  require(c.roi.pos_iou > c.roi.neg_iou, "roi.pos_iou must exceed roi.neg_iou");
  require(c.roi.batch >= 1, "roi.batch must be >= 1");
  require_unit(c.roi.pos_fraction, "roi.pos_fraction");
  require(c.head_hidden >= 1, "head.hidden must be >= 1");

  require(c.context.fusion == "late" || c.context.fusion == "early",
          fmt::format("context.fusion must be late or early, got '{}'", c.context.fusion));
  require(c.context.fusion == "late", "context.fusion=early is not implemented");
  require(c.context.relation.valid(), "context relation must be finite");

  require(c.train.iterations >= 0, "train.iterations must be >= 0");
  require(c.train.lr >= 0.0, "train.lr must be >= 0");
  require(c.train.momentum >= 0.0 && c.train.momentum < 1.0, "train.momentum must be in [0, 1)");
  require(c.train.weight_decay >= 0.0, "train.weight_decay must be >= 0");
  require(c.train.lambda >= 0.0, "train.lambda must be >= 0");
  require_unit(c.train.lr_decay_at, "train.lr_decay_at");
  require(c.train.lr_decay > 0.0, "train.lr_decay must be positive");
  require(c.train.checkpoint_every >= 1, "train.checkpoint_every must be >= 1");

  require_unit(c.detect.nms, "detect.nms");
  require(c.detect.score_floor >= 0.0, "detect.score_floor must be >= 0");

  const auto& d = c.data;
  require(d.image_size >= 16, "data.image_size must be >= 16");
  require(d.min_faces >= 0 && d.max_faces >= d.min_faces, "data face counts inconsistent");
  require(d.tiny_min > 0.0 && d.min_face >= d.tiny_min && d.max_face >= d.min_face,
          "data face sizes must satisfy 0 < tiny_min <= min_face <= max_face");
  require(d.max_face < d.image_size, "data.max_face must be smaller than the image");
  require(d.aspect > 0.0, "data.aspect must be positive");
  require_unit(d.tiny_fraction, "data.tiny_fraction");
  require_unit(d.occlusion_prob, "data.occlusion_prob");
  require_unit(d.val_occlusion_prob, "data.val_occlusion_prob");
  require_unit(d.occlusion_min, "data.occlusion_min");
  require_unit(d.occlusion_max, "data.occlusion_max");
  require(d.occlusion_min <= d.occlusion_max, "data.occlusion_min exceeds data.occlusion_max");
  require_unit(d.decoy_occlusion_min, "data.decoy_occlusion_min");
  require(d.decoy_stub >= 0.0, "data.decoy_stub must be >= 0");
  require(d.max_decoys >= 0 && d.distractors >= 0, "data counts must be >= 0");
}

std::string dump(const Config& config) {
  std::ostringstream out;
  for (const Key& k : keys()) out << k.name << " = " << k.get(config) << "\n";
  return out.str();
}

std::vector<std::string> config_keys() {
  std::vector<std::string> names;
  for (const Key& k : keys()) names.push_back(k.name);
  return names;
}

std::uint64_t config_hash(const Config& config) {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&h](std::string_view s) {
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 1099511628211ull;
    }
  };
  for (const Key& k : keys()) {
    if (!k.architecture) continue;
    mix(k.name);
    mix("=");
    mix(k.get(config));
    mix("\n");
  }
  return h;
}

}  // namespace cms::harness
