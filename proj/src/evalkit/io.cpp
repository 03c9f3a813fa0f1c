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

#include "cmsrcnn/evalkit/io.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace cms::evalkit {
namespace {

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> tokens;
  std::istringstream in(line.substr(0, line.find('#')));
  std::string tok;
  while (in >> tok) tokens.push_back(tok);
  return tokens;
}

double parse_number(const std::string& tok, const std::filesystem::path& path, int line_no) {
  double value = 0.0;
  const char* end = tok.data() + tok.size();
  const auto [ptr, ec] = std::from_chars(tok.data(), end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw ParseError(fmt::format("{}:{}: expected a number, got '{}'", path.string(), line_no, tok));
  }
  return value;
}

template <typename Fn>
void for_each_record(const std::filesystem::path& path, std::size_t fields, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw ParseError(fmt::format("{}: cannot open for reading", path.string()));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = tokenize(line);
    if (tokens.empty()) continue;
    if (tokens.size() != fields) {
      throw ParseError(fmt::format("{}:{}: expected {} fields, got {}", path.string(), line_no,
                                   fields, tokens.size()));
    }
    fn(tokens, line_no);
  }
}

Box parse_xywh(const std::vector<std::string>& t, std::size_t first,
               const std::filesystem::path& path, int line_no) {
  const Box box = Box::from_xywh(parse_number(t[first], path, line_no),
                                 parse_number(t[first + 1], path, line_no),
                                 parse_number(t[first + 2], path, line_no),
                                 parse_number(t[first + 3], path, line_no));
  if (!box.valid()) {
    throw ParseError(fmt::format("{}:{}: box must have positive width and height", path.string(),
                                 line_no));
  }
  return box;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("{}: cannot open for writing", path.string()));
  return out;
}

}  // namespace

std::string format_real(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  std::string s(buf, ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string format_fixed(double value, int digits) {
  std::string s = fmt::format("{:.{}f}", value, digits);
  if (s.starts_with("-") && std::stod(s) == 0.0) s.erase(0, 1);
  return s;
}

std::vector<AnnotationEntry> read_annotations(const std::filesystem::path& path) {
  std::vector<AnnotationEntry> entries;
  for_each_record(path, 5, [&](const std::vector<std::string>& t, int line_no) {
    entries.push_back(AnnotationEntry{t[0], parse_xywh(t, 1, path, line_no)});
  });
  return entries;
}

void write_annotations(const std::filesystem::path& path,
                       const std::vector<AnnotationEntry>& entries) {
  auto out = open_for_write(path);
  out << "# image_file x1 y1 w h\n";
  for (const auto& e : entries) {
    out << e.image_file << ' ' << format_fixed(e.box.x1(), 2) << ' ' << format_fixed(e.box.y1(), 2)
        << ' ' << format_fixed(e.box.w, 2) << ' ' << format_fixed(e.box.h, 2) << '\n';
  }
}

GroundTruth to_ground_truth(const std::vector<AnnotationEntry>& entries) {
  GroundTruth gt;
  for (const auto& e : entries) gt[e.image_file].push_back(e.box);
  return gt;
}

std::vector<Detection> read_detections(const std::filesystem::path& path) {
  std::vector<Detection> dets;
  for_each_record(path, 6, [&](const std::vector<std::string>& t, int line_no) {
    const double score = parse_number(t[1], path, line_no);
    dets.push_back(Detection{t[0], parse_xywh(t, 2, path, line_no), score});
  });
  return dets;
}

void write_detections(std::ostream& out, const std::vector<Detection>& dets) {
  out << "# image_file score x1 y1 w h\n";
  for (const auto& d : dets) {
    out << d.image_id << ' ' << format_fixed(d.score, 6) << ' ' << format_fixed(d.box.x1(), 2)
        << ' ' << format_fixed(d.box.y1(), 2) << ' ' << format_fixed(d.box.w, 2) << ' '
        << format_fixed(d.box.h, 2) << '\n';
  }
}

void write_detections(const std::filesystem::path& path, const std::vector<Detection>& dets) {
  auto out = open_for_write(path);
  write_detections(out, dets);
}

void write_pr_csv(std::ostream& out, const PrCurve& curve) {
  out << "threshold,recall,precision\n";
  for (const auto& p : curve.points) {
    out << format_real(p.threshold) << ',' << format_real(p.recall) << ','
        << format_real(p.precision) << '\n';
  }
  out << "# AP=" << format_real(curve.ap) << '\n';
}

}  // namespace cms::evalkit
