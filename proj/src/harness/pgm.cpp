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

#include "cmsrcnn/harness/pgm.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <fstream>

namespace cms::harness {
namespace {

int read_header_int(std::istream& in, const std::filesystem::path& path) {
  while (true) {
    const int c = in.peek();
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (c != EOF && std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int value = -1;
  if (!(in >> value) || value < 0) {
    throw ImageError(fmt::format("{}: malformed PGM header", path.string()));
  }
  return value;
}

}  // namespace

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError(fmt::format("cannot open image '{}'", path.string()));
  char magic[2] = {};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5') {
    throw ImageError(fmt::format("{}: not a binary PGM (P5)", path.string()));
  }
  const int w = read_header_int(in, path);
  const int h = read_header_int(in, path);
  const int maxval = read_header_int(in, path);
  if (w < 1 || h < 1 || maxval < 1 || maxval > 255) {
    throw ImageError(fmt::format("{}: unsupported PGM geometry {}x{} maxval {}", path.string(),
                                 w, h, maxval));
  }
  in.get();  // the single whitespace before the raster
  GrayImage img(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw ImageError(fmt::format("{}: truncated raster", path.string()));
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageError(fmt::format("cannot write image '{}'", path.string()));
  out << "P5\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw ImageError(fmt::format("failed writing '{}'", path.string()));
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir_or_file) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir_or_file)) return {dir_or_file};
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir_or_file)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace cms::harness
