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

#include "cmsrcnn/harness/checkpoint.hpp"

#include <fmt/format.h>

#include <bit>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string_view>

namespace cms::harness {
namespace {

constexpr std::string_view kMagic = "CMSRCKPT";

template <typename U>
void put(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
  }
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename U>
  U get(std::string_view what) {
    need(sizeof(U), what);
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      value |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return value;
  }

  std::string_view take(std::size_t n, std::string_view what) {
    need(n, what);
    const std::string_view s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, std::string_view what) const {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(fmt::format("checkpoint truncated while reading {}", what));
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(std::uint64_t config_hash,
                                 std::span<numcore::Param* const> params) {
  std::string out(kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, config_hash);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const numcore::Param* p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.order()));
    for (int d : p->value.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (float v : p->value.data()) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

void deserialize_checkpoint(const std::string& bytes, std::uint64_t config_hash,
                            std::span<numcore::Param* const> params, bool ignore_hash) {
  Reader in(bytes);
  if (in.take(kMagic.size(), "magic") != kMagic) throw CheckpointError("not a checkpoint file");
  const auto version = in.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(fmt::format("unsupported checkpoint version {}", version));
  }
  const auto hash = in.get<std::uint64_t>("config hash");
  if (hash != config_hash && !ignore_hash) {
    throw CheckpointError(fmt::format(
        "checkpoint config hash {:016x} does not match the model config {:016x}", hash, config_hash));
  }
  const auto count = in.get<std::uint32_t>("parameter count");
  if (count != params.size()) {
    throw CheckpointError(
        fmt::format("checkpoint holds {} parameters, model has {}", count, params.size()));
  }
  // Decode everything before touching the model so a bad file leaves it intact.
  std::vector<std::vector<float>> values(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const numcore::Param& p = *params[i];
    const auto name_len = in.get<std::uint32_t>("name length");
    const std::string_view name = in.take(name_len, "name");
    if (name != p.name) {
      throw CheckpointError(
          fmt::format("checkpoint parameter {} is '{}', model expects '{}'", i, name, p.name));
    }
    const auto order = in.get<std::uint32_t>("order");
    numcore::Shape shape;
    for (std::uint32_t d = 0; d < order; ++d) shape.push_back(static_cast<int>(in.get<std::uint32_t>("dims")));
    if (shape != p.value.shape()) {
      throw CheckpointError(fmt::format("checkpoint parameter '{}' has shape {}, model expects {}",
                                        name, numcore::shape_str(shape),
                                        numcore::shape_str(p.value.shape())));
    }
    values[i].resize(p.value.size());
    for (float& v : values[i]) v = std::bit_cast<float>(in.get<std::uint32_t>("values"));
  }
  if (!in.done()) throw CheckpointError("trailing bytes after checkpoint payload");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::copy(values[i].begin(), values[i].end(), params[i]->value.data().begin());
  }
}

void save_checkpoint(const std::filesystem::path& path, std::uint64_t config_hash,
                     std::span<numcore::Param* const> params) {
  const std::string bytes = serialize_checkpoint(config_hash, params);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(fmt::format("cannot write checkpoint '{}'", tmp.string()));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError(fmt::format("failed writing '{}'", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

void load_checkpoint(const std::filesystem::path& path, std::uint64_t config_hash,
                     std::span<numcore::Param* const> params, bool ignore_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(fmt::format("cannot open checkpoint '{}'", path.string()));
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    deserialize_checkpoint(bytes, config_hash, params, ignore_hash);
  } catch (const CheckpointError& e) {
    throw CheckpointError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

}  // namespace cms::harness
