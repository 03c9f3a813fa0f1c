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

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>

#include "cmsrcnn/numcore/param.hpp"

namespace cms::harness {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout, little-endian: "CMSRCKPT", u32 version, u64 config hash, u32
/// count, then per parameter: u32 name length, name, u32 order, u32 dims,
/// f32 values.
std::string serialize_checkpoint(std::uint64_t config_hash,
                                 std::span<numcore::Param* const> params);

/// Restores values in place. Names, order and shapes must match exactly; a
/// config-hash mismatch is an error unless `ignore_hash`.
void deserialize_checkpoint(const std::string& bytes, std::uint64_t config_hash,
                            std::span<numcore::Param* const> params, bool ignore_hash = false);

/// Writes through a temporary file and a rename, so an interrupted save
/// never clobbers the previous checkpoint.
void save_checkpoint(const std::filesystem::path& path, std::uint64_t config_hash,
                     std::span<numcore::Param* const> params);

void load_checkpoint(const std::filesystem::path& path, std::uint64_t config_hash,
                     std::span<numcore::Param* const> params, bool ignore_hash = false);

}  // namespace cms::harness
