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
#include <string>
#include <vector>

#include "cmsrcnn/numcore/gradcheck.hpp"

namespace cms::harness {

inline constexpr double kGradTolerance = 1e-4;

struct GradCase {
  std::string name;  // "<operation>/<checked tensor>"
  numcore::GradCheckReport report;
  bool passed() const { return report.checked > 0 && report.max_rel_error < kGradTolerance; }
};

/// Central finite-difference checks of every differentiable operation on
/// seeded random double-precision micro-inputs.
std::vector<GradCase> run_grad_suite(std::uint64_t seed);

}  // namespace cms::harness
