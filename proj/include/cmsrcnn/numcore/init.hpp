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
#include <random>

#include "cmsrcnn/numcore/param.hpp"

namespace cms::numcore {

/// Every random draw in the project comes from one of these, seeded explicitly.
using Rng = std::mt19937_64;

/// Uniform in +/- sqrt(6 / (fan_in + fan_out)).
template <typename T>
void glorot_uniform(BasicParam<T>& param, int fan_in, int fan_out, Rng& rng);

template <typename T>
void fill_constant(BasicParam<T>& param, T value);

}  // namespace cms::numcore
