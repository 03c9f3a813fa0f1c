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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "cmsrcnn/numcore/tensor.hpp"

namespace cms::numcore {

using ForwardFn = std::function<TensorD(const TensorD&)>;
// (input, grad wrt output) -> grad wrt input
using BackwardFn = std::function<TensorD(const TensorD&, const TensorD&)>;
// Fingerprint of the piecewise regime an input falls in (ReLU masks, argmax
// positions). Coordinates whose +/- epsilon probes change the fingerprint sit
// on a nondifferentiability and are skipped.
using RegimeFn = std::function<std::vector<std::int64_t>(const TensorD&)>;

struct GradCheckOptions {
  double epsilon = 1e-3;
  std::uint64_t seed = 0;
  RegimeFn regime;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares the analytic input gradient against central differences of the
/// scalar objective L(x) = sum_i r_i * forward(x)_i, with r drawn uniformly
/// from [-1, 1] by `seed`. Per coordinate the error is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
GradCheckReport check_gradient(const ForwardFn& forward,
                               const BackwardFn& backward,
                               const TensorD& input,
                               const GradCheckOptions& options = {});

}  // namespace cms::numcore
