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

#include "cmsrcnn/numcore/gradcheck.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <random>

namespace cms::numcore {
namespace {

double project(const TensorD& y, const std::vector<double>& r) {
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) total += r[i] * y[i];
  return total;
}

}  // namespace

GradCheckReport check_gradient(const ForwardFn& forward,
                               const BackwardFn& backward,
                               const TensorD& input,
                               const GradCheckOptions& options) {
  if (!(options.epsilon > 0.0)) {
    throw std::invalid_argument("check_gradient: epsilon must be positive");
  }
  const TensorD y0 = forward(input);
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  std::vector<double> r(y0.size());
  for (auto& v : r) v = uniform(rng);
  const TensorD weights(y0.shape(), r);

  const TensorD analytic = backward(input, weights);
  if (!analytic.same_shape(input)) {
    throw ShapeError(fmt::format("check_gradient: backward returned {} for input {}",
                                 shape_str(analytic.shape()), shape_str(input.shape())));
  }

  std::vector<std::int64_t> base_regime;
  if (options.regime) base_regime = options.regime(input);

  GradCheckReport report;
  TensorD probe = input;
  for (std::size_t i = 0; i < input.size(); ++i) {
    const double x = input[i];
    probe[i] = x + options.epsilon;
    const double plus = project(forward(probe), r);
    const bool plus_same = !options.regime || options.regime(probe) == base_regime;
    probe[i] = x - options.epsilon;
    const double minus = project(forward(probe), r);
    const bool minus_same = !options.regime || options.regime(probe) == base_regime;
    probe[i] = x;
    if (!plus_same || !minus_same) {
      ++report.skipped;
      continue;
    }
    const double numeric = (plus - minus) / (2.0 * options.epsilon);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double err = std::abs(a - numeric) / denom;
    ++report.checked;
    if (report.checked == 1 || err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_index = i;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
  }
  return report;
}

}  // namespace cms::numcore
