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

#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmsrcnn/numcore/param.hpp"

namespace cms::numcore {

struct SgdOptions {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Momentum SGD: v <- momentum * v + (g + weight_decay * w); w <- w - lr * v.
/// Velocity buffers are keyed by parameter name.
template <typename T>
class Sgd {
 public:
  explicit Sgd(SgdOptions options);

  /// Updates every parameter and zeroes its gradient. A non-finite gradient
  /// anywhere aborts the whole step before any value changes.
  void step(std::span<BasicParam<T>* const> params);

  const SgdOptions& options() const { return options_; }
  void set_lr(double lr) { options_.lr = lr; }

 private:
  SgdOptions options_;
  std::map<std::string, std::vector<double>> velocity_;
};

}  // namespace cms::numcore
