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

#include <span>
#include <string>
#include <vector>

#include "cmsrcnn/numcore/tensor.hpp"

namespace cms::numcore {

/// A learnable tensor plus the gradient accumulated for it since the last
/// optimizer step.
template <typename T>
struct BasicParam {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;

  BasicParam() = default;
  BasicParam(std::string param_name, BasicTensor<T> initial)
      : name(std::move(param_name)),
        value(std::move(initial)),
        grad(value.shape()) {}

  void zero_grad() { grad.fill(T(0)); }
};

using Param = BasicParam<float>;
using ParamD = BasicParam<double>;

template <typename T>
using ParamRefs = std::vector<BasicParam<T>*>;

/// Throws std::invalid_argument on a duplicate name or value/grad shape drift.
template <typename T>
void validate_params(std::span<BasicParam<T>* const> params);

}  // namespace cms::numcore
