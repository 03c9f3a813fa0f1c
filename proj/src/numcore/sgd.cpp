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

#include "cmsrcnn/numcore/sgd.hpp"

#include <fmt/format.h>

#include <cmath>
#include <set>

namespace cms::numcore {

template <typename T>
void validate_params(std::span<BasicParam<T>* const> params) {
  std::set<std::string> seen;
  for (const BasicParam<T>* p : params) {
    if (!seen.insert(p->name).second) {
      throw std::invalid_argument("duplicate parameter name '" + p->name + "'");
    }
    if (!p->value.same_shape(p->grad)) {
      throw ShapeError(fmt::format("parameter '{}': value {} vs grad {}", p->name,
                                   shape_str(p->value.shape()), shape_str(p->grad.shape())));
    }
  }
}

template <typename T>
Sgd<T>::Sgd(SgdOptions options) : options_(options) {
  if (!(options_.lr >= 0.0) || !(options_.momentum >= 0.0 && options_.momentum < 1.0) ||
      !(options_.weight_decay >= 0.0)) {
    throw std::invalid_argument(fmt::format(
        "invalid SGD options: lr {} momentum {} weight_decay {}", options_.lr,
        options_.momentum, options_.weight_decay));
  }
}

template <typename T>
void Sgd<T>::step(std::span<BasicParam<T>* const> params) {
  validate_params(params);
  for (const BasicParam<T>* p : params) {
    for (T g : p->grad.data()) {
      if (!std::isfinite(g)) {
        throw NonFiniteGradient("non-finite gradient in parameter '" + p->name + "'");
      }
    }
  }
  for (BasicParam<T>* p : params) {
    auto& v = velocity_[p->name];
    if (v.size() != p->value.size()) v.assign(p->value.size(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double w = p->value[i];
      v[i] = options_.momentum * v[i] + static_cast<double>(p->grad[i]) +
             options_.weight_decay * w;
      p->value[i] = static_cast<T>(w - options_.lr * v[i]);
    }
    p->zero_grad();
  }
}

template void validate_params(std::span<BasicParam<float>* const>);
template void validate_params(std::span<BasicParam<double>* const>);
template class Sgd<float>;
template class Sgd<double>;

}  // namespace cms::numcore
