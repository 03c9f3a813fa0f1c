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

#include "cmsrcnn/numcore/init.hpp"

#include <cmath>

namespace cms::numcore {

template <typename T>
void glorot_uniform(BasicParam<T>& param, int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> uniform(-limit, limit);
  for (auto& v : param.value.data()) v = static_cast<T>(uniform(rng));
  param.zero_grad();
}

template <typename T>
void fill_constant(BasicParam<T>& param, T value) {
  param.value.fill(value);
  param.zero_grad();
}

template void glorot_uniform(BasicParam<float>&, int, int, Rng&);
template void glorot_uniform(BasicParam<double>&, int, int, Rng&);
template void fill_constant(BasicParam<float>&, float);
template void fill_constant(BasicParam<double>&, double);

}  // namespace cms::numcore
