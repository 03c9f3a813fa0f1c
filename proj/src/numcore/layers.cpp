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

#include "cmsrcnn/numcore/layers.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <limits>

namespace cms::numcore {
namespace {

struct ConvDims {
  int n, c, h, w;
  int out_c, kh, kw;
  int oh, ow;
};

template <typename T>
ConvDims conv_dims(const BasicTensor<T>& input, const BasicParam<T>& weights,
                   const BasicParam<T>& bias, ConvGeometry geom) {
  if (input.order() != 4) {
    throw ShapeError(fmt::format("conv2d '{}': input must be 4-order, got {}",
                                 weights.name, shape_str(input.shape())));
  }
  if (weights.value.order() != 4) {
    throw ShapeError(fmt::format("conv2d '{}': weights must be 4-order, got {}",
                                 weights.name,
                                 shape_str(weights.value.shape())));
  }
  if (geom.stride < 1 || geom.pad < 0) {
    throw ShapeError(fmt::format("conv2d '{}': invalid stride {} / pad {}",
                                 weights.name, geom.stride, geom.pad));
  }
  ConvDims d{};
  d.n = input.dim(0);
  d.c = input.dim(1);
  d.h = input.dim(2);
  d.w = input.dim(3);
  d.out_c = weights.value.dim(0);
  d.kh = weights.value.dim(2);
  d.kw = weights.value.dim(3);
  if (weights.value.dim(1) != d.c) {
    throw ShapeError(fmt::format(
        "conv2d '{}': weights expect {} input channels, input {} has {}",
        weights.name, weights.value.dim(1), shape_str(input.shape()), d.c));
  }
  if (bias.value.size() != static_cast<std::size_t>(d.out_c)) {
    throw ShapeError(fmt::format("conv2d '{}': bias has {} entries, need {}",
                                 weights.name, bias.value.size(), d.out_c));
  }
  const int span_h = d.h + 2 * geom.pad - d.kh;
  const int span_w = d.w + 2 * geom.pad - d.kw;
  if (span_h < 0 || span_w < 0) {
    throw ShapeError(fmt::format(
        "conv2d '{}': zero-sized output for input {} with kernel {}x{} pad {}",
        weights.name, shape_str(input.shape()), d.kh, d.kw, geom.pad));
  }
  d.oh = span_h / geom.stride + 1;
  d.ow = span_w / geom.stride + 1;
  return d;
}

bool is_pointwise(const ConvDims& d, ConvGeometry geom) {
  return d.kh == 1 && d.kw == 1 && geom.stride == 1 && geom.pad == 0;
}

// Unfolds one image (C, H, W) into a (C*kH*kW, oH*oW) matrix.
template <typename T>
void im2col(const T* image, const ConvDims& d, ConvGeometry geom, T* col) {
  const int plane = d.oh * d.ow;
  for (int c = 0; c < d.c; ++c) {
    for (int ky = 0; ky < d.kh; ++ky) {
      for (int kx = 0; kx < d.kw; ++kx) {
        T* row = col + ((c * d.kh + ky) * d.kw + kx) * plane;
        for (int oy = 0; oy < d.oh; ++oy) {
          const int iy = oy * geom.stride - geom.pad + ky;
          T* dst = row + oy * d.ow;
          if (iy < 0 || iy >= d.h) {
            std::fill(dst, dst + d.ow, T(0));
            continue;
          }
          const T* src = image + (static_cast<std::size_t>(c) * d.h + iy) * d.w;
          for (int ox = 0; ox < d.ow; ++ox) {
            const int ix = ox * geom.stride - geom.pad + kx;
            dst[ox] = (ix < 0 || ix >= d.w) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

void col2im(const double* col, const ConvDims& d, ConvGeometry geom,
            double* image) {
  const int plane = d.oh * d.ow;
  for (int c = 0; c < d.c; ++c) {
    for (int ky = 0; ky < d.kh; ++ky) {
      for (int kx = 0; kx < d.kw; ++kx) {
        const double* row = col + ((c * d.kh + ky) * d.kw + kx) * plane;
        for (int oy = 0; oy < d.oh; ++oy) {
          const int iy = oy * geom.stride - geom.pad + ky;
          if (iy < 0 || iy >= d.h) continue;
          double* dst = image + (static_cast<std::size_t>(c) * d.h + iy) * d.w;
          const double* src = row + oy * d.ow;
          for (int ox = 0; ox < d.ow; ++ox) {
            const int ix = ox * geom.stride - geom.pad + kx;
            if (ix >= 0 && ix < d.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input,
                      const BasicParam<T>& weights, const BasicParam<T>& bias,
                      ConvGeometry geom) {
  const ConvDims d = conv_dims(input, weights, bias, geom);
  const int k = d.c * d.kh * d.kw;
  const int plane = d.oh * d.ow;
  const bool pointwise = is_pointwise(d, geom);
  BasicTensor<T> out({d.n, d.out_c, d.oh, d.ow});
  std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(k) * plane);
  std::vector<double> acc(plane);
  const T* w = weights.value.raw();
  for (int n = 0; n < d.n; ++n) {
    const T* image = input.raw() + static_cast<std::size_t>(n) * d.c * d.h * d.w;
    const T* cols = image;
    if (!pointwise) {
      im2col(image, d, geom, col.data());
      cols = col.data();
    }
    T* dst = out.raw() + static_cast<std::size_t>(n) * d.out_c * plane;
    for (int o = 0; o < d.out_c; ++o) {
      std::fill(acc.begin(), acc.end(), static_cast<double>(bias.value[o]));
      const T* wrow = w + static_cast<std::size_t>(o) * k;
      for (int j = 0; j < k; ++j) {
        const double wj = wrow[j];
        const T* src = cols + static_cast<std::size_t>(j) * plane;
        for (int p = 0; p < plane; ++p) acc[p] += wj * static_cast<double>(src[p]);
      }
      T* out_row = dst + static_cast<std::size_t>(o) * plane;
      for (int p = 0; p < plane; ++p) out_row[p] = static_cast<T>(acc[p]);
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> conv2d_backward(const BasicTensor<T>& grad_out,
                               const BasicTensor<T>& input,
                               BasicParam<T>& weights, BasicParam<T>& bias,
                               ConvGeometry geom) {
  const ConvDims d = conv_dims(input, weights, bias, geom);
  if (grad_out.shape() != Shape{d.n, d.out_c, d.oh, d.ow}) {
    throw ShapeError(fmt::format("conv2d '{}': grad_out {} does not match {}",
                                 weights.name, shape_str(grad_out.shape()),
                                 shape_str({d.n, d.out_c, d.oh, d.ow})));
  }
  const int k = d.c * d.kh * d.kw;
  const int plane = d.oh * d.ow;
  const bool pointwise = is_pointwise(d, geom);
  BasicTensor<T> grad_in(input.shape());
  std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(k) * plane);
  std::vector<double> grad_col(static_cast<std::size_t>(k) * plane);
  std::vector<double> grad_image(static_cast<std::size_t>(d.c) * d.h * d.w);
  std::vector<double> gw(static_cast<std::size_t>(d.out_c) * k, 0.0);
  std::vector<double> gb(d.out_c, 0.0);
  const T* w = weights.value.raw();

  for (int n = 0; n < d.n; ++n) {
    const T* image = input.raw() + static_cast<std::size_t>(n) * d.c * d.h * d.w;
    const T* cols = image;
    if (!pointwise) {
      im2col(image, d, geom, col.data());
      cols = col.data();
    }
    const T* g = grad_out.raw() + static_cast<std::size_t>(n) * d.out_c * plane;

    for (int o = 0; o < d.out_c; ++o) {
      const T* grow = g + static_cast<std::size_t>(o) * plane;
      double bsum = 0.0;
      for (int p = 0; p < plane; ++p) bsum += grow[p];
      gb[o] += bsum;
      double* gwrow = gw.data() + static_cast<std::size_t>(o) * k;
      for (int j = 0; j < k; ++j) {
        const T* src = cols + static_cast<std::size_t>(j) * plane;
        double dot = 0.0;
        for (int p = 0; p < plane; ++p) dot += static_cast<double>(grow[p]) * src[p];
        gwrow[j] += dot;
      }
    }

    std::fill(grad_col.begin(), grad_col.end(), 0.0);
    for (int o = 0; o < d.out_c; ++o) {
      const T* grow = g + static_cast<std::size_t>(o) * plane;
      const T* wrow = w + static_cast<std::size_t>(o) * k;
      for (int j = 0; j < k; ++j) {
        const double wj = wrow[j];
        double* dst = grad_col.data() + static_cast<std::size_t>(j) * plane;
        for (int p = 0; p < plane; ++p) dst[p] += wj * static_cast<double>(grow[p]);
      }
    }

    T* gi = grad_in.raw() + static_cast<std::size_t>(n) * d.c * d.h * d.w;
    if (pointwise) {
      for (std::size_t i = 0; i < grad_image.size(); ++i) gi[i] = static_cast<T>(grad_col[i]);
    } else {
      std::fill(grad_image.begin(), grad_image.end(), 0.0);
      col2im(grad_col.data(), d, geom, grad_image.data());
      for (std::size_t i = 0; i < grad_image.size(); ++i) gi[i] = static_cast<T>(grad_image[i]);
    }
  }

  for (std::size_t i = 0; i < gw.size(); ++i) weights.grad[i] += static_cast<T>(gw[i]);
  for (int o = 0; o < d.out_c; ++o) bias.grad[o] += static_cast<T>(gb[o]);
  return grad_in;
}

template <typename T>
PoolResult<T> max_pool2d(const BasicTensor<T>& input, int k, int stride) {
  if (input.order() != 4) {
    throw ShapeError("max_pool2d: input must be 4-order, got " +
                     shape_str(input.shape()));
  }
  if (k < 1 || stride < 1) {
    throw ShapeError(fmt::format("max_pool2d: invalid window {} / stride {}", k, stride));
  }
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (k > h || k > w) {
    throw ShapeError(fmt::format("max_pool2d: window {} larger than input {}", k,
                                 shape_str(input.shape())));
  }
  const int oh = (h - k) / stride + 1;
  const int ow = (w - k) / stride + 1;
  PoolResult<T> result{BasicTensor<T>({n, c, oh, ow}), {}};
  result.argmax.resize(result.output.size());
  std::size_t out_i = 0;
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t base = (static_cast<std::size_t>(b) * c + ch) * h * w;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++out_i) {
          std::size_t best = base + static_cast<std::size_t>(oy * stride) * w + ox * stride;
          T best_v = input[best];
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const std::size_t idx =
                  base + static_cast<std::size_t>(oy * stride + ky) * w + ox * stride + kx;
              if (input[idx] > best_v) {
                best_v = input[idx];
                best = idx;
              }
            }
          }
          result.output[out_i] = best_v;
          result.argmax[out_i] = static_cast<std::int64_t>(best);
        }
      }
    }
  }
  return result;
}

template <typename T>
BasicTensor<T> scatter_argmax_grad(const BasicTensor<T>& grad_out,
                                   std::span<const std::int64_t> argmax,
                                   const Shape& input_shape) {
  if (argmax.size() != grad_out.size()) {
    throw ShapeError(fmt::format("argmax has {} entries, grad_out has {}",
                                 argmax.size(), grad_out.size()));
  }
  BasicTensor<T> grad_in(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    if (argmax[i] < 0) continue;
    grad_in[static_cast<std::size_t>(argmax[i])] += grad_out[i];
  }
  return grad_in;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  BasicTensor<T> out = input;
  out.clear_grad();
  for (auto& v : out.data()) v = v > T(0) ? v : T(0);
  return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& grad_out,
                             const BasicTensor<T>& input) {
  if (!grad_out.same_shape(input)) {
    throw ShapeError("relu_backward: grad_out " + shape_str(grad_out.shape()) +
                     " vs input " + shape_str(input.shape()));
  }
  BasicTensor<T> grad_in(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    grad_in[i] = input[i] > T(0) ? grad_out[i] : T(0);
  }
  return grad_in;
}

namespace {

template <typename T>
std::pair<int, int> fc_dims(const BasicTensor<T>& input, const BasicParam<T>& weights,
                            const BasicParam<T>& bias) {
  if (weights.value.order() != 2) {
    throw ShapeError(fmt::format("fully_connected '{}': weights must be 2-order, got {}",
                                 weights.name, shape_str(weights.value.shape())));
  }
  const int rows = input.dim(0);
  const int in_dim = static_cast<int>(input.size() / rows);
  if (in_dim != weights.value.dim(1)) {
    throw ShapeError(fmt::format(
        "fully_connected '{}': input {} flattens to {} features, weights expect {}",
        weights.name, shape_str(input.shape()), in_dim, weights.value.dim(1)));
  }
  if (bias.value.size() != static_cast<std::size_t>(weights.value.dim(0))) {
    throw ShapeError(fmt::format("fully_connected '{}': bias has {} entries, need {}",
                                 weights.name, bias.value.size(), weights.value.dim(0)));
  }
  return {rows, in_dim};
}

}  // namespace

template <typename T>
BasicTensor<T> fully_connected(const BasicTensor<T>& input,
                               const BasicParam<T>& weights,
                               const BasicParam<T>& bias) {
  const auto [rows, in_dim] = fc_dims(input, weights, bias);
  const int out_dim = weights.value.dim(0);
  BasicTensor<T> out({rows, out_dim});
  for (int r = 0; r < rows; ++r) {
    const T* x = input.raw() + static_cast<std::size_t>(r) * in_dim;
    for (int o = 0; o < out_dim; ++o) {
      const T* wrow = weights.value.raw() + static_cast<std::size_t>(o) * in_dim;
      double acc = 0.0;
      for (int i = 0; i < in_dim; ++i) acc += static_cast<double>(wrow[i]) * x[i];
      out[static_cast<std::size_t>(r) * out_dim + o] =
          static_cast<T>(acc + static_cast<double>(bias.value[o]));
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> fully_connected_backward(const BasicTensor<T>& grad_out,
                                        const BasicTensor<T>& input,
                                        BasicParam<T>& weights,
                                        BasicParam<T>& bias) {
  const auto [rows, in_dim] = fc_dims(input, weights, bias);
  const int out_dim = weights.value.dim(0);
  if (grad_out.size() != static_cast<std::size_t>(rows) * out_dim) {
    throw ShapeError(fmt::format("fully_connected '{}': grad_out {} does not match ({}, {})",
                                 weights.name, shape_str(grad_out.shape()), rows, out_dim));
  }
  BasicTensor<T> grad_in(input.shape());
  std::vector<double> acc(in_dim);
  for (int r = 0; r < rows; ++r) {
    const T* g = grad_out.raw() + static_cast<std::size_t>(r) * out_dim;
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int o = 0; o < out_dim; ++o) {
      const double go = g[o];
      const T* wrow = weights.value.raw() + static_cast<std::size_t>(o) * in_dim;
      for (int i = 0; i < in_dim; ++i) acc[i] += go * wrow[i];
    }
    T* gi = grad_in.raw() + static_cast<std::size_t>(r) * in_dim;
    for (int i = 0; i < in_dim; ++i) gi[i] = static_cast<T>(acc[i]);
  }
  std::vector<double> gw(static_cast<std::size_t>(out_dim) * in_dim, 0.0);
  std::vector<double> gb(out_dim, 0.0);
  for (int r = 0; r < rows; ++r) {
    const T* g = grad_out.raw() + static_cast<std::size_t>(r) * out_dim;
    const T* x = input.raw() + static_cast<std::size_t>(r) * in_dim;
    for (int o = 0; o < out_dim; ++o) {
      const double go = g[o];
      gb[o] += go;
      if (go == 0.0) continue;
      double* gwrow = gw.data() + static_cast<std::size_t>(o) * in_dim;
      for (int i = 0; i < in_dim; ++i) gwrow[i] += go * x[i];
    }
  }
  for (std::size_t i = 0; i < gw.size(); ++i) weights.grad[i] += static_cast<T>(gw[i]);
  for (int o = 0; o < out_dim; ++o) bias.grad[o] += static_cast<T>(gb[o]);
  return grad_in;
}

#define CMS_INSTANTIATE_LAYERS(T)                                                          \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicParam<T>&,              \
                                 const BasicParam<T>&, ConvGeometry);                      \
  template BasicTensor<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&,    \
                                          BasicParam<T>&, BasicParam<T>&, ConvGeometry);   \
  template PoolResult<T> max_pool2d(const BasicTensor<T>&, int, int);                      \
  template BasicTensor<T> scatter_argmax_grad(const BasicTensor<T>&,                       \
                                              std::span<const std::int64_t>, const Shape&); \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                     \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);     \
  template BasicTensor<T> fully_connected(const BasicTensor<T>&, const BasicParam<T>&,     \
                                          const BasicParam<T>&);                           \
  template BasicTensor<T> fully_connected_backward(const BasicTensor<T>&,                  \
                                                   const BasicTensor<T>&, BasicParam<T>&,  \
                                                   BasicParam<T>&);

CMS_INSTANTIATE_LAYERS(float)
CMS_INSTANTIATE_LAYERS(double)

}  // namespace cms::numcore
