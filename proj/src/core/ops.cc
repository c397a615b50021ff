// Copyright 2026 The nanodp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "nanodp/ops.h"

#include <algorithm>
#include <cmath>
#include <string>

namespace nanodp {
namespace {

void require_rank(const Shape& shape, std::size_t rank, const char* what) {
  if (shape.size() != rank) {
    throw DimensionError(std::string(what) + " expects rank " +
                         std::to_string(rank) + ", got " +
                         shape_to_string(shape));
  }
}

// Accumulates one sample's cross-correlation into `out`, which must be
// zero-initialized. The contribution order for each output element is
// (ci, ki, kj) ascending.
template <typename T>
void conv_accumulate(const T* in, std::size_t c_in, std::size_t h,
                     std::size_t w, const T* kernels, std::size_t c_out,
                     std::size_t kh, std::size_t kw, std::size_t stride,
                     std::size_t padding, T* out, std::size_t oh,
                     std::size_t ow) {
  const auto ph = static_cast<std::ptrdiff_t>(padding);
  for (std::size_t co = 0; co < c_out; ++co) {
    T* out_plane = out + co * oh * ow;
    for (std::size_t ci = 0; ci < c_in; ++ci) {
      const T* in_plane = in + ci * h * w;
      for (std::size_t ki = 0; ki < kh; ++ki) {
        for (std::size_t kj = 0; kj < kw; ++kj) {
          const T k = kernels[((co * c_in + ci) * kh + ki) * kw + kj];
          for (std::size_t y = 0; y < oh; ++y) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(y * stride + ki) - ph;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            const T* in_row = in_plane + iy * w;
            T* out_row = out_plane + y * ow;
            for (std::size_t x = 0; x < ow; ++x) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(x * stride + kj) - ph;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              out_row[x] += in_row[ix] * k;
            }
          }
        }
      }
    }
  }
}

template <typename T>
struct LayerBackward {
  const Shape& input_shape;
  const Tensor<T>& upstream;

  LayerGrads<T> operator()(std::monostate&) const {
    throw InternalError("backward_layer: tape has no saved forward state");
  }

  LayerGrads<T> operator()(LinearSaved<T>& s) const {
    const Tensor<T>& x = s.input;
    const Tensor<T>& weight = *s.weight;
    const std::size_t batch = x.dim(0), in = x.dim(1), out = weight.dim(1);
    Tensor<T> dx({batch, in});
    Tensor<T> dw({in, out});
    Tensor<T> db({out});
    for (std::size_t b = 0; b < batch; ++b) {
      const T* dy = upstream.data() + b * out;
      const T* xr = x.data() + b * in;
      for (std::size_t i = 0; i < in; ++i) {
        const T* w_row = weight.data() + i * out;
        T acc = T{0};
        for (std::size_t o = 0; o < out; ++o) acc += dy[o] * w_row[o];
        dx[b * in + i] = acc;
        T* dw_row = dw.data() + i * out;
        for (std::size_t o = 0; o < out; ++o) dw_row[o] += xr[i] * dy[o];
      }
      for (std::size_t o = 0; o < out; ++o) db[o] += dy[o];
    }
    LayerGrads<T> g{std::move(dx), {}};
    g.param_grads.push_back(std::move(dw));
    g.param_grads.push_back(std::move(db));
    return g;
  }

  LayerGrads<T> operator()(Conv2dSaved<T>& s) const {
    const Tensor<T>& x = s.input;
    const Tensor<T>& kernels = *s.kernels;
    const std::size_t batch = x.dim(0), c_in = x.dim(1), h = x.dim(2),
                      w = x.dim(3);
    const std::size_t c_out = kernels.dim(0), kh = kernels.dim(2),
                      kw = kernels.dim(3);
    const std::size_t oh = upstream.dim(2), ow = upstream.dim(3);
    const auto ph = static_cast<std::ptrdiff_t>(s.padding);
    Tensor<T> dx(x.shape());
    Tensor<T> dk(kernels.shape());
    Tensor<T> db({c_out});
    for (std::size_t b = 0; b < batch; ++b) {
      const T* in = x.data() + b * c_in * h * w;
      const T* dy = upstream.data() + b * c_out * oh * ow;
      T* din = dx.data() + b * c_in * h * w;
      for (std::size_t co = 0; co < c_out; ++co) {
        const T* dy_plane = dy + co * oh * ow;
        for (std::size_t i = 0; i < oh * ow; ++i) db[co] += dy_plane[i];
        for (std::size_t ci = 0; ci < c_in; ++ci) {
          const T* in_plane = in + ci * h * w;
          T* din_plane = din + ci * h * w;
          for (std::size_t ki = 0; ki < kh; ++ki) {
            for (std::size_t kj = 0; kj < kw; ++kj) {
              const std::size_t kidx = ((co * c_in + ci) * kh + ki) * kw + kj;
              const T k = kernels[kidx];
              T acc = T{0};
              for (std::size_t y = 0; y < oh; ++y) {
                const std::ptrdiff_t iy =
                    static_cast<std::ptrdiff_t>(y * s.stride + ki) - ph;
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t xo = 0; xo < ow; ++xo) {
                  const std::ptrdiff_t ix =
                      static_cast<std::ptrdiff_t>(xo * s.stride + kj) - ph;
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                  const T g = dy_plane[y * ow + xo];
                  acc += g * in_plane[iy * w + ix];
                  din_plane[iy * w + ix] += g * k;
                }
              }
              dk[kidx] += acc;
            }
          }
        }
      }
    }
    LayerGrads<T> g{std::move(dx), {}};
    g.param_grads.push_back(std::move(dk));
    g.param_grads.push_back(std::move(db));
    return g;
  }

  LayerGrads<T> operator()(GroupNormSaved<T>& s) const {
    const Tensor<T>& xhat = s.normalized;
    const Tensor<T>& gamma = *s.gamma;
    const std::size_t batch = xhat.dim(0), channels = xhat.dim(1);
    const std::size_t spatial = xhat.numel() / (batch * channels);
    const std::size_t per_group = channels / s.groups;
    const std::size_t m = per_group * spatial;
    Tensor<T> dx(xhat.shape());
    Tensor<T> dgamma({channels});
    Tensor<T> dbeta({channels});
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t g = 0; g < s.groups; ++g) {
        const std::size_t base = (b * channels + g * per_group) * spatial;
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const std::size_t c = g * per_group + i / spatial;
          const double dxh = static_cast<double>(upstream[base + i]) *
                             static_cast<double>(gamma[c]);
          sum_dxhat += dxh;
          sum_dxhat_xhat += dxh * static_cast<double>(xhat[base + i]);
        }
        const double rstd = static_cast<double>(s.inv_std[b * s.groups + g]);
        const double md = static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i) {
          const std::size_t c = g * per_group + i / spatial;
          const double dxh = static_cast<double>(upstream[base + i]) *
                             static_cast<double>(gamma[c]);
          dx[base + i] = static_cast<T>(
              rstd / md *
              (md * dxh - sum_dxhat -
               static_cast<double>(xhat[base + i]) * sum_dxhat_xhat));
        }
      }
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t base = (b * channels + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) {
          dgamma[c] += upstream[base + i] * xhat[base + i];
          dbeta[c] += upstream[base + i];
        }
      }
    }
    LayerGrads<T> g{std::move(dx), {}};
    g.param_grads.push_back(std::move(dgamma));
    g.param_grads.push_back(std::move(dbeta));
    return g;
  }

  LayerGrads<T> operator()(ReluSaved<T>& s) const {
    Tensor<T> dx(s.input.shape());
    for (std::size_t i = 0; i < dx.numel(); ++i) {
      dx[i] = s.input[i] > T{0} ? upstream[i] : T{0};
    }
    return {std::move(dx), {}};
  }

  LayerGrads<T> operator()(AvgPoolSaved& s) const {
    const std::size_t batch = input_shape[0], c = input_shape[1],
                      h = input_shape[2], w = input_shape[3];
    const std::size_t oh = h / s.window, ow = w / s.window;
    const T scale = T{1} / static_cast<T>(s.window * s.window);
    Tensor<T> dx(input_shape);
    for (std::size_t p = 0; p < batch * c; ++p) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          dx[(p * h + y) * w + x] =
              upstream[(p * oh + y / s.window) * ow + x / s.window] * scale;
        }
      }
    }
    return {std::move(dx), {}};
  }

  LayerGrads<T> operator()(FlattenSaved&) const {
    return {upstream.reshape(input_shape), {}};
  }
};

}  // namespace

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kLinear: return "linear";
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kGroupNorm: return "group_norm";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kAvgPool: return "avg_pool";
    case LayerKind::kFlatten: return "flatten";
  }
  return "unknown";
}

std::size_t conv_output_extent(std::size_t in, std::size_t kernel,
                               std::size_t stride, std::size_t padding) {
  if (stride == 0 || kernel == 0) {
    throw ConfigError("conv2d", "kernel and stride must be >= 1");
  }
  const std::size_t padded = in + 2 * padding;
  if (padded < kernel || (padded - kernel) % stride != 0) {
    throw ConfigError("conv2d", "output extent (" + std::to_string(in) +
                                    " + 2*" + std::to_string(padding) + " - " +
                                    std::to_string(kernel) + ")/" +
                                    std::to_string(stride) +
                                    " + 1 is not a positive integer");
  }
  return (padded - kernel) / stride + 1;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " +
                         shape_to_string(a.shape()) + " by " +
                         shape_to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> out({m, n});
  // i-p-j order: each out[i][j] still receives its k terms in p order.
  for (std::size_t i = 0; i < m; ++i) {
    T* out_row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      const T* b_row = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) out_row[j] += av * b_row[j];
    }
  }
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank(a.shape(), 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor<T> out({n, m});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  }
  return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels,
                 std::size_t stride, std::size_t padding) {
  require_rank(input.shape(), 3, "conv2d input");
  require_rank(kernels.shape(), 4, "conv2d kernels");
  if (kernels.dim(1) != input.dim(0)) {
    throw DimensionError("conv2d: kernels " +
                         shape_to_string(kernels.shape()) +
                         " do not match input " +
                         shape_to_string(input.shape()));
  }
  const std::size_t oh =
      conv_output_extent(input.dim(1), kernels.dim(2), stride, padding);
  const std::size_t ow =
      conv_output_extent(input.dim(2), kernels.dim(3), stride, padding);
  Tensor<T> out({kernels.dim(0), oh, ow});
  conv_accumulate(input.data(), input.dim(0), input.dim(1), input.dim(2),
                  kernels.data(), kernels.dim(0), kernels.dim(2),
                  kernels.dim(3), stride, padding, out.data(), oh, ow);
  return out;
}

template <typename T>
ForwardResult<T> linear_forward(const Tensor<T>& x, const Tensor<T>& weight,
                                const Tensor<T>& bias) {
  require_rank(x.shape(), 2, "linear input");
  require_rank(weight.shape(), 2, "linear weight");
  if (bias.rank() != 1 || bias.dim(0) != weight.dim(1)) {
    throw DimensionError("linear: bias " + shape_to_string(bias.shape()) +
                         " does not match weight " +
                         shape_to_string(weight.shape()));
  }
  Tensor<T> y = matmul(x, weight);
  const std::size_t out = weight.dim(1);
  for (std::size_t b = 0; b < x.dim(0); ++b) {
    for (std::size_t o = 0; o < out; ++o) y[b * out + o] += bias[o];
  }
  Shape out_shape = y.shape();
  return {std::move(y),
          LayerTape<T>(LayerKind::kLinear, x.shape(), std::move(out_shape),
                       LinearSaved<T>{x, &weight})};
}

template <typename T>
ForwardResult<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& kernels,
                                const Tensor<T>& bias, std::size_t stride,
                                std::size_t padding) {
  require_rank(x.shape(), 4, "conv2d input");
  require_rank(kernels.shape(), 4, "conv2d kernels");
  const std::size_t batch = x.dim(0), c_in = x.dim(1), h = x.dim(2),
                    w = x.dim(3);
  const std::size_t c_out = kernels.dim(0);
  if (kernels.dim(1) != c_in || bias.rank() != 1 || bias.dim(0) != c_out) {
    throw DimensionError("conv2d: kernels " +
                         shape_to_string(kernels.shape()) + " / bias " +
                         shape_to_string(bias.shape()) +
                         " do not match input " + shape_to_string(x.shape()));
  }
  const std::size_t oh = conv_output_extent(h, kernels.dim(2), stride, padding);
  const std::size_t ow = conv_output_extent(w, kernels.dim(3), stride, padding);
  Tensor<T> y({batch, c_out, oh, ow});
  for (std::size_t b = 0; b < batch; ++b) {
    T* out = y.data() + b * c_out * oh * ow;
    conv_accumulate(x.data() + b * c_in * h * w, c_in, h, w, kernels.data(),
                    c_out, kernels.dim(2), kernels.dim(3), stride, padding, out,
                    oh, ow);
    for (std::size_t co = 0; co < c_out; ++co) {
      for (std::size_t i = 0; i < oh * ow; ++i) out[co * oh * ow + i] += bias[co];
    }
  }
  Shape out_shape = y.shape();
  return {std::move(y),
          LayerTape<T>(LayerKind::kConv2d, x.shape(), std::move(out_shape),
                       Conv2dSaved<T>{x, &kernels, stride, padding})};
}

template <typename T>
ForwardResult<T> group_norm_forward(const Tensor<T>& x, std::size_t groups,
                                    const Tensor<T>& gamma,
                                    const Tensor<T>& beta, double eps) {
  if (x.rank() < 2) {
    throw DimensionError("group_norm expects [batch x channels x ...], got " +
                         shape_to_string(x.shape()));
  }
  const std::size_t batch = x.dim(0), channels = x.dim(1);
  if (groups == 0 || channels % groups != 0) {
    throw ConfigError("group_norm", std::to_string(channels) +
                                        " channels are not divisible into " +
                                        std::to_string(groups) + " groups");
  }
  if (!(eps > 0.0)) throw ConfigError("group_norm", "eps must be > 0");
  if (gamma.numel() != channels || beta.numel() != channels) {
    throw DimensionError("group_norm: affine parameters must have " +
                         std::to_string(channels) + " entries");
  }
  const std::size_t spatial = x.numel() / (batch * channels);
  const std::size_t per_group = channels / groups;
  const std::size_t m = per_group * spatial;
  Tensor<T> y(x.shape());
  Tensor<T> xhat(x.shape());
  std::vector<T> inv_std(batch * groups);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t base = (b * channels + g * per_group) * spatial;
      double sum = 0.0;
      for (std::size_t i = 0; i < m; ++i) sum += static_cast<double>(x[base + i]);
      const double mean = sum / static_cast<double>(m);
      double sq = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double d = static_cast<double>(x[base + i]) - mean;
        sq += d * d;
      }
      const double rstd = 1.0 / std::sqrt(sq / static_cast<double>(m) + eps);
      inv_std[b * groups + g] = static_cast<T>(rstd);
      for (std::size_t i = 0; i < m; ++i) {
        const std::size_t c = g * per_group + i / spatial;
        const T xh =
            static_cast<T>((static_cast<double>(x[base + i]) - mean) * rstd);
        xhat[base + i] = xh;
        y[base + i] = xh * gamma[c] + beta[c];
      }
    }
  }
  return {std::move(y),
          LayerTape<T>(LayerKind::kGroupNorm, x.shape(), x.shape(),
                       GroupNormSaved<T>{std::move(xhat), std::move(inv_std),
                                         &gamma, groups})};
}

template <typename T>
ForwardResult<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return {std::move(y), LayerTape<T>(LayerKind::kRelu, x.shape(), x.shape(),
                                     ReluSaved<T>{x})};
}

template <typename T>
ForwardResult<T> avg_pool_forward(const Tensor<T>& x, std::size_t window) {
  require_rank(x.shape(), 4, "avg_pool input");
  const std::size_t batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (window == 0 || h % window != 0 || w % window != 0) {
    throw ConfigError("avg_pool", "window " + std::to_string(window) +
                                      " does not tile " + std::to_string(h) +
                                      "x" + std::to_string(w));
  }
  const std::size_t oh = h / window, ow = w / window;
  const T scale = T{1} / static_cast<T>(window * window);
  Tensor<T> y({batch, c, oh, ow});
  for (std::size_t p = 0; p < batch * c; ++p) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T acc = T{0};
        for (std::size_t dy = 0; dy < window; ++dy) {
          for (std::size_t dx = 0; dx < window; ++dx) {
            acc += x[(p * h + oy * window + dy) * w + ox * window + dx];
          }
        }
        y[(p * oh + oy) * ow + ox] = acc * scale;
      }
    }
  }
  Shape out_shape = y.shape();
  return {std::move(y),
          LayerTape<T>(LayerKind::kAvgPool, x.shape(), std::move(out_shape),
                       AvgPoolSaved{window})};
}

template <typename T>
ForwardResult<T> flatten_forward(const Tensor<T>& x) {
  const std::size_t batch = x.dim(0);
  Shape out_shape{batch, x.numel() / batch};
  Tensor<T> y = x.reshape(out_shape);
  return {std::move(y), LayerTape<T>(LayerKind::kFlatten, x.shape(),
                                     std::move(out_shape), FlattenSaved{})};
}

template <typename T>
LayerGrads<T> backward_layer(LayerTape<T>& tape, const Tensor<T>& upstream) {
  if (!tape.armed()) {
    throw InternalError(std::string("backward_layer(") +
                        layer_kind_name(tape.kind()) +
                        "): no matching forward on this tape");
  }
  if (upstream.shape() != tape.output_shape()) {
    throw InternalError(std::string("backward_layer(") +
                        layer_kind_name(tape.kind()) + "): upstream gradient " +
                        shape_to_string(upstream.shape()) +
                        " does not match recorded output " +
                        shape_to_string(tape.output_shape()));
  }
  auto saved = tape.take();
  return std::visit(LayerBackward<T>{tape.input_shape(), upstream}, saved);
}

template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits,
                                    std::span<const int> labels) {
  require_rank(logits.shape(), 2, "softmax_cross_entropy logits");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != batch) {
    throw DimensionError("softmax_cross_entropy: " +
                         std::to_string(labels.size()) + " labels for " +
                         std::to_string(batch) + " rows");
  }
  Tensor<T> grad(logits.shape());
  double total = 0.0;
  std::vector<double> p(classes);
  for (std::size_t b = 0; b < batch; ++b) {
    const int label = labels[b];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw InputError("label " + std::to_string(label) +
                       " out of range [0, " + std::to_string(classes) + ")");
    }
    const T* z = logits.data() + b * classes;
    double zmax = static_cast<double>(z[0]);
    for (std::size_t k = 1; k < classes; ++k) {
      zmax = std::max(zmax, static_cast<double>(z[k]));
    }
    double denom = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
      p[k] = std::exp(static_cast<double>(z[k]) - zmax);
      denom += p[k];
    }
    const double lse = zmax + std::log(denom);
    total += lse - static_cast<double>(z[label]);
    for (std::size_t k = 0; k < classes; ++k) {
      const double target = static_cast<int>(k) == label ? 1.0 : 0.0;
      grad[b * classes + k] = static_cast<T>((p[k] / denom - target) /
                                             static_cast<double>(batch));
    }
  }
  return {total / static_cast<double>(batch), std::move(grad)};
}

#define NANODP_INSTANTIATE_OPS(T)                                             \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> transpose(const Tensor<T>&);                             \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, std::size_t,  \
                            std::size_t);                                     \
  template ForwardResult<T> linear_forward(const Tensor<T>&,                  \
                                           const Tensor<T>&,                  \
                                           const Tensor<T>&);                 \
  template ForwardResult<T> conv2d_forward(const Tensor<T>&,                  \
                                           const Tensor<T>&,                  \
                                           const Tensor<T>&, std::size_t,     \
                                           std::size_t);                      \
  template ForwardResult<T> group_norm_forward(                               \
      const Tensor<T>&, std::size_t, const Tensor<T>&, const Tensor<T>&,      \
      double);                                                                \
  template ForwardResult<T> relu_forward(const Tensor<T>&);                   \
  template ForwardResult<T> avg_pool_forward(const Tensor<T>&, std::size_t);  \
  template ForwardResult<T> flatten_forward(const Tensor<T>&);                \
  template LayerGrads<T> backward_layer(LayerTape<T>&, const Tensor<T>&);     \
  template LossResult<T> softmax_cross_entropy(const Tensor<T>&,              \
                                               std::span<const int>);

NANODP_INSTANTIATE_OPS(float)
NANODP_INSTANTIATE_OPS(double)

#undef NANODP_INSTANTIATE_OPS

}  // namespace nanodp
