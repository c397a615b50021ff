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

// Layer math with explicit reverse-mode tapes.
//
// Every reduction runs left to right in a fixed index order, so results are
// bit-reproducible for identical inputs. Batched layer functions take the
// batch as the leading axis; nothing in a forward pass reads across that
// axis.

#ifndef NANODP_OPS_H_
#define NANODP_OPS_H_

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "nanodp/tensor.h"

namespace nanodp {

inline constexpr double kDefaultGroupNormEps = 1e-5;

// [m x k] * [k x n] -> [m x n].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

// Output extent of a strided, zero-padded window. Throws ConfigError unless
// (in + 2 * padding - kernel) is a non-negative multiple of stride.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel,
                               std::size_t stride, std::size_t padding);

// Single-sample cross-correlation (no kernel flip) with zero padding.
// input [c_in x h x w], kernels [c_out x c_in x kh x kw] -> [c_out x h' x w'].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels,
                 std::size_t stride, std::size_t padding);

enum class LayerKind { kLinear, kConv2d, kGroupNorm, kRelu, kAvgPool, kFlatten };

const char* layer_kind_name(LayerKind kind);

template <typename T>
struct LinearSaved {
  Tensor<T> input;
  const Tensor<T>* weight;
};

template <typename T>
struct Conv2dSaved {
  Tensor<T> input;
  const Tensor<T>* kernels;
  std::size_t stride;
  std::size_t padding;
};

template <typename T>
struct GroupNormSaved {
  Tensor<T> normalized;     // x_hat, same shape as the input
  std::vector<T> inv_std;   // one per (sample, group)
  const Tensor<T>* gamma;
  std::size_t groups;
};

template <typename T>
struct ReluSaved {
  Tensor<T> input;
};

struct AvgPoolSaved {
  std::size_t window;
};

struct FlattenSaved {};

// Values a layer's forward pass keeps for its backward pass. Parameter
// tensors are referenced, not copied, so they must outlive the tape.
// A tape is consumed by backward_layer and cannot be replayed.
template <typename T>
class LayerTape {
 public:
  using Saved = std::variant<std::monostate, LinearSaved<T>, Conv2dSaved<T>,
                             GroupNormSaved<T>, ReluSaved<T>, AvgPoolSaved,
                             FlattenSaved>;

  LayerTape() = default;
  LayerTape(LayerKind kind, Shape input_shape, Shape output_shape, Saved saved)
      : kind_(kind),
        input_shape_(std::move(input_shape)),
        output_shape_(std::move(output_shape)),
        saved_(std::move(saved)) {}

  LayerTape(const LayerTape&) = delete;
  LayerTape& operator=(const LayerTape&) = delete;
  LayerTape(LayerTape&&) noexcept = default;
  LayerTape& operator=(LayerTape&&) noexcept = default;

  LayerKind kind() const { return kind_; }
  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return output_shape_; }
  bool armed() const { return !std::holds_alternative<std::monostate>(saved_); }

  // Moves the saved state out, leaving the tape disarmed.
  Saved take() { return std::exchange(saved_, std::monostate{}); }

 private:
  LayerKind kind_ = LayerKind::kLinear;
  Shape input_shape_;
  Shape output_shape_;
  Saved saved_;
};

template <typename T>
struct ForwardResult {
  Tensor<T> output;
  LayerTape<T> tape;
};

template <typename T>
struct LayerGrads {
  Tensor<T> input_grad;
  std::vector<Tensor<T>> param_grads;  // same order as the layer's params
};

// x [b x in], weight [in x out], bias [out] -> [b x out].
template <typename T>
ForwardResult<T> linear_forward(const Tensor<T>& x, const Tensor<T>& weight,
                                const Tensor<T>& bias);

// x [b x c_in x h x w], kernels [c_out x c_in x kh x kw], bias [c_out].
template <typename T>
ForwardResult<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& kernels,
                                const Tensor<T>& bias, std::size_t stride,
                                std::size_t padding);

// x [b x c x ...]; statistics are taken over (c / groups) channels and all
// trailing positions of a single sample.
template <typename T>
ForwardResult<T> group_norm_forward(const Tensor<T>& x, std::size_t groups,
                                    const Tensor<T>& gamma,
                                    const Tensor<T>& beta,
                                    double eps = kDefaultGroupNormEps);

template <typename T>
ForwardResult<T> relu_forward(const Tensor<T>& x);

// Non-overlapping window x window average over the last two axes of
// x [b x c x h x w].
template <typename T>
ForwardResult<T> avg_pool_forward(const Tensor<T>& x, std::size_t window);

// [b x ...] -> [b x rest]
template <typename T>
ForwardResult<T> flatten_forward(const Tensor<T>& x);

// Exact reverse-mode gradients for the layer recorded in `tape`. The tape is
// consumed; a second call, or an upstream gradient whose shape differs from
// the recorded output, throws InternalError.
template <typename T>
LayerGrads<T> backward_layer(LayerTape<T>& tape, const Tensor<T>& upstream);

template <typename T>
struct LossResult {
  double loss;           // mean over the batch
  Tensor<T> logit_grad;  // d loss / d logits
};

// Softmax cross-entropy with log-sum-exp stabilization.
template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits,
                                    std::span<const int> labels);

}  // namespace nanodp

#endif  // NANODP_OPS_H_
