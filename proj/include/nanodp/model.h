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

#ifndef NANODP_MODEL_H_
#define NANODP_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nanodp/flat_gradient.h"
#include "nanodp/ops.h"
#include "nanodp/tensor.h"

namespace nanodp {

enum class LayerType {
  kLinear,
  kConv2d,
  kGroupNorm,
  kRelu,
  kAvgPool,
  kFlatten,
  // Parsed only so it can be rejected: its statistics span the batch.
  kBatchNorm,
};

struct LayerSpec {
  LayerType type = LayerType::kRelu;
  std::size_t units = 0;  // linear outputs or conv output channels
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 32;
  double eps = kDefaultGroupNormEps;
  std::size_t window = 2;

  std::string to_string() const;
};

// Layer token grammar, fields separated by ':'
//   linear:<out>
//   conv2d:<out_channels>[:<kernel>[:<stride>[:<padding>]]]
//   group_norm[:<groups>]      (groups defaults to 32)
//   avg_pool[:<window>]        (window defaults to 2)
//   relu | flatten | batch_norm
LayerSpec parse_layer_spec(std::string_view token);

struct ModelSpec {
  std::vector<LayerSpec> layers;
  Shape input_shape;  // one example, no batch axis
  std::size_t num_classes = 0;
};

// Comma- or whitespace-separated layer tokens.
ModelSpec parse_model_spec(std::string_view layers, Shape input_shape,
                           std::size_t num_classes);

// flatten (if the input is not rank 1), then linear+relu per hidden width,
// then a linear head.
ModelSpec mlp_spec(Shape input_shape, std::span<const std::size_t> hidden,
                   std::size_t num_classes);

// Four conv -> group_norm -> relu blocks (16, 32, 64, 64 channels, 8 groups),
// average pooling after the second and fourth, and a linear head. About 92k
// parameters for a 1x28x28 input.
ModelSpec cnn_spec(Shape input_shape, std::size_t num_classes);

// Model parameters, one tensor list per spec layer (empty for layers without
// parameters). Flattened order is layer order, weight before bias
// (gamma before beta for group norm).
template <typename T>
struct ParamSet {
  std::vector<std::vector<Tensor<T>>> layers;

  std::size_t dimension() const;
  std::vector<Extent> layer_extents() const;
  std::vector<double> flatten() const;
  // Overwrites every parameter from a flat vector of size dimension().
  void assign(std::span<const double> flat);
};

struct ExampleGradient {
  double loss = 0.0;
  FlatGradient grad;
};

// A validated architecture. Holds no parameters and no mutable state, so one
// Model can serve any number of concurrent per-example computations.
class Model {
 public:
  // Throws PrivacyViolationError for batch norm and ConfigError when the
  // layer shapes do not compose or the head does not emit num_classes.
  explicit Model(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }
  // Per-example activation shapes: [0] is the input, [i + 1] is layer i's
  // output.
  const std::vector<Shape>& activation_shapes() const { return shapes_; }
  std::size_t dimension() const { return dimension_; }
  std::vector<Extent> layer_extents() const;

  // He fan-in initialization for weights and kernels, zero biases, unit
  // gamma and zero beta. Deterministic in `seed`.
  template <typename T>
  ParamSet<T> init_params(std::uint64_t seed) const;

  // batch is [b x input_shape...]; returns logits [b x num_classes].
  template <typename T>
  Tensor<T> forward(const ParamSet<T>& params, const Tensor<T>& batch) const;

  template <typename T>
  int predict(const ParamSet<T>& params, const Tensor<T>& example) const;

  // Loss and gradient of one example at micro-batch size 1.
  template <typename T>
  ExampleGradient per_example_gradient(const ParamSet<T>& params,
                                       const Tensor<T>& example,
                                       int label) const;

 private:
  template <typename T>
  void validate(const ParamSet<T>& params) const;

  ModelSpec spec_;
  std::vector<Shape> shapes_;
  std::vector<std::vector<Shape>> param_shapes_;
  std::size_t dimension_ = 0;
};

template <typename T>
ParamSet<T> build_model(const ModelSpec& spec, std::uint64_t seed) {
  return Model(spec).init_params<T>(seed);
}

template <typename T>
ExampleGradient per_example_gradient(const Model& model,
                                     const ParamSet<T>& params,
                                     const Tensor<T>& example, int label) {
  return model.per_example_gradient(params, example, label);
}

}  // namespace nanodp

#endif  // NANODP_MODEL_H_
