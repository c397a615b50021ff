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

#include "nanodp/model.h"

#include <charconv>
#include <cmath>

#include "nanodp/rng.h"

namespace nanodp {
namespace {

std::vector<std::string_view> split_fields(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::size_t parse_count(std::string_view token, std::string_view field,
                        bool allow_zero = false) {
  std::size_t value = 0;
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end || (!allow_zero && value == 0)) {
    throw ConfigError("model.layers", "bad field '" + std::string(field) +
                                          "' in layer '" + std::string(token) +
                                          "'");
  }
  return value;
}

std::string layer_key(std::size_t index) {
  return "model.layers[" + std::to_string(index) + "]";
}

}  // namespace

std::string LayerSpec::to_string() const {
  switch (type) {
    case LayerType::kLinear: return "linear:" + std::to_string(units);
    case LayerType::kConv2d:
      return "conv2d:" + std::to_string(units) + ":" + std::to_string(kernel) +
             ":" + std::to_string(stride) + ":" + std::to_string(padding);
    case LayerType::kGroupNorm: return "group_norm:" + std::to_string(groups);
    case LayerType::kRelu: return "relu";
    case LayerType::kAvgPool: return "avg_pool:" + std::to_string(window);
    case LayerType::kFlatten: return "flatten";
    case LayerType::kBatchNorm: return "batch_norm";
  }
  return "?";
}

LayerSpec parse_layer_spec(std::string_view token) {
  const auto fields = split_fields(token, ':');
  const std::string_view name = fields[0];
  LayerSpec spec;
  auto max_fields = [&](std::size_t n) {
    if (fields.size() > n) {
      throw ConfigError("model.layers",
                        "too many fields in layer '" + std::string(token) + "'");
    }
  };
  if (name == "linear") {
    max_fields(2);
    if (fields.size() < 2) {
      throw ConfigError("model.layers", "linear needs an output width");
    }
    spec.type = LayerType::kLinear;
    spec.units = parse_count(token, fields[1]);
  } else if (name == "conv2d") {
    max_fields(5);
    if (fields.size() < 2) {
      throw ConfigError("model.layers", "conv2d needs an output channel count");
    }
    spec.type = LayerType::kConv2d;
    spec.units = parse_count(token, fields[1]);
    if (fields.size() > 2) spec.kernel = parse_count(token, fields[2]);
    if (fields.size() > 3) spec.stride = parse_count(token, fields[3]);
    if (fields.size() > 4) spec.padding = parse_count(token, fields[4], true);
  } else if (name == "group_norm") {
    max_fields(2);
    spec.type = LayerType::kGroupNorm;
    if (fields.size() > 1) spec.groups = parse_count(token, fields[1]);
  } else if (name == "avg_pool") {
    max_fields(2);
    spec.type = LayerType::kAvgPool;
    if (fields.size() > 1) spec.window = parse_count(token, fields[1]);
  } else if (name == "relu") {
    max_fields(1);
    spec.type = LayerType::kRelu;
  } else if (name == "flatten") {
    max_fields(1);
    spec.type = LayerType::kFlatten;
  } else if (name == "batch_norm") {
    spec.type = LayerType::kBatchNorm;
  } else {
    throw ConfigError("model.layers",
                      "unknown layer type '" + std::string(name) + "'");
  }
  return spec;
}

ModelSpec parse_model_spec(std::string_view layers, Shape input_shape,
                           std::size_t num_classes) {
  ModelSpec spec{{}, std::move(input_shape), num_classes};
  std::size_t i = 0;
  while (i < layers.size()) {
    const std::size_t end = layers.find_first_of(", \t\n", i);
    const std::string_view token = layers.substr(i, end - i);
    if (!token.empty()) spec.layers.push_back(parse_layer_spec(token));
    if (end == std::string_view::npos) break;
    i = end + 1;
  }
  if (spec.layers.empty()) throw ConfigError("model.layers", "no layers given");
  return spec;
}

ModelSpec mlp_spec(Shape input_shape, std::span<const std::size_t> hidden,
                   std::size_t num_classes) {
  ModelSpec spec{{}, std::move(input_shape), num_classes};
  if (spec.input_shape.size() != 1) {
    spec.layers.push_back({.type = LayerType::kFlatten});
  }
  for (std::size_t width : hidden) {
    spec.layers.push_back({.type = LayerType::kLinear, .units = width});
    spec.layers.push_back({.type = LayerType::kRelu});
  }
  spec.layers.push_back({.type = LayerType::kLinear, .units = num_classes});
  return spec;
}

ModelSpec cnn_spec(Shape input_shape, std::size_t num_classes) {
  ModelSpec spec{{}, std::move(input_shape), num_classes};
  const std::size_t widths[] = {16, 32, 64, 64};
  for (std::size_t block = 0; block < 4; ++block) {
    spec.layers.push_back({.type = LayerType::kConv2d,
                           .units = widths[block],
                           .kernel = 3,
                           .stride = 1,
                           .padding = 1});
    spec.layers.push_back({.type = LayerType::kGroupNorm, .groups = 8});
    spec.layers.push_back({.type = LayerType::kRelu});
    if (block == 1 || block == 3) {
      spec.layers.push_back({.type = LayerType::kAvgPool, .window = 2});
    }
  }
  spec.layers.push_back({.type = LayerType::kFlatten});
  spec.layers.push_back({.type = LayerType::kLinear, .units = num_classes});
  return spec;
}

template <typename T>
std::size_t ParamSet<T>::dimension() const {
  std::size_t d = 0;
  for (const auto& layer : layers) {
    for (const auto& t : layer) d += t.numel();
  }
  return d;
}

template <typename T>
std::vector<Extent> ParamSet<T>::layer_extents() const {
  std::vector<Extent> extents;
  std::size_t offset = 0;
  for (const auto& layer : layers) {
    std::size_t n = 0;
    for (const auto& t : layer) n += t.numel();
    if (n == 0) continue;
    extents.push_back({offset, n});
    offset += n;
  }
  return extents;
}

template <typename T>
std::vector<double> ParamSet<T>::flatten() const {
  std::vector<double> flat;
  flat.reserve(dimension());
  for (const auto& layer : layers) {
    for (const auto& t : layer) flat.insert(flat.end(), t.data(), t.data() + t.numel());
  }
  return flat;
}

template <typename T>
void ParamSet<T>::assign(std::span<const double> flat) {
  if (flat.size() != dimension()) {
    throw DimensionError("ParamSet::assign: " + std::to_string(flat.size()) +
                         " values for dimension " +
                         std::to_string(dimension()));
  }
  std::size_t k = 0;
  for (auto& layer : layers) {
    for (auto& t : layer) {
      for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(flat[k++]);
    }
  }
}

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
  if (spec_.num_classes < 2) {
    throw ConfigError("model.classes", "need at least 2 classes");
  }
  try {
    shape_numel(spec_.input_shape);
  } catch (const DimensionError& e) {
    throw ConfigError("model.input_shape", e.what());
  }
  shapes_.push_back(spec_.input_shape);
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& layer = spec_.layers[i];
    const Shape& in = shapes_.back();
    const std::string key = layer_key(i);
    Shape out;
    std::vector<Shape> params;
    switch (layer.type) {
      case LayerType::kBatchNorm:
        throw PrivacyViolationError(
            key, "batch_norm mixes statistics across the examples of a "
                 "batch, which breaks per-example privacy; use group_norm");
      case LayerType::kLinear:
        if (in.size() != 1) {
          throw ConfigError(key, "linear needs a rank-1 input, got " +
                                     shape_to_string(in) + " (add flatten)");
        }
        out = {layer.units};
        params = {{in[0], layer.units}, {layer.units}};
        break;
      case LayerType::kConv2d: {
        if (in.size() != 3) {
          throw ConfigError(key, "conv2d needs a [c x h x w] input, got " +
                                     shape_to_string(in));
        }
        std::size_t oh, ow;
        try {
          oh = conv_output_extent(in[1], layer.kernel, layer.stride,
                                  layer.padding);
          ow = conv_output_extent(in[2], layer.kernel, layer.stride,
                                  layer.padding);
        } catch (const ConfigError& e) {
          throw ConfigError(key, e.what());
        }
        out = {layer.units, oh, ow};
        params = {{layer.units, in[0], layer.kernel, layer.kernel},
                  {layer.units}};
        break;
      }
      case LayerType::kGroupNorm:
        if (in[0] % layer.groups != 0) {
          throw ConfigError(key, std::to_string(in[0]) +
                                     " channels are not divisible into " +
                                     std::to_string(layer.groups) + " groups");
        }
        if (!(layer.eps > 0.0)) throw ConfigError(key, "eps must be > 0");
        out = in;
        params = {{in[0]}, {in[0]}};
        break;
      case LayerType::kRelu:
        out = in;
        break;
      case LayerType::kAvgPool:
        if (in.size() != 3 || in[1] % layer.window != 0 ||
            in[2] % layer.window != 0) {
          throw ConfigError(key, "avg_pool:" + std::to_string(layer.window) +
                                     " does not tile " + shape_to_string(in));
        }
        out = {in[0], in[1] / layer.window, in[2] / layer.window};
        break;
      case LayerType::kFlatten:
        out = {shape_numel(in)};
        break;
    }
    for (const Shape& p : params) dimension_ += shape_numel(p);
    shapes_.push_back(std::move(out));
    param_shapes_.push_back(std::move(params));
  }
  if (shapes_.back() != Shape{spec_.num_classes}) {
    throw ConfigError("model.layers",
                      "final output " + shape_to_string(shapes_.back()) +
                          " does not match " +
                          std::to_string(spec_.num_classes) + " classes");
  }
}

std::vector<Extent> Model::layer_extents() const {
  std::vector<Extent> extents;
  std::size_t offset = 0;
  for (const auto& params : param_shapes_) {
    std::size_t n = 0;
    for (const Shape& p : params) n += shape_numel(p);
    if (n == 0) continue;
    extents.push_back({offset, n});
    offset += n;
  }
  return extents;
}

template <typename T>
ParamSet<T> Model::init_params(std::uint64_t seed) const {
  ParamSet<T> ps;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& layer = spec_.layers[i];
    std::vector<Tensor<T>> tensors;
    for (const Shape& s : param_shapes_[i]) tensors.emplace_back(s);
    if (layer.type == LayerType::kLinear || layer.type == LayerType::kConv2d) {
      const Shape& w = param_shapes_[i][0];
      const std::size_t fan_in = layer.type == LayerType::kLinear
                                     ? w[0]
                                     : w[1] * w[2] * w[3];
      const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
      CounterRng rng(seed, RngDomain::kInit, {i});
      for (std::size_t k = 0; k < tensors[0].numel(); ++k) {
        tensors[0][k] = static_cast<T>(stddev * rng.next_gaussian());
      }
    } else if (layer.type == LayerType::kGroupNorm) {
      for (std::size_t k = 0; k < tensors[0].numel(); ++k) tensors[0][k] = T{1};
    }
    ps.layers.push_back(std::move(tensors));
  }
  return ps;
}

template <typename T>
void Model::validate(const ParamSet<T>& params) const {
  if (params.layers.size() != param_shapes_.size()) {
    throw DimensionError("parameter set has " +
                         std::to_string(params.layers.size()) +
                         " layers, model has " +
                         std::to_string(param_shapes_.size()));
  }
  for (std::size_t i = 0; i < param_shapes_.size(); ++i) {
    if (params.layers[i].size() != param_shapes_[i].size()) {
      throw DimensionError("parameter count mismatch at " + layer_key(i));
    }
    for (std::size_t k = 0; k < param_shapes_[i].size(); ++k) {
      if (params.layers[i][k].shape() != param_shapes_[i][k]) {
        throw DimensionError("parameter " + shape_to_string(
                                 params.layers[i][k].shape()) +
                             " at " + layer_key(i) + " expected " +
                             shape_to_string(param_shapes_[i][k]));
      }
    }
  }
}

namespace {

template <typename T>
ForwardResult<T> apply_layer(const LayerSpec& layer,
                             const std::vector<Tensor<T>>& params,
                             const Tensor<T>& x) {
  switch (layer.type) {
    case LayerType::kLinear: return linear_forward(x, params[0], params[1]);
    case LayerType::kConv2d:
      return conv2d_forward(x, params[0], params[1], layer.stride,
                            layer.padding);
    case LayerType::kGroupNorm:
      return group_norm_forward(x, layer.groups, params[0], params[1],
                                layer.eps);
    case LayerType::kRelu: return relu_forward(x);
    case LayerType::kAvgPool: return avg_pool_forward(x, layer.window);
    case LayerType::kFlatten: return flatten_forward(x);
    case LayerType::kBatchNorm: break;
  }
  throw InternalError("apply_layer: unsupported layer");
}

Shape with_batch(std::size_t batch, const Shape& shape) {
  Shape out{batch};
  out.insert(out.end(), shape.begin(), shape.end());
  return out;
}

}  // namespace

template <typename T>
Tensor<T> Model::forward(const ParamSet<T>& params,
                         const Tensor<T>& batch) const {
  validate(params);
  if (batch.rank() != shapes_[0].size() + 1 ||
      !std::equal(shapes_[0].begin(), shapes_[0].end(),
                  batch.shape().begin() + 1)) {
    throw InputError("batch " + shape_to_string(batch.shape()) +
                     " does not match model input " +
                     shape_to_string(shapes_[0]));
  }
  Tensor<T> x = batch;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    x = apply_layer(spec_.layers[i], params.layers[i], x).output;
  }
  return x;
}

template <typename T>
int Model::predict(const ParamSet<T>& params, const Tensor<T>& example) const {
  const Tensor<T> logits =
      forward(params, example.reshape(with_batch(1, example.shape())));
  int best = 0;
  for (std::size_t k = 1; k < logits.numel(); ++k) {
    if (logits[k] > logits[static_cast<std::size_t>(best)]) {
      best = static_cast<int>(k);
    }
  }
  return best;
}

template <typename T>
ExampleGradient Model::per_example_gradient(const ParamSet<T>& params,
                                            const Tensor<T>& example,
                                            int label) const {
  validate(params);
  if (example.shape() != shapes_[0]) {
    throw InputError("example " + shape_to_string(example.shape()) +
                     " does not match model input " +
                     shape_to_string(shapes_[0]));
  }
  if (label < 0 || static_cast<std::size_t>(label) >= spec_.num_classes) {
    throw InputError("label " + std::to_string(label) + " out of range [0, " +
                     std::to_string(spec_.num_classes) + ")");
  }
  const std::size_t n = spec_.layers.size();
  std::vector<LayerTape<T>> tapes;
  tapes.reserve(n);
  Tensor<T> x = example.reshape(with_batch(1, example.shape()));
  for (std::size_t i = 0; i < n; ++i) {
    auto step = apply_layer(spec_.layers[i], params.layers[i], x);
    x = std::move(step.output);
    tapes.push_back(std::move(step.tape));
  }
  const int labels[] = {label};
  LossResult<T> loss = softmax_cross_entropy(x, std::span<const int>(labels));

  std::vector<std::vector<Tensor<T>>> grads(n);
  Tensor<T> upstream = std::move(loss.logit_grad);
  for (std::size_t i = n; i-- > 0;) {
    LayerGrads<T> g = backward_layer(tapes[i], upstream);
    upstream = std::move(g.input_grad);
    grads[i] = std::move(g.param_grads);
  }

  ExampleGradient out;
  out.loss = loss.loss;
  out.grad.values.reserve(dimension_);
  for (const auto& layer : grads) {
    for (const auto& t : layer) {
      out.grad.values.insert(out.grad.values.end(), t.data(), t.data() + t.numel());
    }
  }
  out.grad.layers = layer_extents();
  return out;
}

template struct ParamSet<float>;
template struct ParamSet<double>;

#define NANODP_INSTANTIATE_MODEL(T)                                          \
  template ParamSet<T> Model::init_params<T>(std::uint64_t) const;           \
  template Tensor<T> Model::forward<T>(const ParamSet<T>&, const Tensor<T>&) \
      const;                                                                 \
  template int Model::predict<T>(const ParamSet<T>&, const Tensor<T>&)       \
      const;                                                                 \
  template ExampleGradient Model::per_example_gradient<T>(                   \
      const ParamSet<T>&, const Tensor<T>&, int) const;

NANODP_INSTANTIATE_MODEL(float)
NANODP_INSTANTIATE_MODEL(double)

#undef NANODP_INSTANTIATE_MODEL

}  // namespace nanodp
