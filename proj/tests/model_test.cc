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

#include <cmath>
#include <random>
#include <vector>

#include "gtest/gtest.h"
#include "nanodp/errors.h"
#include "nanodp/model.h"
#include "nanodp/ops.h"
#include "test_util.h"

namespace nanodp {
namespace {

using ::nanodp::testing::random_tensor;
using ::nanodp::testing::relative_error;

TEST(LayerSpecTest, ParsesTokens) {
  const LayerSpec conv = parse_layer_spec("conv2d:8:5:2:1");
  EXPECT_EQ(conv.type, LayerType::kConv2d);
  EXPECT_EQ(conv.units, 8u);
  EXPECT_EQ(conv.kernel, 5u);
  EXPECT_EQ(conv.stride, 2u);
  EXPECT_EQ(conv.padding, 1u);
  EXPECT_EQ(parse_layer_spec("group_norm").groups, 32u);
  EXPECT_EQ(parse_layer_spec("group_norm:4").groups, 4u);
  EXPECT_EQ(parse_layer_spec("avg_pool").window, 2u);
  EXPECT_EQ(parse_layer_spec("linear:10").units, 10u);
  EXPECT_EQ(parse_layer_spec("relu").type, LayerType::kRelu);
  EXPECT_EQ(parse_layer_spec("batch_norm").type, LayerType::kBatchNorm);
}

TEST(LayerSpecTest, RejectsMalformedTokens) {
  for (const char* bad : {"", "linear", "linear:x", "conv2d", "dense:3",
                          "linear:0", "relu:1", "group_norm:0"}) {
    EXPECT_THROW(parse_layer_spec(bad), ConfigError) << bad;
  }
}

TEST(LayerSpecTest, ToStringRoundTrips) {
  for (const char* token : {"conv2d:8:5:2:1", "linear:10", "group_norm:4",
                            "avg_pool:2", "relu", "flatten"}) {
    const LayerSpec a = parse_layer_spec(token);
    const LayerSpec b = parse_layer_spec(a.to_string());
    EXPECT_EQ(a.to_string(), b.to_string());
  }
}

TEST(ModelTest, BatchNormIsRejectedAsPrivacyViolation) {
  const ModelSpec spec =
      parse_model_spec("linear:4, batch_norm, relu, linear:2", {3}, 2);
  try {
    Model model(spec);
    FAIL() << "batch norm accepted";
  } catch (const PrivacyViolationError& e) {
    EXPECT_EQ(e.key(), "model.layers[1]");
  }
}

TEST(ModelTest, RejectsShapeMismatches) {
  EXPECT_THROW(Model(parse_model_spec("linear:4", {3}, 2)), ConfigError);
  EXPECT_THROW(Model(parse_model_spec("conv2d:4, linear:2", {3}, 2)),
               ConfigError);
  EXPECT_THROW(Model(parse_model_spec("linear:2", {1, 4, 4}, 2)), ConfigError);
  EXPECT_THROW(Model(parse_model_spec("linear:1", {3}, 1)), ConfigError);
}

TEST(ModelTest, MlpDimensionMatchesHandCount) {
  const std::vector<std::size_t> hidden{5, 4};
  const Model model(mlp_spec({3}, hidden, 2));
  // (3*5 + 5) + (5*4 + 4) + (4*2 + 2)
  EXPECT_EQ(model.dimension(), 20u + 24u + 10u);
  const auto extents = model.layer_extents();
  ASSERT_EQ(extents.size(), 3u);
  EXPECT_EQ(extents[1].offset, 20u);
  EXPECT_EQ(extents[1].length, 24u);
}

TEST(ModelTest, CnnPresetParameterCount) {
  const Model model(cnn_spec({1, 28, 28}, 10));
  // conv k*k*in*out + out, group norm 2*channels, head 64*7*7*10 + 10.
  const std::size_t expected = (9 * 1 * 16 + 16) + 32 + (9 * 16 * 32 + 32) +
                               64 + (9 * 32 * 64 + 64) + 128 +
                               (9 * 64 * 64 + 64) + 128 + (64 * 7 * 7 * 10 + 10);
  EXPECT_EQ(model.dimension(), expected);
  EXPECT_EQ(model.activation_shapes().back(), (Shape{10}));
}

TEST(ModelTest, InitIsDeterministicAndSeedDependent) {
  const Model model(mlp_spec({4}, std::vector<std::size_t>{8}, 3));
  const auto a = model.init_params<double>(7).flatten();
  const auto b = model.init_params<double>(7).flatten();
  const auto c = model.init_params<double>(8).flatten();
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(ModelTest, HeInitVarianceMatchesFanIn) {
  const std::size_t fan_in = 400;
  const Model model(parse_model_spec("linear:500", {fan_in}, 500));
  const ParamSet<double> p = model.init_params<double>(1);
  const Tensor<double>& w = p.layers[0][0];
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < w.numel(); ++i) sum_sq += w[i] * w[i];
  const double var = sum_sq / w.numel();
  EXPECT_NEAR(var, 2.0 / fan_in, 0.02 * 2.0 / fan_in);
  for (std::size_t i = 0; i < p.layers[0][1].numel(); ++i) {
    EXPECT_EQ(p.layers[0][1][i], 0.0);
  }
}

TEST(ParamSetTest, FlattenAssignRoundTrip) {
  const Model model(cnn_spec({1, 8, 8}, 3));
  ParamSet<double> p = model.init_params<double>(3);
  std::vector<double> flat = p.flatten();
  ASSERT_EQ(flat.size(), model.dimension());
  for (double& v : flat) v += 1.0;
  p.assign(flat);
  EXPECT_EQ(p.flatten(), flat);
  EXPECT_THROW(p.assign(std::vector<double>(3)), DimensionError);
}

// Sum of per-example losses via the batched forward, for finite differences.
double batch_loss(const Model& model, const ParamSet<double>& params,
                  const Tensor<double>& example, int label) {
  Shape shape{1};
  const Shape& in = model.spec().input_shape;
  shape.insert(shape.end(), in.begin(), in.end());
  const Tensor<double> logits = model.forward(params, example.reshape(shape));
  const std::vector<int> labels{label};
  return softmax_cross_entropy(logits, labels).loss;
}

double max_gradient_error(const Model& model, std::uint64_t seed,
                          std::mt19937_64& gen) {
  ParamSet<double> params = model.init_params<double>(seed);
  // Perturb every parameter (including group-norm affine terms and biases) so
  // none sits at a trivial value.
  std::vector<double> flat = params.flatten();
  std::normal_distribution<double> jitter(0.0, 0.1);
  for (double& v : flat) v += jitter(gen);
  params.assign(flat);
  const auto example = random_tensor(gen, model.spec().input_shape);
  const int label = static_cast<int>(gen() % model.spec().num_classes);
  const ExampleGradient eg =
      model.per_example_gradient(params, example, label);
  EXPECT_NEAR(eg.loss, batch_loss(model, params, example, label), 1e-12);

  double worst = 0.0;
  const double h = 1e-5;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    std::vector<double> up = flat, down = flat;
    up[i] += h;
    down[i] -= h;
    params.assign(up);
    const double lu = batch_loss(model, params, example, label);
    params.assign(down);
    const double ld = batch_loss(model, params, example, label);
    const double numeric = (lu - ld) / (2 * h);
    worst = std::fmax(worst, relative_error(eg.grad.values[i], numeric, 1e-3));
  }
  params.assign(flat);
  return worst;
}

TEST(GradientTest, MlpMatchesFiniteDifferences) {
  std::mt19937_64 gen(21);
  const Model model(mlp_spec({6}, std::vector<std::size_t>{7, 5}, 3));
  for (int trial = 0; trial < 5; ++trial) {
    EXPECT_LT(max_gradient_error(model, trial, gen), 1e-5);
  }
}

TEST(GradientTest, CnnWithGroupNormMatchesFiniteDifferences) {
  std::mt19937_64 gen(22);
  const Model model(parse_model_spec(
      "conv2d:4:3:1:1, group_norm:2, relu, avg_pool:2, conv2d:4:3:1:1, "
      "group_norm:2, relu, flatten, linear:3",
      {2, 4, 4}, 3));
  for (int trial = 0; trial < 3; ++trial) {
    EXPECT_LT(max_gradient_error(model, trial, gen), 1e-5);
  }
}

TEST(GradientTest, GradientCarriesLayerExtents) {
  const Model model(mlp_spec({3}, std::vector<std::size_t>{4}, 2));
  const auto params = model.init_params<double>(0);
  const auto eg =
      model.per_example_gradient(params, Tensor<double>({3}, 0.5), 1);
  ASSERT_EQ(eg.grad.layers.size(), 2u);
  EXPECT_EQ(eg.grad.layers[0].length + eg.grad.layers[1].length,
            eg.grad.dimension());
}

TEST(GradientTest, RejectsBadInputs) {
  const Model model(mlp_spec({3}, std::vector<std::size_t>{4}, 2));
  const auto params = model.init_params<double>(0);
  EXPECT_THROW(model.per_example_gradient(params, Tensor<double>({4}), 0),
               InputError);
  EXPECT_THROW(model.per_example_gradient(params, Tensor<double>({3}), 2),
               InputError);
}

TEST(GroupNormIsolationTest, PerturbingOneSampleLeavesOthersUntouched) {
  std::mt19937_64 gen(23);
  const Model model(parse_model_spec(
      "conv2d:4:3:1:1, group_norm:2, relu, flatten, linear:3", {1, 4, 4}, 3));
  const auto params = model.init_params<double>(5);
  auto batch = random_tensor(gen, {4, 1, 4, 4});
  const auto before = model.forward(params, batch);
  for (std::size_t i = 0; i < 16; ++i) batch[16 * 2 + i] += 10.0;
  const auto after = model.forward(params, batch);
  for (std::size_t b = 0; b < 4; ++b) {
    for (std::size_t k = 0; k < 3; ++k) {
      if (b == 2) continue;
      EXPECT_EQ(before[b * 3 + k], after[b * 3 + k]);
    }
  }
}

TEST(FloatModelTest, SinglePrecisionGradientTracksDouble) {
  const Model model(mlp_spec({4}, std::vector<std::size_t>{6}, 3));
  const auto pd = model.init_params<double>(2);
  const auto pf = model.init_params<float>(2);
  Tensor<double> x({4}, std::vector<double>{0.1, -0.3, 0.7, 0.2});
  const auto gd = model.per_example_gradient(pd, x, 1);
  const auto gf = model.per_example_gradient(pf, x.cast<float>(), 1);
  ASSERT_EQ(gd.grad.dimension(), gf.grad.dimension());
  for (std::size_t i = 0; i < gd.grad.dimension(); ++i) {
    EXPECT_NEAR(gd.grad.values[i], gf.grad.values[i], 1e-5);
  }
}

}  // namespace
}  // namespace nanodp
