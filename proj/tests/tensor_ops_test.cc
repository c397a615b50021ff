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
#include <functional>
#include <random>
#include <vector>

#include "gtest/gtest.h"
#include "nanodp/errors.h"
#include "nanodp/ops.h"
#include "nanodp/tensor.h"
#include "test_util.h"

namespace nanodp {
namespace {

using ::nanodp::testing::central_difference;
using ::nanodp::testing::random_tensor;
using ::nanodp::testing::relative_error;

TEST(ShapeTest, NumelAndFormatting) {
  EXPECT_EQ(shape_numel({2, 3, 4}), 24u);
  EXPECT_EQ(shape_to_string({2, 3}), "[2x3]");
  EXPECT_THROW(shape_numel({}), DimensionError);
  EXPECT_THROW(shape_numel({3, 0}), DimensionError);
}

TEST(TensorTest, ConstructionReshapeAndCast) {
  Tensor<double> t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t.dim(1), 3u);
  Tensor<double> r = t.reshape({3, 2});
  EXPECT_EQ(r.shape(), (Shape{3, 2}));
  EXPECT_EQ(r[5], 6.0);
  EXPECT_THROW(t.reshape({4, 2}), DimensionError);
  EXPECT_THROW(Tensor<double>({2, 2}, std::vector<double>{1, 2, 3}),
               DimensionError);
  Tensor<float> f = t.cast<float>();
  EXPECT_EQ(f[4], 5.0f);
}

TEST(TensorTest, BitIdenticalDistinguishesSignedZero) {
  Tensor<double> a({2}, std::vector<double>{0.0, 1.0});
  Tensor<double> b({2}, std::vector<double>{-0.0, 1.0});
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(bit_identical(a, b));
  EXPECT_TRUE(bit_identical(a, a));
}

TEST(MatmulTest, MatchesTripleLoop) {
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + gen() % 7, k = 1 + gen() % 9, n = 1 + gen() % 5;
    const auto a = random_tensor(gen, {m, k});
    const auto b = random_tensor(gen, {k, n});
    const auto c = matmul(a, b);
    ASSERT_EQ(c.shape(), (Shape{m, n}));
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double expected = 0.0;
        for (std::size_t p = 0; p < k; ++p) {
          expected += a[i * k + p] * b[p * n + j];
        }
        EXPECT_NEAR(c[i * n + j], expected, 1e-12);
      }
    }
  }
}

TEST(MatmulTest, RejectsMismatchedInnerDimension) {
  EXPECT_THROW(matmul(Tensor<double>({2, 3}), Tensor<double>({2, 3})),
               DimensionError);
}

TEST(MatmulTest, TransposeSwapsIndices) {
  std::mt19937_64 gen(2);
  const auto a = random_tensor(gen, {3, 4});
  const auto t = transpose(a);
  ASSERT_EQ(t.shape(), (Shape{4, 3}));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(t[j * 3 + i], a[i * 4 + j]);
  }
}

TEST(ConvTest, OutputExtentArithmetic) {
  EXPECT_EQ(conv_output_extent(28, 3, 1, 1), 28u);
  EXPECT_EQ(conv_output_extent(5, 3, 2, 0), 2u);
  EXPECT_EQ(conv_output_extent(3, 3, 1, 0), 1u);
  EXPECT_THROW(conv_output_extent(6, 3, 2, 0), ConfigError);
  EXPECT_THROW(conv_output_extent(2, 3, 1, 0), ConfigError);
}

// Direct definition: out[o][y][x] = sum_c sum_i sum_j in[c][y*s+i-p][x*s+j-p]
// * k[o][c][i][j], with out-of-range input reads as zero.
double naive_conv_at(const Tensor<double>& in, const Tensor<double>& k,
                     std::size_t o, std::size_t y, std::size_t x,
                     std::size_t stride, std::size_t pad) {
  const long h = static_cast<long>(in.dim(1)), w = static_cast<long>(in.dim(2));
  double acc = 0.0;
  for (std::size_t c = 0; c < in.dim(0); ++c) {
    for (std::size_t i = 0; i < k.dim(2); ++i) {
      for (std::size_t j = 0; j < k.dim(3); ++j) {
        const long iy = static_cast<long>(y * stride + i) - static_cast<long>(pad);
        const long ix = static_cast<long>(x * stride + j) - static_cast<long>(pad);
        if (iy < 0 || ix < 0 || iy >= h || ix >= w) continue;
        acc += in[(c * in.dim(1) + iy) * in.dim(2) + ix] *
               k[((o * k.dim(1) + c) * k.dim(2) + i) * k.dim(3) + j];
      }
    }
  }
  return acc;
}

TEST(ConvTest, MatchesDirectDefinition) {
  std::mt19937_64 gen(3);
  struct Case { std::size_t c, h, w, o, k, s, p; };
  for (const Case& cs : {Case{1, 5, 5, 2, 3, 1, 0}, Case{2, 6, 4, 3, 3, 1, 1},
                         Case{3, 7, 7, 2, 3, 2, 1}, Case{2, 4, 4, 1, 1, 1, 0}}) {
    const auto in = random_tensor(gen, {cs.c, cs.h, cs.w});
    const auto k = random_tensor(gen, {cs.o, cs.c, cs.k, cs.k});
    const auto out = conv2d(in, k, cs.s, cs.p);
    const std::size_t oh = out.dim(1), ow = out.dim(2);
    for (std::size_t o = 0; o < cs.o; ++o) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          EXPECT_NEAR(out[(o * oh + y) * ow + x],
                      naive_conv_at(in, k, o, y, x, cs.s, cs.p), 1e-12);
        }
      }
    }
  }
}

TEST(ConvTest, BatchedForwardAddsBiasPerChannel) {
  std::mt19937_64 gen(4);
  const auto x = random_tensor(gen, {2, 2, 5, 5});
  const auto k = random_tensor(gen, {3, 2, 3, 3});
  const auto bias = random_tensor(gen, {3});
  const auto fr = conv2d_forward(x, k, bias, 1, 1);
  ASSERT_EQ(fr.output.shape(), (Shape{2, 3, 5, 5}));
  for (std::size_t b = 0; b < 2; ++b) {
    Tensor<double> sample({2, 5, 5});
    for (std::size_t i = 0; i < 50; ++i) sample[i] = x[b * 50 + i];
    const auto single = conv2d(sample, k, 1, 1);
    for (std::size_t i = 0; i < 75; ++i) {
      EXPECT_NEAR(fr.output[b * 75 + i], single[i] + bias[i / 25], 1e-12);
    }
  }
}

TEST(GroupNormTest, MatchesDirectStatistics) {
  std::mt19937_64 gen(5);
  const std::size_t batch = 3, channels = 6, groups = 3, hw = 4;
  const double eps = 1e-5;
  const auto x = random_tensor(gen, {batch, channels, 2, 2}, 3.0);
  const auto gamma = random_tensor(gen, {channels});
  const auto beta = random_tensor(gen, {channels});
  const auto fr = group_norm_forward(x, groups, gamma, beta, eps);
  const std::size_t per = channels / groups;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t g = 0; g < groups; ++g) {
      // Two-pass statistics over the group's per * hw values.
      std::vector<double> vals;
      for (std::size_t c = g * per; c < (g + 1) * per; ++c) {
        for (std::size_t s = 0; s < hw; ++s) {
          vals.push_back(x[(b * channels + c) * hw + s]);
        }
      }
      double mean = 0.0;
      for (double v : vals) mean += v;
      mean /= vals.size();
      double var = 0.0;
      for (double v : vals) var += (v - mean) * (v - mean);
      var /= vals.size();
      for (std::size_t c = g * per; c < (g + 1) * per; ++c) {
        for (std::size_t s = 0; s < hw; ++s) {
          const std::size_t idx = (b * channels + c) * hw + s;
          const double expected =
              (x[idx] - mean) / std::sqrt(var + eps) * gamma[c] + beta[c];
          EXPECT_NEAR(fr.output[idx], expected, 1e-12);
        }
      }
    }
  }
}

TEST(GroupNormTest, RejectsIndivisibleChannels) {
  Tensor<double> x({1, 6, 2, 2});
  Tensor<double> g({6}, 1.0), b({6});
  EXPECT_THROW(group_norm_forward(x, 4, g, b), ConfigError);
  EXPECT_THROW(group_norm_forward(x, 0, g, b), ConfigError);
}

TEST(PoolTest, AveragesWindows) {
  Tensor<double> x({1, 1, 2, 4},
                   std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
  const auto fr = avg_pool_forward(x, 2);
  ASSERT_EQ(fr.output.shape(), (Shape{1, 1, 1, 2}));
  EXPECT_DOUBLE_EQ(fr.output[0], (1 + 2 + 5 + 6) / 4.0);
  EXPECT_DOUBLE_EQ(fr.output[1], (3 + 4 + 7 + 8) / 4.0);
  EXPECT_THROW(avg_pool_forward(Tensor<double>({1, 1, 3, 4}), 2), ConfigError);
}

TEST(ReluTest, ZeroesNegatives) {
  Tensor<double> x({1, 4}, std::vector<double>{-1, 0, 2, -3});
  const auto fr = relu_forward(x);
  EXPECT_EQ(fr.output.storage(), (std::vector<double>{0, 0, 2, 0}));
}

// L(out) = sum(out * r) for a fixed random r, so the upstream gradient is r.
double weighted_sum(const Tensor<double>& out, const Tensor<double>& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.numel(); ++i) s += out[i] * r[i];
  return s;
}

void expect_gradients_match(
    const std::function<ForwardResult<double>()>& forward,
    std::vector<Tensor<double>*> inputs, std::mt19937_64& gen) {
  ForwardResult<double> fr = forward();
  const auto r = random_tensor(gen, fr.output.shape());
  LayerGrads<double> grads = backward_layer(fr.tape, r);
  auto loss = [&] { return weighted_sum(forward().output, r); };
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    const Tensor<double>& analytic =
        t == 0 ? grads.input_grad : grads.param_grads[t - 1];
    ASSERT_EQ(analytic.shape(), inputs[t]->shape());
    for (std::size_t i = 0; i < inputs[t]->numel(); ++i) {
      const double numeric = central_difference(loss, (*inputs[t])[i], 1e-6);
      EXPECT_LT(relative_error(analytic[i], numeric, 1e-4), 1e-5)
          << "tensor " << t << " index " << i << ": " << analytic[i] << " vs "
          << numeric;
    }
  }
}

TEST(BackwardTest, LinearMatchesFiniteDifferences) {
  std::mt19937_64 gen(6);
  auto x = random_tensor(gen, {3, 4});
  auto w = random_tensor(gen, {4, 2});
  auto b = random_tensor(gen, {2});
  expect_gradients_match([&] { return linear_forward(x, w, b); },
                         {&x, &w, &b}, gen);
}

TEST(BackwardTest, ConvMatchesFiniteDifferences) {
  std::mt19937_64 gen(7);
  auto x = random_tensor(gen, {2, 2, 5, 5});
  auto k = random_tensor(gen, {3, 2, 3, 3});
  auto b = random_tensor(gen, {3});
  expect_gradients_match([&] { return conv2d_forward(x, k, b, 2, 1); },
                         {&x, &k, &b}, gen);
}

TEST(BackwardTest, GroupNormMatchesFiniteDifferences) {
  std::mt19937_64 gen(8);
  auto x = random_tensor(gen, {2, 4, 3, 3});
  auto gamma = random_tensor(gen, {4});
  auto beta = random_tensor(gen, {4});
  expect_gradients_match([&] { return group_norm_forward(x, 2, gamma, beta); },
                         {&x, &gamma, &beta}, gen);
}

TEST(BackwardTest, PoolReluFlattenMatchFiniteDifferences) {
  std::mt19937_64 gen(9);
  auto x = random_tensor(gen, {2, 2, 4, 4});
  expect_gradients_match([&] { return avg_pool_forward(x, 2); }, {&x}, gen);
  expect_gradients_match([&] { return relu_forward(x); }, {&x}, gen);
  expect_gradients_match([&] { return flatten_forward(x); }, {&x}, gen);
}

TEST(BackwardTest, TapeIsSingleUse) {
  Tensor<double> x({1, 2}), w({2, 2}), b({2});
  auto fr = linear_forward(x, w, b);
  backward_layer(fr.tape, Tensor<double>({1, 2}));
  EXPECT_FALSE(fr.tape.armed());
  EXPECT_THROW(backward_layer(fr.tape, Tensor<double>({1, 2})), InternalError);
}

TEST(BackwardTest, RejectsUpstreamOfWrongShape) {
  Tensor<double> x({1, 2}), w({2, 2}), b({2});
  auto fr = linear_forward(x, w, b);
  EXPECT_THROW(backward_layer(fr.tape, Tensor<double>({1, 3})), InternalError);
}

TEST(LossTest, UniformLogitsGiveLogK) {
  Tensor<double> logits({2, 4});
  const std::vector<int> labels{1, 3};
  const auto r = softmax_cross_entropy(logits, labels);
  EXPECT_NEAR(r.loss, std::log(4.0), 1e-15);
  // (softmax - onehot) / batch.
  EXPECT_NEAR(r.logit_grad[0], 0.25 / 2, 1e-15);
  EXPECT_NEAR(r.logit_grad[1], (0.25 - 1) / 2, 1e-15);
}

TEST(LossTest, StableForHugeLogits) {
  Tensor<double> logits({1, 2}, std::vector<double>{1000.0, 0.0});
  const std::vector<int> labels{1};
  const auto r = softmax_cross_entropy(logits, labels);
  EXPECT_NEAR(r.loss, 1000.0, 1e-9);
  EXPECT_TRUE(std::isfinite(r.logit_grad[0]));
}

TEST(LossTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(10);
  auto logits = random_tensor(gen, {3, 5});
  const std::vector<int> labels{0, 4, 2};
  const auto r = softmax_cross_entropy(logits, labels);
  auto loss = [&] { return softmax_cross_entropy(logits, labels).loss; };
  for (std::size_t i = 0; i < logits.numel(); ++i) {
    const double numeric = central_difference(loss, logits[i], 1e-6);
    EXPECT_LT(relative_error(r.logit_grad[i], numeric, 1e-4), 1e-6);
  }
}

TEST(LossTest, RejectsBadLabels) {
  Tensor<double> logits({1, 3});
  const std::vector<int> negative{-1}, too_big{3}, wrong_count{0, 1};
  EXPECT_THROW(softmax_cross_entropy(logits, negative), InputError);
  EXPECT_THROW(softmax_cross_entropy(logits, too_big), InputError);
  EXPECT_THROW(softmax_cross_entropy(logits, wrong_count), DimensionError);
}

TEST(FloatTest, SinglePrecisionTracksDouble) {
  std::mt19937_64 gen(11);
  const auto x = random_tensor(gen, {2, 3});
  const auto w = random_tensor(gen, {3, 2});
  const auto b = random_tensor(gen, {2});
  const auto wf = w.cast<float>();
  const auto bf = b.cast<float>();
  const auto yf = linear_forward(x.cast<float>(), wf, bf).output;
  const auto yd = linear_forward(x, w, b).output;
  for (std::size_t i = 0; i < yd.numel(); ++i) EXPECT_NEAR(yf[i], yd[i], 1e-5);
}

}  // namespace
}  // namespace nanodp
