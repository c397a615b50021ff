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

// Per-example DPSGD primitives.
//
// One optimizer step over an effective batch B of |B| examples computes
//
//   g_t = (1/|B|) * sum_j ( clip(grad_j, C) + N(0, sigma^2 C^2 / |B|) )
//
// i.e. every example is clipped and noised on its own (micro-batch size 1)
// and the noised gradients are accumulated. The |B| independent noise draws
// sum to N(0, sigma^2 C^2) per coordinate, the same distribution as noising
// the accumulated sum once. A once-per-batch noise placement is also
// available.

#ifndef NANODP_DP_H_
#define NANODP_DP_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "nanodp/flat_gradient.h"
#include "nanodp/model.h"
#include "nanodp/rng.h"

namespace nanodp {

enum class ClipMode { kGlobal, kPerLayer, kPerStage };
enum class NoisePlacement { kPerExample, kPerBatch };

ClipMode parse_clip_mode(std::string_view name);
const char* clip_mode_name(ClipMode mode);
NoisePlacement parse_noise_placement(std::string_view name);
const char* noise_placement_name(NoisePlacement placement);

struct DpConfig {
  double clip_norm = 1.0;         // C
  double noise_multiplier = 1.0;  // sigma
  ClipMode mode = ClipMode::kGlobal;
  std::size_t num_stages = 1;     // M, per-stage mode only
  std::vector<std::size_t> stage_layers;  // optional explicit stage sizes
  NoisePlacement noise = NoisePlacement::kPerExample;
  std::size_t replicas = 1;
  std::size_t grad_acc = 1;       // accumulation count per replica
  std::uint64_t seed = 0;

  // |B| = replicas x micro-batch (always 1) x grad_acc.
  std::size_t effective_batch() const { return replicas * grad_acc; }

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// g * min(1, C / ||g||). Vectors already within the bound come back
// bit-identical; the output norm never exceeds C, so clipping is idempotent.
FlatGradient clip_global(const FlatGradient& g, double clip_norm);

// Clips each layer slice to C / sqrt(L) independently.
FlatGradient clip_per_layer(const FlatGradient& g, double clip_norm);

// Clips each pipeline-stage slice to C / sqrt(M) independently, with no norm
// shared across stages. Throws ConfigError unless g has exactly M stages.
FlatGradient clip_per_stage(const FlatGradient& g, double clip_norm,
                            std::size_t num_stages);

// Dispatches on cfg.mode.
FlatGradient clip(const FlatGradient& g, const DpConfig& cfg);

// Stream for the noise added to example `example_index` of step `step`.
CounterRng example_noise_stream(std::uint64_t seed, std::uint64_t step,
                                std::uint64_t example_index);
// Stream for the single per-batch draw of step `step`.
CounterRng batch_noise_stream(std::uint64_t seed, std::uint64_t step);

// dim i.i.d. N(0, stddev^2) draws.
std::vector<double> gaussian_noise(std::size_t dim, double stddev,
                                   CounterRng& rng);

// Per-coordinate noise standard deviation sigma * C / sqrt(|B|).
double per_example_noise_stddev(const DpConfig& cfg);

// g + N(0, sigma^2 C^2 / |B|) per coordinate. sigma = 0 returns g unchanged
// without touching the generator.
FlatGradient noise_per_example(const FlatGradient& g_clipped,
                               const DpConfig& cfg, CounterRng& rng);

// Running sum of exactly |B| contributions, divided by |B| on finish().
// Contributions are added in arrival order; callers feed them
// replica-major, then by accumulation step.
class Accumulator {
 public:
  Accumulator(std::size_t dimension, std::size_t effective_batch);

  void add(const FlatGradient& g);
  void add(std::span<const double> values);
  std::size_t count() const { return count_; }
  std::span<const double> sum() const { return sum_; }
  // Throws ProtocolError if count() != |B|.
  FlatGradient finish(std::vector<Extent> layers = {},
                      std::vector<Extent> stages = {}) const;

 private:
  std::vector<double> sum_;
  std::size_t expected_;
  std::size_t count_ = 0;
};

// Convenience over Accumulator for a complete batch.
FlatGradient accumulate(std::span<const FlatGradient> contributions,
                        std::size_t effective_batch);

struct OptimizerState {
  std::vector<double> velocity;
  double momentum = 0.9;
  std::int64_t step = 0;

  OptimizerState() = default;
  OptimizerState(std::size_t dimension, double momentum)
      : velocity(dimension, 0.0), momentum(momentum) {}
};

// v <- mu * v + g;  theta <- theta - lr * v. Validates that g is finite
// before mutating anything; on failure throws NumericError naming the step
// and the offending layer, leaving params and state untouched.
template <typename T>
void sgd_step(ParamSet<T>& params, const FlatGradient& g, double lr,
              OptimizerState& state);

struct LrSchedule {
  double base_lr = 0.01;
  bool scale_by_grad_acc = false;
  std::vector<int> decay_epochs;
  double decay_factor = 0.1;
};

// base_lr (times grad_acc when scaling is on), multiplied by decay_factor
// once for every decay epoch <= epoch. Epochs are 0-based.
double lr_schedule(int epoch, double base_lr, std::size_t grad_acc,
                   std::span<const int> decay_epochs, double decay_factor,
                   bool scaling);
double lr_schedule(int epoch, const LrSchedule& schedule,
                   std::size_t grad_acc);

}  // namespace nanodp

#endif  // NANODP_DP_H_
