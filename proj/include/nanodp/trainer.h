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

#ifndef NANODP_TRAINER_H_
#define NANODP_TRAINER_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "nanodp/data.h"
#include "nanodp/dp.h"
#include "nanodp/metrics.h"
#include "nanodp/model.h"

namespace nanodp {

struct TrainConfig {
  DpConfig dp;
  // false trains plain mini-batch SGD: no clipping, no noise, no accounting.
  // Gradients still flow through the same per-example path and the same
  // accumulation order, so sigma = 0 with a non-binding C reproduces it
  // bit for bit.
  bool private_training = true;
  LrSchedule lr;
  double momentum = 0.9;
  int epochs = 1;
  double delta = 1e-5;
  // Threads computing per-example gradients. Results never depend on it.
  std::size_t workers = 1;
  // Drives initialization, shuffling and noise (each in its own stream).
  std::uint64_t seed = 0;

  void validate() const;
};

// Returns the privacy spent after the step that just completed.
using AccountantHook = std::function<double()>;
using MetricsHook = std::function<void(const RunRecord&)>;

// Fraction of `data` classified correctly.
template <typename T>
double accuracy(const Model& model, const ParamSet<T>& params,
                const Dataset& data);

// One pass over floor(N / |B|) shuffled effective batches. Each step runs
// per-example gradient -> clip -> noise -> accumulate -> sgd_step, then
// calls `account` and `metrics` once. The last step of the epoch carries
// the held-out accuracy on `eval` when one is given. If a step throws, the
// parameters hold the result of the last completed step.
template <typename T>
std::vector<RunRecord> train_epoch(const Model& model, ParamSet<T>& params,
                                   OptimizerState& optimizer,
                                   const Dataset& data, const Dataset* eval,
                                   const TrainConfig& config, int epoch,
                                   const AccountantHook& account,
                                   const MetricsHook& metrics);

template <typename T>
struct TrainResult {
  ParamSet<T> params;
  std::vector<RunRecord> records;
  double initial_accuracy = 0.0;
  double final_accuracy = 0.0;
  double final_epsilon = 0.0;
};

// Initializes parameters from config.seed and runs config.epochs epochs with
// a privacy ledger at q = |B| / N. Accuracy is measured on `eval` (or the
// training data when eval is null). Non-private runs report epsilon = inf
// once any step has been taken.
template <typename T>
TrainResult<T> train(const Model& model, const Dataset& data,
                     const Dataset* eval, const TrainConfig& config,
                     const MetricsHook& metrics = {});

}  // namespace nanodp

#endif  // NANODP_TRAINER_H_
