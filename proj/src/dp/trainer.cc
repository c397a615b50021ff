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

#include "nanodp/trainer.h"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <string>
#include <thread>

#include "nanodp/accountant.h"
#include "nanodp/errors.h"

namespace nanodp {
namespace {

// Examples processed per parallel wave. Bounds the memory held in flight to
// kWave gradients regardless of |B|.
constexpr std::size_t kWave = 64;
constexpr std::size_t kEvalChunk = 256;

struct Contribution {
  double loss = 0.0;
  std::vector<double> clipped;
  std::vector<double> noise;  // empty unless per-example noise is on
};

struct StepPlan {
  const Model* model;
  const Dataset* data;
  const TrainConfig* config;
  std::vector<Extent> stages;
  std::uint64_t step;
};

template <typename T>
Contribution contribute(const StepPlan& plan, const ParamSet<T>& params,
                        std::size_t example, std::size_t position) {
  const TrainConfig& cfg = *plan.config;
  ExampleGradient eg = plan.model->per_example_gradient(
      params, plan.data->example<T>(example), plan.data->labels[example]);
  Contribution c;
  c.loss = eg.loss;
  if (!cfg.private_training) {
    c.clipped = std::move(eg.grad.values);
    return c;
  }
  eg.grad.stages = plan.stages;
  c.clipped = clip(eg.grad, cfg.dp).values;
  if (cfg.dp.noise == NoisePlacement::kPerExample &&
      cfg.dp.noise_multiplier > 0.0) {
    CounterRng rng = example_noise_stream(cfg.dp.seed, plan.step, position);
    c.noise = gaussian_noise(c.clipped.size(),
                             per_example_noise_stddev(cfg.dp), rng);
  }
  return c;
}

// Fills out[i] for every index in [begin, end) using up to `workers`
// threads. Exceptions are rethrown in index order after all threads join.
template <typename T>
void compute_wave(const StepPlan& plan, const ParamSet<T>& params,
                  const std::vector<std::size_t>& batch, std::size_t begin,
                  std::size_t end, std::vector<Contribution>& out) {
  const std::size_t n = end - begin;
  out.assign(n, Contribution{});
  std::vector<std::exception_ptr> errors(n);
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < n; i += stride) {
      try {
        out[i] = contribute(plan, params, batch[begin + i], begin + i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min(plan.config->workers, n);
  if (workers <= 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(work, w, workers);
    for (auto& t : threads) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

void TrainConfig::validate() const {
  dp.validate();
  if (epochs < 0) throw ConfigError("train.epochs", "must be >= 0");
  if (workers == 0) throw ConfigError("train.workers", "must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("optim.momentum", "must lie in [0, 1)");
  }
  if (!(lr.base_lr > 0.0) || std::isinf(lr.base_lr)) {
    throw ConfigError("optim.lr", "must be finite and > 0");
  }
  if (!(lr.decay_factor > 0.0)) {
    throw ConfigError("optim.decay_factor", "must be > 0");
  }
  if (!(delta > 0.0 && delta < 1.0)) {
    throw ConfigError("privacy.delta", "must lie in (0, 1)");
  }
}

template <typename T>
double accuracy(const Model& model, const ParamSet<T>& params,
                const Dataset& data) {
  const std::size_t n = data.size();
  if (n == 0) throw InputError("accuracy: empty dataset");
  const Shape example_shape = data.example_shape();
  const std::size_t stride = shape_numel(example_shape);
  const std::size_t classes = model.spec().num_classes;
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < n; begin += kEvalChunk) {
    const std::size_t b = std::min(kEvalChunk, n - begin);
    Shape shape{b};
    shape.insert(shape.end(), example_shape.begin(), example_shape.end());
    const double* src = data.examples.data() + begin * stride;
    Tensor<T> batch(shape, std::vector<T>(src, src + b * stride));
    const Tensor<T> logits = model.forward(params, batch);
    for (std::size_t i = 0; i < b; ++i) {
      const T* row = logits.data() + i * classes;
      const auto best = std::max_element(row, row + classes) - row;
      if (best == data.labels[begin + i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

template <typename T>
std::vector<RunRecord> train_epoch(const Model& model, ParamSet<T>& params,
                                   OptimizerState& optimizer,
                                   const Dataset& data, const Dataset* eval,
                                   const TrainConfig& config, int epoch,
                                   const AccountantHook& account,
                                   const MetricsHook& metrics) {
  const std::size_t batch_size = config.dp.effective_batch();
  const std::size_t dim = model.dimension();
  const std::vector<Extent> layers = model.layer_extents();
  StepPlan plan{&model, &data, &config, {}, 0};
  if (config.private_training && config.dp.mode == ClipMode::kPerStage) {
    plan.stages = partition_stages(layers, config.dp.num_stages,
                                   config.dp.stage_layers);
  }
  const double lr = lr_schedule(epoch, config.lr, config.dp.grad_acc);
  const double sigma =
      config.private_training ? config.dp.noise_multiplier : 0.0;
  const bool batch_noise = config.private_training && sigma > 0.0 &&
                           config.dp.noise == NoisePlacement::kPerBatch;

  const auto batches = sample_batches(data.size(), batch_size, config.seed,
                                      static_cast<std::uint64_t>(epoch));
  std::vector<RunRecord> records;
  records.reserve(batches.size());
  std::vector<Contribution> wave;
  for (std::size_t s = 0; s < batches.size(); ++s) {
    const std::vector<std::size_t>& batch = batches[s];
    plan.step = static_cast<std::uint64_t>(optimizer.step);

    // Arrival order is batch order, which is replica-major: position
    // r * grad_acc + a holds accumulation step a of replica r.
    Accumulator noised(dim, batch_size);
    Accumulator clipped(dim, batch_size);
    std::vector<double> noise_total(dim, 0.0);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < batch.size(); begin += kWave) {
      const std::size_t end = std::min(begin + kWave, batch.size());
      compute_wave(plan, params, batch, begin, end, wave);
      for (Contribution& c : wave) {
        loss_sum += c.loss;
        clipped.add(c.clipped);
        if (!c.noise.empty()) {
          for (std::size_t i = 0; i < dim; ++i) noise_total[i] += c.noise[i];
          for (std::size_t i = 0; i < dim; ++i) c.clipped[i] += c.noise[i];
        }
        noised.add(c.clipped);
      }
    }

    FlatGradient g;
    if (batch_noise) {
      CounterRng rng = batch_noise_stream(config.dp.seed, plan.step);
      noise_total = gaussian_noise(
          dim, config.dp.noise_multiplier * config.dp.clip_norm, rng);
      g.values.assign(clipped.sum().begin(), clipped.sum().end());
      const double denom = static_cast<double>(batch_size);
      for (std::size_t i = 0; i < dim; ++i) {
        g.values[i] = (g.values[i] + noise_total[i]) / denom;
      }
      g.layers = layers;
    } else {
      g = noised.finish(layers);
    }

    sgd_step(params, g, lr, optimizer);

    StepContext ctx;
    ctx.step = optimizer.step;
    ctx.epoch = epoch;
    ctx.lr = lr;
    ctx.loss = loss_sum / static_cast<double>(batch_size);
    ctx.noise_multiplier = sigma;
    ctx.epsilon = account ? account() : 0.0;
    if (eval != nullptr && s + 1 == batches.size()) {
      ctx.accuracy = accuracy(model, params, *eval);
    }
    records.push_back(record_step(clipped.sum(), noise_total, ctx));
    if (metrics) metrics(records.back());
  }
  return records;
}

template <typename T>
TrainResult<T> train(const Model& model, const Dataset& data,
                     const Dataset* eval, const TrainConfig& config,
                     const MetricsHook& metrics) {
  config.validate();
  data.validate();
  if (data.num_classes > model.spec().num_classes) {
    throw ConfigError("model.classes",
                      "dataset has " + std::to_string(data.num_classes) +
                          " classes but the model emits " +
                          std::to_string(model.spec().num_classes));
  }
  if (data.example_shape() != model.spec().input_shape) {
    throw ConfigError("model", "input shape " +
                                   shape_to_string(model.spec().input_shape) +
                                   " does not match examples " +
                                   shape_to_string(data.example_shape()));
  }
  const std::size_t batch_size = config.dp.effective_batch();
  if (batch_size > data.size()) {
    throw ConfigError("dp.grad_acc",
                      "effective batch " + std::to_string(batch_size) +
                          " exceeds the " + std::to_string(data.size()) +
                          " training examples");
  }
  const Dataset& held_out = eval != nullptr ? *eval : data;

  TrainResult<T> result;
  result.params = model.init_params<T>(config.seed);
  result.initial_accuracy = accuracy(model, result.params, held_out);
  result.final_accuracy = result.initial_accuracy;

  std::optional<PrivacyLedger> ledger;
  std::int64_t steps_taken = 0;
  AccountantHook account;
  if (config.private_training) {
    const double q =
        static_cast<double>(batch_size) / static_cast<double>(data.size());
    ledger.emplace(q, config.dp.noise_multiplier, config.delta);
    account = [&ledger]() {
      ledger->step();
      return ledger->epsilon();
    };
  } else {
    account = [&steps_taken]() {
      ++steps_taken;
      return std::numeric_limits<double>::infinity();
    };
  }

  OptimizerState optimizer(model.dimension(), config.momentum);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<RunRecord> epoch_records =
        train_epoch(model, result.params, optimizer, data, &held_out, config,
                    epoch, account, metrics);
    result.records.insert(result.records.end(), epoch_records.begin(),
                          epoch_records.end());
  }
  if (!result.records.empty()) {
    result.final_epsilon = result.records.back().epsilon;
    for (auto it = result.records.rbegin(); it != result.records.rend(); ++it) {
      if (it->accuracy) {
        result.final_accuracy = *it->accuracy;
        break;
      }
    }
  }
  return result;
}

#define NANODP_INSTANTIATE_TRAINER(T)                                        \
  template double accuracy<T>(const Model&, const ParamSet<T>&,              \
                              const Dataset&);                               \
  template std::vector<RunRecord> train_epoch<T>(                            \
      const Model&, ParamSet<T>&, OptimizerState&, const Dataset&,           \
      const Dataset*, const TrainConfig&, int, const AccountantHook&,        \
      const MetricsHook&);                                                   \
  template TrainResult<T> train<T>(const Model&, const Dataset&,             \
                                   const Dataset*, const TrainConfig&,       \
                                   const MetricsHook&);

NANODP_INSTANTIATE_TRAINER(float)
NANODP_INSTANTIATE_TRAINER(double)

}  // namespace nanodp
