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

#include "nanodp/dp.h"

#include <cmath>
#include <string>

#include "nanodp/errors.h"

namespace nanodp {
namespace {

// Scales v in place so its computed norm is at most bound. Leaves v
// untouched (bitwise) when it already is.
void clip_slice(std::span<double> v, double bound) {
  const double norm = l2_norm(v);
  if (!(norm > bound)) return;
  if (std::isinf(norm)) {
    // Only reachable with an infinite coordinate; let the NaN reach the
    // optimizer's finiteness check instead of inventing a direction.
    for (double& x : v) x *= bound / norm;
    return;
  }
  double scale = bound / norm;
  std::vector<double> original(v.begin(), v.end());
  // Rounding can leave the rescaled norm a few ulps above the bound; step the
  // scale down until it is not, so a second clip is a no-op.
  for (int attempt = 0; attempt < 64; ++attempt) {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = original[i] * scale;
    if (l2_norm(v) <= bound) return;
    scale = std::nextafter(scale, 0.0);
  }
  throw InternalError("clip: could not bring norm under " +
                      std::to_string(bound));
}

FlatGradient clip_slices(const FlatGradient& g,
                         std::span<const Extent> slices, double bound) {
  FlatGradient out = g;
  for (const Extent& e : slices) {
    clip_slice(std::span<double>(out.values).subspan(e.offset, e.length),
               bound);
  }
  return out;
}

void check_clip_norm(double clip_norm) {
  if (!(clip_norm > 0.0)) {
    throw ConfigError("dp.clip", "clip norm must be > 0, got " +
                                     std::to_string(clip_norm));
  }
}

}  // namespace

ClipMode parse_clip_mode(std::string_view name) {
  if (name == "global") return ClipMode::kGlobal;
  if (name == "per_layer") return ClipMode::kPerLayer;
  if (name == "per_stage") return ClipMode::kPerStage;
  throw ConfigError("dp.mode", "expected global, per_layer or per_stage, got '" +
                                   std::string(name) + "'");
}

const char* clip_mode_name(ClipMode mode) {
  switch (mode) {
    case ClipMode::kGlobal: return "global";
    case ClipMode::kPerLayer: return "per_layer";
    case ClipMode::kPerStage: return "per_stage";
  }
  return "?";
}

NoisePlacement parse_noise_placement(std::string_view name) {
  if (name == "per_example") return NoisePlacement::kPerExample;
  if (name == "per_batch") return NoisePlacement::kPerBatch;
  throw ConfigError("dp.noise", "expected per_example or per_batch, got '" +
                                    std::string(name) + "'");
}

const char* noise_placement_name(NoisePlacement placement) {
  return placement == NoisePlacement::kPerExample ? "per_example" : "per_batch";
}

void DpConfig::validate() const {
  check_clip_norm(clip_norm);
  if (!(noise_multiplier >= 0.0) || std::isinf(noise_multiplier)) {
    throw ConfigError("dp.sigma", "noise multiplier must be finite and >= 0");
  }
  if (replicas == 0) throw ConfigError("dp.replicas", "must be >= 1");
  if (grad_acc == 0) throw ConfigError("dp.grad_acc", "must be >= 1");
  if (num_stages == 0) throw ConfigError("dp.stages", "must be >= 1");
  if (!stage_layers.empty() && stage_layers.size() != num_stages) {
    throw ConfigError("dp.stage_layers",
                      "lists " + std::to_string(stage_layers.size()) +
                          " stages but dp.stages is " +
                          std::to_string(num_stages));
  }
}

FlatGradient clip_global(const FlatGradient& g, double clip_norm) {
  check_clip_norm(clip_norm);
  const Extent whole{0, g.values.size()};
  return clip_slices(g, std::span<const Extent>(&whole, 1), clip_norm);
}

FlatGradient clip_per_layer(const FlatGradient& g, double clip_norm) {
  check_clip_norm(clip_norm);
  if (g.layers.empty()) {
    throw ConfigError("dp.mode",
                      "per_layer clipping needs per-layer extents");
  }
  check_tiling(g.layers, g.values.size(), "layer");
  const double bound =
      clip_norm / std::sqrt(static_cast<double>(g.layers.size()));
  return clip_slices(g, g.layers, bound);
}

FlatGradient clip_per_stage(const FlatGradient& g, double clip_norm,
                            std::size_t num_stages) {
  check_clip_norm(clip_norm);
  if (g.stages.size() != num_stages) {
    throw ConfigError("dp.stages",
                      "gradient carries " + std::to_string(g.stages.size()) +
                          " stage slices, expected " +
                          std::to_string(num_stages));
  }
  check_tiling(g.stages, g.values.size(), "stage");
  const double bound = clip_norm / std::sqrt(static_cast<double>(num_stages));
  return clip_slices(g, g.stages, bound);
}

FlatGradient clip(const FlatGradient& g, const DpConfig& cfg) {
  switch (cfg.mode) {
    case ClipMode::kGlobal: return clip_global(g, cfg.clip_norm);
    case ClipMode::kPerLayer: return clip_per_layer(g, cfg.clip_norm);
    case ClipMode::kPerStage:
      return clip_per_stage(g, cfg.clip_norm, cfg.num_stages);
  }
  throw InternalError("clip: unknown mode");
}

CounterRng example_noise_stream(std::uint64_t seed, std::uint64_t step,
                                std::uint64_t example_index) {
  return CounterRng(seed, RngDomain::kExampleNoise, {step, example_index});
}

CounterRng batch_noise_stream(std::uint64_t seed, std::uint64_t step) {
  return CounterRng(seed, RngDomain::kBatchNoise, {step});
}

std::vector<double> gaussian_noise(std::size_t dim, double stddev,
                                   CounterRng& rng) {
  std::vector<double> z(dim);
  for (double& x : z) x = stddev * rng.next_gaussian();
  return z;
}

double per_example_noise_stddev(const DpConfig& cfg) {
  return cfg.noise_multiplier * cfg.clip_norm /
         std::sqrt(static_cast<double>(cfg.effective_batch()));
}

FlatGradient noise_per_example(const FlatGradient& g_clipped,
                               const DpConfig& cfg, CounterRng& rng) {
  FlatGradient out = g_clipped;
  if (cfg.noise_multiplier == 0.0) return out;
  const std::vector<double> z =
      gaussian_noise(out.values.size(), per_example_noise_stddev(cfg), rng);
  for (std::size_t i = 0; i < z.size(); ++i) out.values[i] += z[i];
  return out;
}

Accumulator::Accumulator(std::size_t dimension, std::size_t effective_batch)
    : sum_(dimension, 0.0), expected_(effective_batch) {
  if (effective_batch == 0) {
    throw ConfigError("dp.grad_acc", "effective batch must be >= 1");
  }
}

void Accumulator::add(const FlatGradient& g) { add(g.values); }

void Accumulator::add(std::span<const double> values) {
  if (values.size() != sum_.size()) {
    throw DimensionError("accumulate: contribution of dimension " +
                         std::to_string(values.size()) + ", expected " +
                         std::to_string(sum_.size()));
  }
  if (count_ == expected_) {
    throw ProtocolError("accumulate: more than |B| = " +
                        std::to_string(expected_) + " contributions");
  }
  for (std::size_t i = 0; i < sum_.size(); ++i) sum_[i] += values[i];
  ++count_;
}

FlatGradient Accumulator::finish(std::vector<Extent> layers,
                                 std::vector<Extent> stages) const {
  if (count_ != expected_) {
    throw ProtocolError("accumulate: received " + std::to_string(count_) +
                        " contributions, expected |B| = " +
                        std::to_string(expected_));
  }
  FlatGradient out{sum_, std::move(layers), std::move(stages)};
  const double denom = static_cast<double>(expected_);
  for (double& x : out.values) x /= denom;
  return out;
}

FlatGradient accumulate(std::span<const FlatGradient> contributions,
                        std::size_t effective_batch) {
  if (contributions.empty()) {
    throw ProtocolError("accumulate: no contributions, expected |B| = " +
                        std::to_string(effective_batch));
  }
  Accumulator acc(contributions.front().dimension(), effective_batch);
  for (const FlatGradient& g : contributions) acc.add(g);
  return acc.finish(contributions.front().layers,
                    contributions.front().stages);
}

template <typename T>
void sgd_step(ParamSet<T>& params, const FlatGradient& g, double lr,
              OptimizerState& state) {
  const std::size_t d = params.dimension();
  if (g.values.size() != d || state.velocity.size() != d) {
    throw DimensionError("sgd_step: gradient " +
                         std::to_string(g.values.size()) + ", velocity " +
                         std::to_string(state.velocity.size()) +
                         ", parameters " + std::to_string(d));
  }
  for (std::size_t i = 0; i < d; ++i) {
    if (!std::isfinite(g.values[i])) {
      const auto layers = g.layers.empty() ? params.layer_extents() : g.layers;
      const std::size_t layer = extent_index_of(layers, i);
      throw NumericError("non-finite gradient at step " +
                         std::to_string(state.step) + ": coordinate " +
                         std::to_string(i) + " (parameterized layer " +
                         std::to_string(layer) + ") is " +
                         std::to_string(g.values[i]));
    }
  }
  std::size_t k = 0;
  for (auto& layer : params.layers) {
    for (auto& t : layer) {
      for (std::size_t i = 0; i < t.numel(); ++i, ++k) {
        double& v = state.velocity[k];
        v = state.momentum * v + g.values[k];
        t[i] = static_cast<T>(static_cast<double>(t[i]) - lr * v);
      }
    }
  }
  ++state.step;
}

template void sgd_step(ParamSet<float>&, const FlatGradient&, double,
                       OptimizerState&);
template void sgd_step(ParamSet<double>&, const FlatGradient&, double,
                       OptimizerState&);

double lr_schedule(int epoch, double base_lr, std::size_t grad_acc,
                   std::span<const int> decay_epochs, double decay_factor,
                   bool scaling) {
  if (!(base_lr > 0.0)) throw ConfigError("optim.lr", "must be > 0");
  double lr = scaling ? base_lr * static_cast<double>(grad_acc) : base_lr;
  for (int e : decay_epochs) {
    if (e <= epoch) lr *= decay_factor;
  }
  return lr;
}

double lr_schedule(int epoch, const LrSchedule& schedule,
                   std::size_t grad_acc) {
  return lr_schedule(epoch, schedule.base_lr, grad_acc, schedule.decay_epochs,
                     schedule.decay_factor, schedule.scale_by_grad_acc);
}

}  // namespace nanodp
