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

#include "nanodp/flat_gradient.h"

#include <cmath>
#include <string>

#include "nanodp/errors.h"

namespace nanodp {

void check_tiling(std::span<const Extent> extents, std::size_t dimension,
                  const char* what) {
  std::size_t next = 0;
  for (const Extent& e : extents) {
    if (e.offset != next || e.length == 0) {
      throw InternalError(std::string(what) + " extents do not tile [0, " +
                          std::to_string(dimension) + ") at offset " +
                          std::to_string(next));
    }
    next += e.length;
  }
  if (next != dimension) {
    throw InternalError(std::string(what) + " extents cover " +
                        std::to_string(next) + " of " +
                        std::to_string(dimension) + " coordinates");
  }
}

std::vector<Extent> partition_stages(
    std::span<const Extent> layers, std::size_t num_stages,
    std::span<const std::size_t> layers_per_stage) {
  if (num_stages == 0) throw ConfigError("dp.stages", "must be >= 1");
  std::vector<std::size_t> counts(layers_per_stage.begin(),
                                  layers_per_stage.end());
  if (counts.empty()) {
    if (num_stages > layers.size()) {
      throw ConfigError("dp.stages",
                        std::to_string(num_stages) + " stages for " +
                            std::to_string(layers.size()) +
                            " parameterized layers");
    }
    const std::size_t base = layers.size() / num_stages;
    const std::size_t extra = layers.size() % num_stages;
    for (std::size_t s = 0; s < num_stages; ++s) {
      counts.push_back(base + (s < extra ? 1 : 0));
    }
  }
  if (counts.size() != num_stages) {
    throw ConfigError("dp.stage_layers",
                      "lists " + std::to_string(counts.size()) +
                          " stages but dp.stages is " +
                          std::to_string(num_stages));
  }
  std::vector<Extent> stages;
  std::size_t layer = 0;
  for (std::size_t count : counts) {
    if (count == 0) {
      throw ConfigError("dp.stage_layers", "every stage needs >= 1 layer");
    }
    if (layer + count > layers.size()) {
      throw ConfigError("dp.stage_layers",
                        "assigns more layers than the model's " +
                            std::to_string(layers.size()));
    }
    Extent e{layers[layer].offset, 0};
    for (std::size_t i = 0; i < count; ++i) e.length += layers[layer + i].length;
    stages.push_back(e);
    layer += count;
  }
  if (layer != layers.size()) {
    throw ConfigError("dp.stage_layers",
                      "assigns " + std::to_string(layer) + " of " +
                          std::to_string(layers.size()) + " layers");
  }
  return stages;
}

double l2_norm(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  if (std::isinf(sum)) {
    // Squares overflowed; rescale by the largest magnitude.
    double scale = 0.0;
    for (double x : v) scale = std::fmax(scale, std::fabs(x));
    if (std::isinf(scale)) return scale;
    double scaled = 0.0;
    for (double x : v) {
      const double r = x / scale;
      scaled += r * r;
    }
    return scale * std::sqrt(scaled);
  }
  return std::sqrt(sum);
}

std::size_t extent_index_of(std::span<const Extent> extents,
                            std::size_t index) {
  for (std::size_t i = 0; i < extents.size(); ++i) {
    if (index >= extents[i].offset &&
        index < extents[i].offset + extents[i].length) {
      return i;
    }
  }
  return extents.size();
}

}  // namespace nanodp
