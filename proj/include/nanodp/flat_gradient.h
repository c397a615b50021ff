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

#ifndef NANODP_FLAT_GRADIENT_H_
#define NANODP_FLAT_GRADIENT_H_

#include <cstddef>
#include <span>
#include <vector>

namespace nanodp {

// Half-open slice [offset, offset + length) of a flattened parameter vector.
struct Extent {
  std::size_t offset = 0;
  std::size_t length = 0;

  friend bool operator==(const Extent&, const Extent&) = default;
};

// One gradient flattened in parameter order, kept in 64-bit regardless of the
// training precision. `layers` has one extent per parameterized layer;
// `stages` is the optional pipeline partition. When present, each list tiles
// [0, values.size()) in order.
struct FlatGradient {
  std::vector<double> values;
  std::vector<Extent> layers;
  std::vector<Extent> stages;

  std::size_t dimension() const { return values.size(); }
};

// Throws InternalError unless `extents` tiles [0, dimension) in order.
void check_tiling(std::span<const Extent> extents, std::size_t dimension,
                  const char* what);

// Groups consecutive layer extents into stages. `layers_per_stage` lists how
// many layers each stage holds; when empty, the L layers are split into
// `num_stages` contiguous runs whose sizes differ by at most one (earlier
// stages take the extra layers). Throws ConfigError on an impossible split.
std::vector<Extent> partition_stages(std::span<const Extent> layers,
                                     std::size_t num_stages,
                                     std::span<const std::size_t>
                                         layers_per_stage = {});

// Euclidean norm accumulated left to right in 64-bit.
double l2_norm(std::span<const double> v);

// Index of the extent containing `index`, or extents.size() if none does.
std::size_t extent_index_of(std::span<const Extent> extents,
                            std::size_t index);

}  // namespace nanodp

#endif  // NANODP_FLAT_GRADIENT_H_
