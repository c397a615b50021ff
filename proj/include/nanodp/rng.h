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

// Counter-based random streams.
//
// A stream is identified by a 64-bit key derived from (seed, domain, ids...).
// Draw i of a stream is SplitMix64's output function applied to
// key + (i + 1) * 0x9E3779B97F4A7C15, so any draw can be recomputed from its
// coordinates alone and the values never depend on thread scheduling.
//
// Uniforms take the top 53 bits: u = ((x >> 11) + 0.5) * 2^-53, in (0, 1).
// Gaussians use the Box-Muller transform on consecutive uniform pairs
// (u1, u2): r = sqrt(-2 ln u1), z0 = r cos(2 pi u2), z1 = r sin(2 pi u2),
// emitted in that order.

#ifndef NANODP_RNG_H_
#define NANODP_RNG_H_

#include <cstdint>
#include <initializer_list>

namespace nanodp {

// Stream domains. Keeping them distinct guarantees that, for example,
// initialization and noise never share draws under the same seed.
enum class RngDomain : std::uint64_t {
  kInit = 1,
  kSynthData = 2,
  kShuffle = 3,
  kExampleNoise = 4,
  kBatchNoise = 5,
  kTest = 99,
};

std::uint64_t splitmix64_mix(std::uint64_t z);

std::uint64_t derive_stream_key(std::uint64_t seed, RngDomain domain,
                                std::initializer_list<std::uint64_t> ids = {});

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}
  CounterRng(std::uint64_t seed, RngDomain domain,
             std::initializer_list<std::uint64_t> ids = {})
      : key_(derive_stream_key(seed, domain, ids)) {}

  std::uint64_t next_u64();
  double next_uniform();
  double next_gaussian();
  // Uniform integer in [0, bound) by rejection; bound must be >= 1.
  std::uint64_t next_below(std::uint64_t bound);

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace nanodp

#endif  // NANODP_RNG_H_
