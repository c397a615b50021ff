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

// Renyi-DP accounting for the sampled Gaussian mechanism.
//
// Each step releases a clipped sum noised with N(0, sigma^2 C^2), where the
// batch is treated as a Poisson sample with rate q = |B| / N. RDP composes
// additively over steps and is converted to (epsilon, delta) at the end.
//
// The training loop shuffles and partitions instead of Poisson sampling.
// Accounting with q = |B| / N is the standard approximation for that setup;
// it is not a formal guarantee for shuffled fixed-size batches.

#ifndef NANODP_ACCOUNTANT_H_
#define NANODP_ACCOUNTANT_H_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace nanodp {

// Integers 2..64 plus 128, 256, 512.
std::vector<int> default_orders();

// RDP of one step at integer order alpha >= 2:
//   q = 1:  alpha / (2 sigma^2)
//   q < 1:  log( sum_{k=0}^{alpha} C(alpha, k) (1-q)^(alpha-k) q^k
//                 exp(k (k-1) / (2 sigma^2)) ) / (alpha - 1)
// evaluated in log space. Throws ConfigError for q outside (0, 1], sigma <= 0
// or alpha < 2, and AccountingError if the value is not finite.
double rdp_subsampled_gaussian(double q, double sigma, int alpha);

// Accumulated RDP per order.
struct RdpCurve {
  std::vector<int> orders;
  std::vector<double> values;

  static RdpCurve zeros(std::vector<int> orders);
};

RdpCurve rdp_per_step(double q, double sigma, std::span<const int> orders);

// curve[alpha] += steps * per_step[alpha]. Throws ConfigError when the order
// grids differ.
RdpCurve compose(const RdpCurve& curve, const RdpCurve& per_step,
                 std::int64_t steps);

struct EpsilonResult {
  double epsilon = 0.0;
  int order = 0;
};

// epsilon = min_alpha curve[alpha] + log(1/delta) / (alpha - 1), clamped at
// zero. Ties resolve to the smallest order.
EpsilonResult to_epsilon(const RdpCurve& curve, double delta);

struct PrivacySpec {
  std::int64_t dataset_size = 0;
  std::int64_t batch_size = 0;
  double noise_multiplier = 1.0;
  std::int64_t epochs = 0;
  double delta = 1e-5;
  std::vector<int> orders = default_orders();

  double sampling_ratio() const;
  // epochs * floor(N / |B|)
  std::int64_t steps() const;
  void validate() const;
};

struct PrivacyReport {
  double q = 0.0;
  std::int64_t steps = 0;
  double epsilon = 0.0;
  std::optional<int> best_order;  // absent when no step was taken
};

PrivacyReport epsilon_for_training(const PrivacySpec& spec);
PrivacyReport epsilon_for_training(std::int64_t n, std::int64_t batch,
                                   double sigma, std::int64_t epochs,
                                   double delta);

// Running accountant for a training loop: one call to step() per optimizer
// step. With sigma = 0 every step is non-private and epsilon is +inf.
class PrivacyLedger {
 public:
  PrivacyLedger(double q, double sigma, double delta,
                std::vector<int> orders = default_orders());

  void step();
  std::int64_t steps() const { return steps_; }
  double epsilon() const;

 private:
  double sigma_;
  double delta_;
  RdpCurve per_step_;
  RdpCurve curve_;
  std::int64_t steps_ = 0;
};

}  // namespace nanodp

#endif  // NANODP_ACCOUNTANT_H_
