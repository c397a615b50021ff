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

#ifndef NANODP_METRICS_H_
#define NANODP_METRICS_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nanodp/flat_gradient.h"

namespace nanodp {

// One optimizer step. Norms are of the undivided batch sums:
//   grad_norm  = || sum_j clip(grad_j) ||
//   noise_norm = || total noise injected this step ||
//   snr        = grad_norm / noise_norm, absent when sigma = 0 and +inf when
//                a positive sigma happened to inject a zero vector.
struct RunRecord {
  std::int64_t step = 0;
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;                // mean over the batch, before the update
  std::optional<double> accuracy;   // held-out accuracy on an epoch's last step
  double grad_norm = 0.0;
  double noise_norm = 0.0;
  std::optional<double> snr;
  double epsilon = 0.0;             // privacy spent so far

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

struct StepContext {
  std::int64_t step = 0;
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  std::optional<double> accuracy;
  double noise_multiplier = 0.0;
  double epsilon = 0.0;
};

// Norms are computed in 64-bit. Throws InternalError on a dimension mismatch.
RunRecord record_step(std::span<const double> sum_clipped,
                      std::span<const double> noise_total,
                      const StepContext& context);
RunRecord record_step(const FlatGradient& sum_clipped,
                      const FlatGradient& noise_total,
                      const StepContext& context);

inline constexpr std::string_view kRunCsvHeader =
    "step,epoch,lr,loss,accuracy,grad_norm,noise_norm,snr,epsilon_so_far";

// Nine significant digits ("%.9g"); infinities print as inf / -inf.
std::string format_real(double value);

// Header plus one LF-terminated row per record. Absent values are empty.
std::string format_run_csv(std::span<const RunRecord> records);

// Writes format_run_csv() to path. Throws IoError naming the path.
void emit_csv(std::span<const RunRecord> records,
              const std::filesystem::path& path);

// Inverse of format_run_csv, to the printed precision. Throws FormatError.
std::vector<RunRecord> parse_run_csv(std::string_view text);

// Mean of the present snr values (infinite ones included), or nullopt.
std::optional<double> mean_snr(std::span<const RunRecord> records);

}  // namespace nanodp

#endif  // NANODP_METRICS_H_
