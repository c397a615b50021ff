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

#ifndef NANODP_CLI_H_
#define NANODP_CLI_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "nanodp/config.h"
#include "nanodp/data.h"
#include "nanodp/metrics.h"
#include "nanodp/model.h"

namespace nanodp {

struct LoadedData {
  Dataset train;
  std::optional<Dataset> eval;
};

// Synthetic data draws the training split from stream 0 and the held-out
// split from stream 1 of the same seed.
LoadedData load_data(const DataSource& source);

// Input shape and class count come from the training data unless
// model.classes overrides the latter.
ModelSpec resolve_model_spec(const ModelChoice& choice, const Dataset& train);

struct RunSummary {
  std::string run_id;
  std::vector<RunRecord> records;
  double initial_accuracy = 0.0;
  double final_accuracy = 0.0;
  double final_epsilon = 0.0;
  double wall_seconds = 0.0;
  std::filesystem::path csv_path;
  std::filesystem::path params_path;

  // One line: run id, steps, final accuracy, final epsilon, wall clock.
  std::string summary_line() const;
};

// Trains per `config` and writes <run_id>.csv and <run_id>.params into the
// output directory (created if needed).
RunSummary run_experiment(const ExperimentConfig& config);
RunSummary run_experiment(const ExperimentConfig& config,
                          const LoadedData& data);

struct FrontierRow {
  std::size_t grad_acc = 1;
  double sigma = 0.0;
  double clip = 0.0;
  std::optional<double> best_accuracy;
  std::optional<int> best_epoch;
  std::optional<double> epsilon_at_best;
  std::optional<double> mean_snr;
  std::optional<double> final_epsilon;
  std::uint64_t seed = 0;
  std::string status = "ok";
};

inline constexpr std::string_view kFrontierCsvHeader =
    "grad_acc,sigma,clip,best_accuracy,best_epoch,epsilon_at_best,mean_snr,"
    "final_epsilon,seed,status";

// Best accuracy over the evaluated epochs of `records`, restricted to epochs
// whose epsilon does not exceed `epsilon_cap` when one is given. Fills the
// best_*, mean_snr and final_epsilon fields of `row`.
void summarize_point(std::span<const RunRecord> records,
                     std::optional<double> epsilon_cap, FrontierRow& row);

std::string format_frontier_csv(std::span<const FrontierRow> rows);

// Grid config.sweep.grad_acc x sigma x clip in that nesting order (missing
// axes fall back to the base value). Point i runs with seed base_seed + i and
// run id <run_id>_p<i>. Failed points become rows with a failure status.
// Writes <run_id>_frontier.csv. Progress lines go to `log` when non-null.
std::vector<FrontierRow> run_sweep(const ExperimentConfig& config,
                                   std::ostream* log = nullptr);

// The configuration of sweep point `index`, for re-running it alone.
ExperimentConfig sweep_point_config(const ExperimentConfig& config,
                                    std::size_t index);
std::size_t sweep_point_count(const ExperimentConfig& config);

// "q,T,epsilon,best_order" with no header and no trailing newline.
std::string account_row(std::int64_t n, std::int64_t batch, double sigma,
                        std::int64_t epochs, double delta);

// Parameter blob: "NANODPP1", little-endian u64 count, then that many
// little-endian IEEE doubles.
void write_params(const std::filesystem::path& path,
                  std::span<const double> values);
std::vector<double> read_params(const std::filesystem::path& path);

}  // namespace nanodp

#endif  // NANODP_CLI_H_
