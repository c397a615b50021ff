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

// Experiment configuration files.
//
// The format is one `key = value` pair per line with dotted keys. `#` starts
// a comment anywhere on a line, blank lines are ignored, lists are
// comma-separated and booleans are true/false (or on/off). Every problem is
// reported as a ConfigError whose key() names the offending key, so parsing
// never fails any other way. The full key reference lives in README.md.

#ifndef NANODP_CONFIG_H_
#define NANODP_CONFIG_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nanodp/data.h"
#include "nanodp/trainer.h"

namespace nanodp {

enum class DataKind { kSynth, kIdx, kCsv };
enum class Precision { kFloat32, kFloat64 };

struct DataSource {
  DataKind kind = DataKind::kSynth;
  BlobSpec blobs;
  std::size_t eval_per_class = 100;
  std::filesystem::path train_images, train_labels;
  std::filesystem::path eval_images, eval_labels;  // optional for IDX
  std::filesystem::path train_csv, eval_csv;       // eval optional for CSV
};

struct ModelChoice {
  std::string arch = "mlp";  // mlp | cnn | layers
  std::vector<std::size_t> hidden = {128};
  std::string layers;        // used when arch = layers
  std::optional<std::size_t> classes;
};

struct SweepAxes {
  std::vector<std::size_t> grad_acc;
  std::vector<double> sigma;
  std::vector<double> clip;
  std::optional<double> epsilon_cap;

  bool empty() const {
    return grad_acc.empty() && sigma.empty() && clip.empty();
  }
};

struct ExperimentConfig {
  DataSource data;
  ModelChoice model;
  TrainConfig train;
  Precision precision = Precision::kFloat64;
  std::filesystem::path output_dir = "out";
  std::string run_id = "run";
  SweepAxes sweep;
};

// Raw parsed pairs, before typing. Throws ConfigError on syntax errors and
// duplicate keys; syntax errors use "line <n>" as the key.
std::map<std::string, std::string> parse_key_values(std::string_view text);

// Parses and validates a whole configuration. Relative data paths are
// resolved against `base_dir`.
ExperimentConfig parse_experiment_config(
    std::string_view text, const std::filesystem::path& base_dir = {});

// Reads `path` (IoError if unreadable) and parses it with base_dir set to
// the file's directory.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

}  // namespace nanodp

#endif  // NANODP_CONFIG_H_
