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

#include "nanodp/cli.h"

#include <bit>
#include <chrono>
#include <cstring>
#include <fstream>
#include <iterator>

#include "nanodp/accountant.h"
#include "nanodp/errors.h"
#include "nanodp/trainer.h"

namespace nanodp {
namespace {

constexpr char kParamsMagic[8] = {'N', 'A', 'N', 'O', 'D', 'P', 'P', '1'};

static_assert(std::endian::native == std::endian::little,
              "parameter blobs assume a little-endian host");

template <typename T>
RunSummary train_and_write(const ExperimentConfig& config,
                           const LoadedData& data, const Model& model) {
  const Dataset* eval = data.eval ? &*data.eval : nullptr;
  TrainResult<T> result = train<T>(model, data.train, eval, config.train);

  RunSummary s;
  s.run_id = config.run_id;
  s.records = std::move(result.records);
  s.initial_accuracy = result.initial_accuracy;
  s.final_accuracy = result.final_accuracy;
  s.final_epsilon = result.final_epsilon;

  std::error_code ec;
  std::filesystem::create_directories(config.output_dir, ec);
  if (ec) {
    throw IoError("cannot create output directory '" +
                  config.output_dir.string() + "': " + ec.message());
  }
  s.csv_path = config.output_dir / (config.run_id + ".csv");
  s.params_path = config.output_dir / (config.run_id + ".params");
  emit_csv(s.records, s.csv_path);
  write_params(s.params_path, result.params.flatten());
  return s;
}

std::string csv_field(const std::optional<double>& v) {
  return v ? format_real(*v) : std::string();
}

std::string sanitize_status(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ';';
  }
  return s;
}

}  // namespace

LoadedData load_data(const DataSource& source) {
  LoadedData out;
  switch (source.kind) {
    case DataKind::kSynth: {
      out.train = synth_blobs(source.blobs, 0, Split::kTrain);
      BlobSpec eval = source.blobs;
      eval.per_class = source.eval_per_class;
      out.eval = synth_blobs(eval, 1, Split::kEval);
      break;
    }
    case DataKind::kIdx:
      out.train = load_idx(source.train_images, source.train_labels);
      if (!source.eval_images.empty()) {
        out.eval = load_idx(source.eval_images, source.eval_labels,
                            Split::kEval);
      }
      break;
    case DataKind::kCsv:
      out.train = load_labeled_csv(source.train_csv);
      if (!source.eval_csv.empty()) {
        out.eval = load_labeled_csv(source.eval_csv, Split::kEval);
      }
      break;
  }
  out.train.validate();
  if (out.eval) {
    if (out.eval->example_shape() != out.train.example_shape()) {
      throw ConfigError("data", "eval examples " +
                                    shape_to_string(out.eval->example_shape()) +
                                    " differ from training examples " +
                                    shape_to_string(out.train.example_shape()));
    }
    out.eval->num_classes =
        std::max(out.eval->num_classes, out.train.num_classes);
    out.train.num_classes = out.eval->num_classes;
    out.eval->validate();
  }
  return out;
}

ModelSpec resolve_model_spec(const ModelChoice& choice, const Dataset& train) {
  const std::size_t classes = choice.classes.value_or(train.num_classes);
  if (classes < train.num_classes) {
    throw ConfigError("model.classes",
                      std::to_string(classes) + " is fewer than the " +
                          std::to_string(train.num_classes) +
                          " classes in the data");
  }
  const Shape input = train.example_shape();
  if (choice.arch == "mlp") return mlp_spec(input, choice.hidden, classes);
  if (choice.arch == "cnn") return cnn_spec(input, classes);
  return parse_model_spec(choice.layers, input, classes);
}

std::string RunSummary::summary_line() const {
  return "run_id=" + run_id + " steps=" + std::to_string(records.size()) +
         " initial_accuracy=" + format_real(initial_accuracy) +
         " final_accuracy=" + format_real(final_accuracy) +
         " final_epsilon=" + format_real(final_epsilon) +
         " wall_seconds=" + format_real(wall_seconds);
}

RunSummary run_experiment(const ExperimentConfig& config) {
  return run_experiment(config, load_data(config.data));
}

RunSummary run_experiment(const ExperimentConfig& config,
                          const LoadedData& data) {
  const auto start = std::chrono::steady_clock::now();
  const Model model(resolve_model_spec(config.model, data.train));
  RunSummary s = config.precision == Precision::kFloat32
                     ? train_and_write<float>(config, data, model)
                     : train_and_write<double>(config, data, model);
  s.wall_seconds = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - start)
                       .count();
  return s;
}

void summarize_point(std::span<const RunRecord> records,
                     std::optional<double> epsilon_cap, FrontierRow& row) {
  row.mean_snr = mean_snr(records);
  if (!records.empty()) row.final_epsilon = records.back().epsilon;
  for (const RunRecord& r : records) {
    if (!r.accuracy) continue;
    if (epsilon_cap && r.epsilon > *epsilon_cap) continue;
    // Strictly greater keeps the earliest epoch on ties.
    if (!row.best_accuracy || *r.accuracy > *row.best_accuracy) {
      row.best_accuracy = r.accuracy;
      row.best_epoch = r.epoch;
      row.epsilon_at_best = r.epsilon;
    }
  }
  if (epsilon_cap && !row.best_accuracy && row.status == "ok") {
    row.status = "no_epoch_under_cap";
  }
}

std::string format_frontier_csv(std::span<const FrontierRow> rows) {
  std::string out(kFrontierCsvHeader);
  out += '\n';
  for (const FrontierRow& r : rows) {
    out += std::to_string(r.grad_acc);
    out += ',' + format_real(r.sigma);
    out += ',' + format_real(r.clip);
    out += ',' + csv_field(r.best_accuracy);
    out += ',' + (r.best_epoch ? std::to_string(*r.best_epoch) : std::string());
    out += ',' + csv_field(r.epsilon_at_best);
    out += ',' + csv_field(r.mean_snr);
    out += ',' + csv_field(r.final_epsilon);
    out += ',' + std::to_string(r.seed);
    out += ',' + sanitize_status(r.status);
    out += '\n';
  }
  return out;
}

std::size_t sweep_point_count(const ExperimentConfig& config) {
  const SweepAxes& a = config.sweep;
  return std::max<std::size_t>(a.grad_acc.size(), 1) *
         std::max<std::size_t>(a.sigma.size(), 1) *
         std::max<std::size_t>(a.clip.size(), 1);
}

ExperimentConfig sweep_point_config(const ExperimentConfig& config,
                                    std::size_t index) {
  const SweepAxes& a = config.sweep;
  if (index >= sweep_point_count(config)) {
    throw ConfigError("sweep", "point " + std::to_string(index) +
                                   " is outside the grid");
  }
  const std::size_t n_clip = std::max<std::size_t>(a.clip.size(), 1);
  const std::size_t n_sigma = std::max<std::size_t>(a.sigma.size(), 1);
  const std::size_t i_clip = index % n_clip;
  const std::size_t i_sigma = (index / n_clip) % n_sigma;
  const std::size_t i_acc = index / (n_clip * n_sigma);

  ExperimentConfig point = config;
  DpConfig& dp = point.train.dp;
  if (!a.grad_acc.empty()) dp.grad_acc = a.grad_acc[i_acc];
  if (!a.sigma.empty()) dp.noise_multiplier = a.sigma[i_sigma];
  if (!a.clip.empty()) dp.clip_norm = a.clip[i_clip];
  point.train.seed = config.train.seed + index;
  dp.seed = point.train.seed;
  point.run_id = config.run_id + "_p" + std::to_string(index);
  return point;
}

std::vector<FrontierRow> run_sweep(const ExperimentConfig& config,
                                   std::ostream* log) {
  if (config.sweep.empty()) {
    throw ConfigError("sweep", "no sweep axis configured; set at least one of "
                               "sweep.grad_acc, sweep.sigma, sweep.clip");
  }
  const LoadedData data = load_data(config.data);
  const std::size_t points = sweep_point_count(config);
  std::vector<FrontierRow> rows;
  rows.reserve(points);
  for (std::size_t i = 0; i < points; ++i) {
    const ExperimentConfig point = sweep_point_config(config, i);
    FrontierRow row;
    row.grad_acc = point.train.dp.grad_acc;
    row.sigma = point.train.dp.noise_multiplier;
    row.clip = point.train.dp.clip_norm;
    row.seed = point.train.seed;
    try {
      const RunSummary s = run_experiment(point, data);
      summarize_point(s.records, config.sweep.epsilon_cap, row);
      if (log) *log << s.summary_line() << '\n';
    } catch (const std::exception& e) {
      row.status = std::string("failed: ") + e.what();
      if (log) *log << "run_id=" << point.run_id << " " << row.status << '\n';
    }
    rows.push_back(std::move(row));
  }

  const std::filesystem::path frontier =
      config.output_dir / (config.run_id + "_frontier.csv");
  std::error_code ec;
  std::filesystem::create_directories(config.output_dir, ec);
  std::ofstream out(frontier, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + frontier.string() + "'");
  const std::string text = format_frontier_csv(rows);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("failed writing '" + frontier.string() + "'");
  return rows;
}

std::string account_row(std::int64_t n, std::int64_t batch, double sigma,
                        std::int64_t epochs, double delta) {
  const PrivacyReport r = epsilon_for_training(n, batch, sigma, epochs, delta);
  return format_real(r.q) + ',' + std::to_string(r.steps) + ',' +
         format_real(r.epsilon) + ',' +
         (r.best_order ? std::to_string(*r.best_order) : std::string());
}

void write_params(const std::filesystem::path& path,
                  std::span<const double> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(kParamsMagic, sizeof(kParamsMagic));
  const std::uint64_t n = values.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<double> read_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  if (bytes.size() < 16 ||
      std::memcmp(bytes.data(), kParamsMagic, sizeof(kParamsMagic)) != 0) {
    throw FormatError(path.string() + ": not a parameter blob", 0);
  }
  std::uint64_t n = 0;
  std::memcpy(&n, bytes.data() + 8, sizeof(n));
  if ((bytes.size() - 16) / sizeof(double) != n ||
      (bytes.size() - 16) % sizeof(double) != 0) {
    throw FormatError(path.string() + ": expected " + std::to_string(n) +
                          " values",
                      8);
  }
  std::vector<double> values(n);
  std::memcpy(values.data(), bytes.data() + 16, n * sizeof(double));
  return values;
}

}  // namespace nanodp
