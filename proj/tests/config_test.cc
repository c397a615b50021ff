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

#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gtest/gtest.h"
#include "nanodp/cli.h"
#include "nanodp/config.h"
#include "nanodp/errors.h"
#include "test_util.h"

namespace nanodp {
namespace {

using ::nanodp::testing::read_text;
using ::nanodp::testing::TempDir;
using ::nanodp::testing::write_text;

constexpr char kSmallRun[] = R"(# tiny synthetic run
data.synth.classes = 2
data.synth.per_class = 40
data.synth.eval_per_class = 20
data.synth.shape = 2
data.synth.spread = 0.1
model.hidden = 4
dp.clip = 1.0
dp.sigma = 1.0
dp.grad_acc = 8
optim.lr = 0.1
train.epochs = 2
train.seed = 3
)";

std::string with(std::string base, const std::string& extra) {
  return base + extra + "\n";
}

// kSmallRun with an explicit layer list in place of the MLP width.
std::string with_layers(const std::string& layers) {
  std::string text = kSmallRun;
  const std::string hidden = "model.hidden = 4\n";
  text.erase(text.find(hidden), hidden.size());
  return text + "model.arch = layers\nmodel.layers = " + layers + "\n";
}

TEST(KeyValueTest, ParsesCommentsAndWhitespace) {
  const auto kv = parse_key_values("a = 1\n  # note\n\nb.c=x y  # trailing\n");
  ASSERT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv.at("a"), "1");
  EXPECT_EQ(kv.at("b.c"), "x y");
}

TEST(KeyValueTest, DuplicatesAndSyntaxErrorsNameTheirKey) {
  try {
    parse_key_values("a = 1\na = 2\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "a");
  }
  try {
    parse_key_values("a = 1\nnot a pair\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "line 2");
  }
}

TEST(ExperimentConfigTest, ParsesAFullRun) {
  const ExperimentConfig c = parse_experiment_config(
      with(kSmallRun,
           "dp.mode = per_stage\ndp.stages = 2\ndp.noise = per_batch\n"
           "optim.lr_scaling = on\noptim.decay_epochs = 1\n"
           "privacy.delta = 1e-6\ntrain.precision = f32\n"
           "output.run_id = small-1\noutput.dir = out\n"),
      "/base");
  EXPECT_EQ(c.data.kind, DataKind::kSynth);
  EXPECT_EQ(c.data.blobs.per_class, 40u);
  EXPECT_EQ(c.data.blobs.example_shape, Shape{2});
  EXPECT_EQ(c.model.hidden, std::vector<std::size_t>{4});
  EXPECT_EQ(c.train.dp.mode, ClipMode::kPerStage);
  EXPECT_EQ(c.train.dp.num_stages, 2u);
  EXPECT_EQ(c.train.dp.noise, NoisePlacement::kPerBatch);
  EXPECT_EQ(c.train.dp.grad_acc, 8u);
  EXPECT_EQ(c.train.dp.seed, 3u);
  EXPECT_TRUE(c.train.lr.scale_by_grad_acc);
  EXPECT_EQ(c.train.lr.decay_epochs, std::vector<int>{1});
  EXPECT_DOUBLE_EQ(c.train.delta, 1e-6);
  EXPECT_EQ(c.precision, Precision::kFloat32);
  EXPECT_EQ(c.run_id, "small-1");
  EXPECT_EQ(c.output_dir, std::filesystem::path("/base/out"));
  EXPECT_TRUE(c.sweep.empty());
}

TEST(ExperimentConfigTest, DataPathsResolveAgainstTheConfigDirectory) {
  const ExperimentConfig c = parse_experiment_config(
      "data.csv.train = d/train.csv\ndata.csv.eval = /abs/eval.csv\n", "/cfg");
  EXPECT_EQ(c.data.kind, DataKind::kCsv);
  EXPECT_EQ(c.data.train_csv, std::filesystem::path("/cfg/d/train.csv"));
  EXPECT_EQ(c.data.eval_csv, std::filesystem::path("/abs/eval.csv"));
}

TEST(ExperimentConfigTest, EveryErrorNamesItsKey) {
  const std::vector<std::pair<std::string, std::string>> cases = {
      {"bogus.key = 1", "bogus.key"},
      {"dp.clip = 0", "dp.clip"},
      {"dp.clip = abc", "dp.clip"},
      {"dp.sigma = -1", "dp.sigma"},
      {"dp.grad_acc = 0", "dp.grad_acc"},
      {"dp.grad_acc = 2.5", "dp.grad_acc"},
      {"dp.mode = sometimes", "dp.mode"},
      {"dp.stages = 2", "dp.stages"},
      {"dp.noise = everywhere", "dp.noise"},
      {"dp.enabled = maybe", "dp.enabled"},
      {"optim.lr = 0", "optim.lr"},
      {"optim.momentum = 1", "optim.momentum"},
      {"optim.decay_factor = 0", "optim.decay_factor"},
      {"train.epochs = -1", "train.epochs"},
      {"train.workers = 0", "train.workers"},
      {"train.precision = f16", "train.precision"},
      {"privacy.delta = 1", "privacy.delta"},
      {"model.arch = transformer", "model.arch"},
      {"output.run_id = ../escape", "output.run_id"},
      {"output.run_id = .hidden", "output.run_id"},
      {"sweep.sigma = 1, -2", "sweep.sigma"},
      {"sweep.clip = 0", "sweep.clip"},
      {"sweep.epsilon_cap = 0", "sweep.epsilon_cap"},
      {"data.csv.train = x.csv", "data"},
  };
  for (const auto& [line, key] : cases) {
    try {
      parse_experiment_config(with(kSmallRun, line));
      ADD_FAILURE() << "accepted: " << line;
    } catch (const ConfigError& e) {
      EXPECT_EQ(e.key(), key) << line << " -> " << e.what();
    }
  }
}

TEST(ExperimentConfigTest, BatchNormIsAPrivacyViolation) {
  try {
    parse_experiment_config(with_layers("linear:2, batch_norm"));
    FAIL();
  } catch (const PrivacyViolationError& e) {
    EXPECT_EQ(e.key(), "model.layers[1]");
  }
  EXPECT_NO_THROW(parse_experiment_config(with_layers("linear:2")));
}

TEST(ExperimentConfigTest, RandomMutationsOnlyRaiseConfigErrors) {
  std::mt19937_64 gen(1234);
  const std::string base = kSmallRun;
  const std::string alphabet = "=#,.:\n -0123456789abcxyz_\t";
  int accepted = 0, rejected = 0;
  for (int trial = 0; trial < 3000; ++trial) {
    std::string text = base;
    const int edits = 1 + static_cast<int>(gen() % 6);
    for (int e = 0; e < edits; ++e) {
      const std::size_t pos = gen() % (text.size() + 1);
      switch (gen() % 3) {
        case 0:
          text.insert(pos, 1, alphabet[gen() % alphabet.size()]);
          break;
        case 1:
          if (pos < text.size()) text.erase(pos, 1);
          break;
        default:
          if (pos < text.size()) text[pos] = alphabet[gen() % alphabet.size()];
      }
    }
    try {
      parse_experiment_config(text);
      ++accepted;
    } catch (const ConfigError&) {
      ++rejected;
    } catch (const std::exception& e) {
      ADD_FAILURE() << "non-config error " << e.what() << " for:\n" << text;
    }
  }
  EXPECT_GT(accepted, 0);
  EXPECT_GT(rejected, 0);
}

TEST(SweepTest, GridSizeAndNestingOrder) {
  const ExperimentConfig c = parse_experiment_config(
      with(kSmallRun, "sweep.grad_acc = 4, 8, 16\nsweep.sigma = 0.5, 1"));
  ASSERT_EQ(sweep_point_count(c), 6u);
  const ExperimentConfig p3 = sweep_point_config(c, 3);
  EXPECT_EQ(p3.train.dp.grad_acc, 8u);
  EXPECT_DOUBLE_EQ(p3.train.dp.noise_multiplier, 1.0);
  EXPECT_DOUBLE_EQ(p3.train.dp.clip_norm, 1.0);
  EXPECT_EQ(p3.train.seed, 6u);
  EXPECT_EQ(p3.train.dp.seed, 6u);
  EXPECT_EQ(p3.run_id, "run_p3");
  EXPECT_THROW(sweep_point_config(c, 6), ConfigError);
}

TEST(SweepTest, SinglePointMatchesAPlainRun) {
  TempDir dir("sweep1");
  ExperimentConfig c = parse_experiment_config(
      with(kSmallRun, "sweep.sigma = 1.0\noutput.run_id = one"));
  c.output_dir = dir.path();
  const auto rows = run_sweep(c);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].status, "ok");
  const std::string frontier = read_text(dir.path() / "one_frontier.csv");
  EXPECT_EQ(frontier.substr(0, frontier.find('\n')), kFrontierCsvHeader);

  ExperimentConfig plain = c;
  plain.sweep = {};
  plain.run_id = "plain";
  const RunSummary run = run_experiment(plain);
  EXPECT_EQ(read_text(dir.path() / "one_p0.csv"), read_text(run.csv_path));
  EXPECT_EQ(read_params(dir.path() / "one_p0.params"),
            read_params(run.params_path));
}

TEST(SweepTest, RerunningAPointReproducesItsRow) {
  TempDir dir("sweep2");
  ExperimentConfig c = parse_experiment_config(
      with(kSmallRun, "sweep.grad_acc = 4, 16\nsweep.clip = 0.5, 2\n"
                      "output.run_id = grid"));
  c.output_dir = dir.path();
  const auto rows = run_sweep(c);
  ASSERT_EQ(rows.size(), 4u);
  const std::string frontier = read_text(dir.path() / "grid_frontier.csv");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ExperimentConfig point = sweep_point_config(c, i);
    point.run_id = "again";
    const RunSummary again = run_experiment(point);
    FrontierRow row;
    row.grad_acc = point.train.dp.grad_acc;
    row.sigma = point.train.dp.noise_multiplier;
    row.clip = point.train.dp.clip_norm;
    row.seed = point.train.seed;
    summarize_point(again.records, c.sweep.epsilon_cap, row);
    const std::string line = format_frontier_csv(std::vector<FrontierRow>{row});
    const std::string body = line.substr(line.find('\n') + 1);
    EXPECT_NE(frontier.find(body), std::string::npos) << body;
  }
}

TEST(SweepTest, FailingPointIsReportedNotFatal) {
  TempDir dir("sweep3");
  // 80 training examples cannot fill an effective batch of 128.
  ExperimentConfig c = parse_experiment_config(
      with(kSmallRun, "sweep.grad_acc = 8, 128\noutput.run_id = mixed"));
  c.output_dir = dir.path();
  std::ostringstream log;
  const auto rows = run_sweep(c, &log);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].status, "ok");
  EXPECT_EQ(rows[1].status.rfind("failed: ", 0), 0u) << rows[1].status;
  EXPECT_EQ(rows[1].status.find(','), std::string::npos);
  EXPECT_FALSE(log.str().empty());
}

TEST(SummarizePointTest, CapAndTies) {
  std::vector<RunRecord> records(4);
  for (int i = 0; i < 4; ++i) {
    records[i].step = i + 1;
    records[i].epoch = i;
    records[i].epsilon = 1.0 + i;
    records[i].snr = 2.0;
  }
  records[0].accuracy = 0.5;
  records[1].accuracy = 0.8;
  records[2].accuracy = 0.8;
  records[3].accuracy = 0.9;
  FrontierRow row;
  summarize_point(records, std::nullopt, row);
  EXPECT_EQ(*row.best_epoch, 3);
  FrontierRow capped;
  summarize_point(records, 3.5, capped);
  EXPECT_DOUBLE_EQ(*capped.best_accuracy, 0.8);
  EXPECT_EQ(*capped.best_epoch, 1);
  EXPECT_DOUBLE_EQ(*capped.epsilon_at_best, 2.0);
  EXPECT_DOUBLE_EQ(*capped.final_epsilon, 4.0);
  EXPECT_DOUBLE_EQ(*capped.mean_snr, 2.0);
  EXPECT_EQ(capped.status, "ok");
  FrontierRow none;
  summarize_point(records, 0.5, none);
  EXPECT_FALSE(none.best_accuracy.has_value());
  EXPECT_EQ(none.status, "no_epoch_under_cap");
}

TEST(AccountRowTest, FormatAndMonotonicity) {
  EXPECT_EQ(account_row(1000, 10, 1.0, 0, 1e-5), "0.01,0,0,");
  auto epsilon_of = [](const std::string& row) {
    std::stringstream ss(row);
    std::string field;
    for (int i = 0; i < 3; ++i) std::getline(ss, field, ',');
    return std::stod(field);
  };
  const std::string row = account_row(60000, 256, 1.1, 60, 1e-5);
  EXPECT_EQ(row.rfind("0.00426666667,14040,", 0), 0u) << row;
  EXPECT_LT(epsilon_of(account_row(60000, 256, 2.2, 60, 1e-5)), epsilon_of(row));
  EXPECT_THROW(account_row(10, 20, 1.0, 1, 1e-5), ConfigError);
}

TEST(ParamsBlobTest, ByteLayoutAndRoundTrip) {
  TempDir dir("blob");
  const std::vector<double> values{1.0, -0.5, 1e-300};
  write_params(dir.path() / "p", values);
  const std::string bytes = read_text(dir.path() / "p");
  ASSERT_EQ(bytes.size(), 8u + 8u + 3u * 8u);
  EXPECT_EQ(bytes.substr(0, 8), "NANODPP1");
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 3u);
  // 1.0 is 0x3FF0000000000000; little-endian puts 0xF0, 0x3F last.
  EXPECT_EQ(static_cast<unsigned char>(bytes[16 + 6]), 0xF0u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[16 + 7]), 0x3Fu);
  EXPECT_EQ(read_params(dir.path() / "p"), values);
  write_text(dir.path() / "bad", bytes.substr(0, 20));
  EXPECT_THROW(read_params(dir.path() / "bad"), FormatError);
}

}  // namespace
}  // namespace nanodp
