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

// nanodp command-line entry point.
//
//   nanodp run <config>
//   nanodp sweep <config>
//   nanodp account --n N --batch B --sigma S --epochs E --delta D
//
// Exit status: 0 on success, 1 on a runtime failure, 2 on a configuration
// or usage error.

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "nanodp/cli.h"
#include "nanodp/errors.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Per-example DPSGD training, sweeps and privacy accounting"};
  app.require_subcommand(1);

  std::string run_config;
  CLI::App* run = app.add_subcommand("run", "train once from a config file");
  run->add_option("config", run_config, "config file")->required();

  std::string sweep_config;
  CLI::App* sweep = app.add_subcommand("sweep", "train every sweep grid point");
  sweep->add_option("config", sweep_config, "config file")->required();

  std::int64_t n = 0, batch = 0, epochs = 0;
  double sigma = 0.0, delta = 0.0;
  CLI::App* account =
      app.add_subcommand("account", "print q,T,epsilon,best_order");
  account->add_option("--n", n, "training set size")->required();
  account->add_option("--batch", batch, "effective batch size")->required();
  account->add_option("--sigma", sigma, "noise multiplier")->required();
  account->add_option("--epochs", epochs, "epochs")->required();
  account->add_option("--delta", delta, "target delta")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*run) {
      const nanodp::RunSummary s =
          nanodp::run_experiment(nanodp::load_experiment_config(run_config));
      std::cout << s.summary_line() << std::endl;
    } else if (*sweep) {
      const nanodp::ExperimentConfig config =
          nanodp::load_experiment_config(sweep_config);
      const auto rows = nanodp::run_sweep(config, &std::cout);
      std::cout << "frontier="
                << (config.output_dir / (config.run_id + "_frontier.csv"))
                       .string()
                << " points=" << rows.size() << std::endl;
    } else if (*account) {
      std::cout << nanodp::account_row(n, batch, sigma, epochs, delta)
                << std::endl;
    }
  } catch (const nanodp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitRuntime;
  }
  return kExitOk;
}
