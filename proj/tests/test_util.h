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

// Shared test helpers. Randomness here comes from std::mt19937_64 so test
// inputs never share a generator with the code under test.

#ifndef NANODP_TESTS_TEST_UTIL_H_
#define NANODP_TESTS_TEST_UTIL_H_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nanodp/tensor.h"

namespace nanodp::testing {

inline Tensor<double> random_tensor(std::mt19937_64& gen, Shape shape,
                                    double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = dist(gen);
  return t;
}

inline std::vector<double> random_vector(std::mt19937_64& gen, std::size_t n,
                                         double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = dist(gen);
  return v;
}

// Central difference of f with respect to x[i], step h.
inline double central_difference(const std::function<double()>& f, double& x,
                                 double h) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

// |a - b| / max(|a|, |b|, floor): relative error with an absolute floor for
// entries near zero.
inline double relative_error(double a, double b, double floor = 1e-6) {
  const double scale = std::fmax(std::fmax(std::fabs(a), std::fabs(b)), floor);
  return std::fabs(a - b) / scale;
}

// Creates a fresh directory under the system temp dir; removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("nanodp_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << s;
}

}  // namespace nanodp::testing

#endif  // NANODP_TESTS_TEST_UTIL_H_
