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

#ifndef NANODP_DATA_H_
#define NANODP_DATA_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nanodp/tensor.h"

namespace nanodp {

enum class Split { kTrain, kEval };

// Immutable labeled examples. `examples` is [N x example_shape...].
struct Dataset {
  Tensor<double> examples;
  std::vector<int> labels;
  std::size_t num_classes = 0;
  Split split = Split::kTrain;
  std::string provenance;

  std::size_t size() const { return labels.size(); }
  Shape example_shape() const;

  template <typename T>
  Tensor<T> example(std::size_t index) const;

  // Throws ConfigError unless N >= 1, the tensor and labels agree and every
  // label lies in [0, num_classes).
  void validate() const;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// Big-endian IDX image/label pair (MNIST layout). Pixels are scaled to [0, 1]
// and each example has shape [1 x rows x cols]. num_classes is max label + 1.
// Throws FormatError with the byte offset on a bad magic, a truncated file or
// mismatched counts, IoError if a file cannot be read.
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path,
                 Split split = Split::kTrain);

// Writes an IDX pair; pixels are given as 0..255 bytes.
void write_idx(const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path,
               std::size_t rows, std::size_t cols,
               const std::vector<std::uint8_t>& pixels,
               const std::vector<std::uint8_t>& labels);

// Header "label,f0,f1,...", one example per row.
Dataset load_labeled_csv(const std::filesystem::path& path,
                         Split split = Split::kTrain);

struct BlobSpec {
  std::size_t num_classes = 2;
  std::size_t per_class = 100;
  Shape example_shape = {2};
  double spread = 0.1;
  std::uint64_t seed = 0;
};

// Gaussian clusters around unit-separated means, per_class examples per
// class in class-major order. When the example has at least num_classes
// coordinates, class k's mean is e_k / sqrt(2) (every pair of means at
// distance 1); otherwise the means sit at k * e_0. Each coordinate gets
// N(0, spread^2) noise. `stream` distinguishes splits drawn from one seed.
Dataset synth_blobs(const BlobSpec& spec, std::uint64_t stream = 0,
                    Split split = Split::kTrain);

// Shuffles 0..n-1 with a permutation determined by (seed, epoch) and cuts it
// into floor(n / batch) batches of exactly `batch` indices; the remainder is
// dropped. Throws ConfigError if batch is 0 or exceeds n.
std::vector<std::vector<std::size_t>> sample_batches(std::size_t n,
                                                     std::size_t batch,
                                                     std::uint64_t seed,
                                                     std::uint64_t epoch);

}  // namespace nanodp

#endif  // NANODP_DATA_H_
