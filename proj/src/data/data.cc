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

#include "nanodp/data.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include "nanodp/errors.h"
#include "nanodp/rng.h"

namespace nanodp {
namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

class BigEndianReader {
 public:
  BigEndianReader(const std::vector<std::uint8_t>& bytes, std::string name)
      : bytes_(bytes), name_(std::move(name)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_++];
    return v;
  }

  const std::uint8_t* take(std::size_t n) {
    need(n);
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(name_ + ": truncated, needed " + std::to_string(n) +
                            " more bytes but " +
                            std::to_string(bytes_.size() - pos_) + " remain",
                        pos_);
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "0x%08X", v);
  return buf;
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b, 4);
}

}  // namespace

Shape Dataset::example_shape() const {
  return Shape(examples.shape().begin() + 1, examples.shape().end());
}

template <typename T>
Tensor<T> Dataset::example(std::size_t index) const {
  if (index >= size()) {
    throw InputError("example index " + std::to_string(index) +
                     " out of range for " + std::to_string(size()));
  }
  const std::size_t stride = examples.numel() / examples.dim(0);
  const double* p = examples.data() + index * stride;
  return Tensor<T>(example_shape(), std::vector<T>(p, p + stride));
}

template Tensor<float> Dataset::example<float>(std::size_t) const;
template Tensor<double> Dataset::example<double>(std::size_t) const;

void Dataset::validate() const {
  if (labels.empty()) throw ConfigError("data", "dataset is empty");
  if (examples.rank() < 2 || examples.dim(0) != labels.size()) {
    throw ConfigError("data", "examples " +
                                  shape_to_string(examples.shape()) +
                                  " do not match " +
                                  std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw ConfigError("data", "label " + std::to_string(labels[i]) +
                                    " of example " + std::to_string(i) +
                                    " outside [0, " +
                                    std::to_string(num_classes) + ")");
    }
  }
}

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path, Split split) {
  const std::vector<std::uint8_t> image_bytes = read_file(images_path);
  const std::vector<std::uint8_t> label_bytes = read_file(labels_path);

  BigEndianReader images(image_bytes, images_path.string());
  const std::uint32_t image_magic = images.u32();
  if (image_magic != kIdxImageMagic) {
    throw FormatError(images_path.string() + ": expected magic " +
                          hex32(kIdxImageMagic) + ", got " + hex32(image_magic),
                      0);
  }
  const std::uint32_t count = images.u32();
  const std::uint32_t rows = images.u32();
  const std::uint32_t cols = images.u32();
  if (count == 0 || rows == 0 || cols == 0) {
    throw FormatError(images_path.string() + ": zero image count or extent", 4);
  }

  BigEndianReader labels(label_bytes, labels_path.string());
  const std::uint32_t label_magic = labels.u32();
  if (label_magic != kIdxLabelMagic) {
    throw FormatError(labels_path.string() + ": expected magic " +
                          hex32(kIdxLabelMagic) + ", got " + hex32(label_magic),
                      0);
  }
  const std::uint32_t label_count = labels.u32();
  if (label_count != count) {
    throw FormatError(labels_path.string() + ": " +
                          std::to_string(label_count) + " labels for " +
                          std::to_string(count) + " images",
                      4);
  }

  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  const std::uint8_t* raw = images.take(pixels * count);
  const std::uint8_t* raw_labels = labels.take(count);

  Dataset ds;
  ds.split = split;
  ds.provenance = "idx:" + images_path.string();
  std::vector<double> values(pixels * count);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = raw[i] / 255.0;
  ds.examples = Tensor<double>({count, 1, rows, cols}, std::move(values));
  ds.labels.assign(raw_labels, raw_labels + count);
  ds.num_classes =
      static_cast<std::size_t>(*std::max_element(ds.labels.begin(),
                                                 ds.labels.end())) + 1;
  return ds;
}

void write_idx(const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path, std::size_t rows,
               std::size_t cols, const std::vector<std::uint8_t>& pixels,
               const std::vector<std::uint8_t>& labels) {
  if (pixels.size() != labels.size() * rows * cols) {
    throw DimensionError("write_idx: pixel count does not match labels");
  }
  std::ofstream img(images_path, std::ios::binary | std::ios::trunc);
  std::ofstream lab(labels_path, std::ios::binary | std::ios::trunc);
  if (!img || !lab) throw IoError("cannot write IDX files");
  put_u32(img, kIdxImageMagic);
  put_u32(img, static_cast<std::uint32_t>(labels.size()));
  put_u32(img, static_cast<std::uint32_t>(rows));
  put_u32(img, static_cast<std::uint32_t>(cols));
  img.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
  put_u32(lab, kIdxLabelMagic);
  put_u32(lab, static_cast<std::uint32_t>(labels.size()));
  lab.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
  if (!img || !lab) throw IoError("failed writing IDX files");
}

Dataset load_labeled_csv(const std::filesystem::path& path, Split split) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  const std::string text(bytes.begin(), bytes.end());
  std::size_t pos = 0;
  std::size_t features = 0;
  bool header = true;
  std::vector<double> values;
  Dataset ds;
  ds.split = split;
  ds.provenance = "csv:" + path.string();
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string line = text.substr(pos, eol - pos);
    const std::size_t line_offset = pos;
    pos = eol + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (header) {
      if (fields.size() < 2 || fields[0] != "label") {
        throw FormatError(path.string() + ": header must be label,f0,f1,...",
                          line_offset);
      }
      features = fields.size() - 1;
      header = false;
      continue;
    }
    if (fields.size() != features + 1) {
      throw FormatError(path.string() + ": expected " +
                            std::to_string(features + 1) + " fields, got " +
                            std::to_string(fields.size()),
                        line_offset);
    }
    for (std::size_t i = 0; i < fields.size(); ++i) {
      char* end = nullptr;
      const double v = std::strtod(fields[i].c_str(), &end);
      if (fields[i].empty() || end != fields[i].c_str() + fields[i].size() ||
          !std::isfinite(v)) {
        throw FormatError(path.string() + ": bad number '" + fields[i] + "'",
                          line_offset);
      }
      if (i == 0) {
        if (v < 0 || v != std::floor(v)) {
          throw FormatError(path.string() + ": label must be a non-negative "
                                            "integer",
                            line_offset);
        }
        ds.labels.push_back(static_cast<int>(v));
      } else {
        values.push_back(v);
      }
    }
  }
  if (header) throw FormatError(path.string() + ": missing header", 0);
  if (ds.labels.empty()) throw FormatError(path.string() + ": no rows", pos);
  ds.examples = Tensor<double>({ds.labels.size(), features}, std::move(values));
  ds.num_classes =
      static_cast<std::size_t>(*std::max_element(ds.labels.begin(),
                                                 ds.labels.end())) + 1;
  return ds;
}

Dataset synth_blobs(const BlobSpec& spec, std::uint64_t stream, Split split) {
  if (spec.per_class == 0) throw ConfigError("data.synth.per_class", "must be >= 1");
  if (spec.num_classes < 2) throw ConfigError("data.synth.classes", "must be >= 2");
  const std::size_t dim = shape_numel(spec.example_shape);
  const std::size_t n = spec.num_classes * spec.per_class;
  const bool one_hot = dim >= spec.num_classes;
  const double offset = 1.0 / std::sqrt(2.0);

  std::vector<double> values(n * dim);
  std::vector<int> labels(n);
  CounterRng rng(spec.seed, RngDomain::kSynthData, {stream});
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    for (std::size_t j = 0; j < spec.per_class; ++j) {
      const std::size_t idx = k * spec.per_class + j;
      labels[idx] = static_cast<int>(k);
      double* x = values.data() + idx * dim;
      for (std::size_t c = 0; c < dim; ++c) {
        x[c] = spec.spread == 0.0 ? 0.0 : spec.spread * rng.next_gaussian();
      }
      if (one_hot) {
        x[k] += offset;
      } else {
        x[0] += static_cast<double>(k);
      }
    }
  }
  Dataset ds;
  Shape shape{n};
  shape.insert(shape.end(), spec.example_shape.begin(), spec.example_shape.end());
  ds.examples = Tensor<double>(std::move(shape), std::move(values));
  ds.labels = std::move(labels);
  ds.num_classes = spec.num_classes;
  ds.split = split;
  ds.provenance = "synth_blobs:seed=" + std::to_string(spec.seed) +
                  ",stream=" + std::to_string(stream);
  return ds;
}

std::vector<std::vector<std::size_t>> sample_batches(std::size_t n,
                                                     std::size_t batch,
                                                     std::uint64_t seed,
                                                     std::uint64_t epoch) {
  if (batch == 0 || batch > n) {
    throw ConfigError("dp.grad_acc", "effective batch " +
                                         std::to_string(batch) +
                                         " must lie in [1, " +
                                         std::to_string(n) + "]");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  CounterRng rng(seed, RngDomain::kShuffle, {epoch});
  // Fisher-Yates from the back.
  for (std::size_t i = n; i-- > 1;) {
    std::swap(perm[i], perm[rng.next_below(i + 1)]);
  }
  std::vector<std::vector<std::size_t>> batches(n / batch);
  for (std::size_t b = 0; b < batches.size(); ++b) {
    batches[b].assign(perm.begin() + b * batch, perm.begin() + (b + 1) * batch);
  }
  return batches;
}

}  // namespace nanodp
