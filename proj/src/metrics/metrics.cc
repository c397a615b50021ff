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

#include "nanodp/metrics.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>

#include "nanodp/errors.h"

namespace nanodp {
namespace {

std::string format_optional(const std::optional<double>& v) {
  return v ? format_real(*v) : std::string();
}

double parse_real(std::string_view field, std::uint64_t offset) {
  const std::string s(field);
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw FormatError("run csv: bad number '" + s + "'", offset);
  }
  return v;
}

std::optional<double> parse_optional(std::string_view field,
                                     std::uint64_t offset) {
  if (field.empty()) return std::nullopt;
  return parse_real(field, offset);
}

}  // namespace

RunRecord record_step(std::span<const double> sum_clipped,
                      std::span<const double> noise_total,
                      const StepContext& context) {
  if (sum_clipped.size() != noise_total.size()) {
    throw InternalError("record_step: clipped sum has dimension " +
                        std::to_string(sum_clipped.size()) +
                        " but noise has " + std::to_string(noise_total.size()));
  }
  RunRecord r;
  r.step = context.step;
  r.epoch = context.epoch;
  r.lr = context.lr;
  r.loss = context.loss;
  r.accuracy = context.accuracy;
  r.grad_norm = l2_norm(sum_clipped);
  r.noise_norm = l2_norm(noise_total);
  if (context.noise_multiplier > 0.0) {
    r.snr = r.noise_norm > 0.0 ? r.grad_norm / r.noise_norm
                               : std::numeric_limits<double>::infinity();
  }
  r.epsilon = context.epsilon;
  return r;
}

RunRecord record_step(const FlatGradient& sum_clipped,
                      const FlatGradient& noise_total,
                      const StepContext& context) {
  return record_step(std::span<const double>(sum_clipped.values),
                     std::span<const double>(noise_total.values), context);
}

std::string format_real(double value) {
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  if (std::isnan(value)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", value);
  return buf;
}

std::string format_run_csv(std::span<const RunRecord> records) {
  std::string out(kRunCsvHeader);
  out += '\n';
  for (const RunRecord& r : records) {
    out += std::to_string(r.step);
    out += ',' + std::to_string(r.epoch);
    out += ',' + format_real(r.lr);
    out += ',' + format_real(r.loss);
    out += ',' + format_optional(r.accuracy);
    out += ',' + format_real(r.grad_norm);
    out += ',' + format_real(r.noise_norm);
    out += ',' + format_optional(r.snr);
    out += ',' + format_real(r.epsilon);
    out += '\n';
  }
  return out;
}

void emit_csv(std::span<const RunRecord> records,
              const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  const std::string text = format_run_csv(records);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.close();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<RunRecord> parse_run_csv(std::string_view text) {
  std::vector<RunRecord> records;
  std::size_t pos = 0;
  bool header = true;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    const std::string_view line = text.substr(pos, eol - pos);
    const std::uint64_t line_offset = pos;
    pos = eol + 1;
    if (header) {
      if (line != kRunCsvHeader) {
        throw FormatError("run csv: unexpected header", line_offset);
      }
      header = false;
      continue;
    }
    std::vector<std::string_view> f;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      f.push_back(line.substr(start, comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (f.size() != 9) {
      throw FormatError("run csv: expected 9 fields, got " +
                            std::to_string(f.size()),
                        line_offset);
    }
    RunRecord r;
    r.step = static_cast<std::int64_t>(parse_real(f[0], line_offset));
    r.epoch = static_cast<int>(parse_real(f[1], line_offset));
    r.lr = parse_real(f[2], line_offset);
    r.loss = parse_real(f[3], line_offset);
    r.accuracy = parse_optional(f[4], line_offset);
    r.grad_norm = parse_real(f[5], line_offset);
    r.noise_norm = parse_real(f[6], line_offset);
    r.snr = parse_optional(f[7], line_offset);
    r.epsilon = parse_real(f[8], line_offset);
    records.push_back(r);
  }
  if (header) throw FormatError("run csv: missing header", 0);
  return records;
}

std::optional<double> mean_snr(std::span<const RunRecord> records) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const RunRecord& r : records) {
    if (r.snr) {
      sum += *r.snr;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

}  // namespace nanodp
