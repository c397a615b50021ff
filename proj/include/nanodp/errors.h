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

#ifndef NANODP_ERRORS_H_
#define NANODP_ERRORS_H_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace nanodp {

// Root of every error raised by the library. The CLI maps ConfigError to exit
// code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents that do not agree for the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration. `key` names the offending field (dotted path for
// config-file keys, parameter name otherwise).
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& message)
      : Error(key + ": " + message), key_(std::move(key)) {}

  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

// Bad caller-supplied data (label out of range, wrong example shape).
class InputError : public Error {
 public:
  using Error::Error;
};

// Broken internal contract, e.g. a tape replayed against the wrong gradient.
class InternalError : public Error {
 public:
  using Error::Error;
};

// The training loop violated the accumulation protocol.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Privacy accounting could not produce a finite value.
class AccountingError : public Error {
 public:
  using Error::Error;
};

// Model spec that would mix information across examples.
class PrivacyViolationError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Non-finite values reached the optimizer.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed input file. `offset` is the byte offset where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& message, std::uint64_t offset)
      : Error(message + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace nanodp

#endif  // NANODP_ERRORS_H_
