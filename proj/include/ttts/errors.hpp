// Copyright 2026 The ttts Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace ttts {

/// Base class for all ttts errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration values or incompatible option combinations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Durations do not partition the frame axis (sum mismatch, zero spans, ...).
class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// A phoneme index falls outside the inventory.
class VocabularyError : public Error {
 public:
  using Error::Error;
};

/// A speaker tag is not present in the registry.
class RegistryError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values were produced where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed or empty inputs to an operation.
class InputError : public Error {
 public:
  using Error::Error;
};

/// The operation needs a feature that is disabled in the current config.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// File I/O failures (missing, truncated, unwritable).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint container problems: bad magic/version, hash mismatch,
/// or incompatibility with the requesting configuration.
class CheckpointError : public IoError {
 public:
  using IoError::IoError;
};

/// Degenerate speaker statistics (e.g. non-positive standard deviation).
class StatsError : public Error {
 public:
  using Error::Error;
};

/// Transient failure of an external transcription service; retriable.
class AsrError : public Error {
 public:
  using Error::Error;
};

}  // namespace ttts
