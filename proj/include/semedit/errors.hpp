// Copyright (C) 2026 The semedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace semedit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration values (schedules, loss weights, model sizes, files).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed call arguments: shape mismatches, out-of-range indices.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or degenerate geometry met during a computation.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, int step = -1)
      : Error(step >= 0 ? what + " (step " + std::to_string(step) + ")" : what), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

/// Training loss became non-finite.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, long iteration)
      : Error(what + " at iteration " + std::to_string(iteration)), iteration_(iteration) {}
  long iteration() const noexcept { return iteration_; }

 private:
  long iteration_;
};

/// A name could not be resolved against a lexicon or registry.
class LookupError : public Error {
 public:
  LookupError(const std::string& what, std::vector<std::string> candidates)
      : Error(what), candidates_(std::move(candidates)) {}
  const std::vector<std::string>& candidates() const noexcept { return candidates_; }

 private:
  std::vector<std::string> candidates_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace semedit
