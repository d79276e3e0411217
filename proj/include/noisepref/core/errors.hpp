// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace noisepref {

/// Invalid configuration, dimension mismatch or malformed input file.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A state went non-finite while rolling out a trial.
class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string& what, std::size_t timestep)
      : std::runtime_error(what + " (first bad timestep " + std::to_string(timestep) + ")"),
        timestep_(timestep) {}

  std::size_t timestep() const noexcept { return timestep_; }

 private:
  std::size_t timestep_;
};

/// Optimizer-level failure; carries the name of the offending tensor when known.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::string tensor = {})
      : std::runtime_error(tensor.empty() ? what : what + " in tensor " + tensor),
        tensor_(std::move(tensor)) {}

  const std::string& tensor() const noexcept { return tensor_; }

 private:
  std::string tensor_;
};

/// Too many divergent trials during an evaluation.
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace noisepref
