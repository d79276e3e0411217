// SPDX-License-Identifier: Apache-2.0
//
// Univariate function computation: a constant scalar input x for the whole
// trial, target g(x) at the readout step(s).
#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <string_view>

#include "noisepref/core/rollout.hpp"

namespace noisepref {

enum class FunctionTarget { Sin, Tanh };
enum class ReadoutMode { Deterministic, Random };

struct FunctionTaskConfig {
  FunctionTarget target = FunctionTarget::Sin;
  int steps = 100;
  ReadoutMode readout = ReadoutMode::Deterministic;

  double lower() const { return target == FunctionTarget::Sin ? 0.0 : -4.0; }
  double upper() const { return target == FunctionTarget::Sin ? 2.0 * std::numbers::pi : 4.0; }
  double operator()(double x) const { return target == FunctionTarget::Sin ? std::sin(x) : std::tanh(x); }

  /// First (0-based) row eligible for the random readout; the final row is always read.
  int random_readout_first() const { return static_cast<int>(std::lround(0.7 * steps)) - 1; }

  void validate() const {
    if (steps < 1) throw ConfigError("function task needs at least one timestep");
    if (readout == ReadoutMode::Random && random_readout_first() > steps - 2)
      throw ConfigError("random readout needs more timesteps");
  }

  friend bool operator==(const FunctionTaskConfig&, const FunctionTaskConfig&) = default;
};

inline std::string_view to_string(FunctionTarget t) { return t == FunctionTarget::Sin ? "sin" : "tanh"; }
inline std::string_view to_string(ReadoutMode r) { return r == ReadoutMode::Deterministic ? "deterministic" : "random"; }

inline FunctionTarget parse_function_target(std::string_view s) {
  if (s == "sin") return FunctionTarget::Sin;
  if (s == "tanh") return FunctionTarget::Tanh;
  throw ConfigError("unknown function target '" + std::string(s) + "' (expected sin or tanh)");
}

inline ReadoutMode parse_readout_mode(std::string_view s) {
  if (s == "deterministic") return ReadoutMode::Deterministic;
  if (s == "random") return ReadoutMode::Random;
  throw ConfigError("unknown readout mode '" + std::string(s) + "' (expected deterministic or random)");
}

/// steps x 1 input matrix holding x at every row.
inline Matrix function_inputs(const FunctionTaskConfig& config, double x) {
  return Matrix::Constant(config.steps, 1, x);
}

/// Trial i draws x from rng.substream(i) index 0 and the random readout row from index 1.
inline TrialBatch gen_function_batch(const FunctionTaskConfig& config, std::size_t batch_size, const RngStream& rng) {
  config.validate();
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  TrialBatch batch;
  batch.inputs.reserve(batch_size);
  const int last = config.steps - 1;
  for (std::size_t i = 0; i < batch_size; ++i) {
    const RngStream trial = rng.substream(i);
    const double x = config.lower() + (config.upper() - config.lower()) * (1.0 - trial.uniform(0));
    batch.inputs.push_back(function_inputs(config, x));
    batch.targets.push_back(Matrix::Constant(config.steps, 1, config(x)));
    ReadoutMask mask(static_cast<std::size_t>(config.steps), 0);
    mask[static_cast<std::size_t>(last)] = 1;
    if (config.readout == ReadoutMode::Random) {
      const auto row = trial.uniform_int(1, config.random_readout_first(), last - 1);
      mask[static_cast<std::size_t>(row)] = 1;
    }
    batch.masks.push_back(std::move(mask));
    batch.init_index.push_back(0);
  }
  return batch;
}

struct FunctionTask {
  FunctionTaskConfig config;

  TrialBatch make_batch(std::int64_t, std::size_t batch_size, const RngStream& rng) const {
    return gen_function_batch(config, batch_size, rng);
  }
};

}  // namespace noisepref
