// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "noisepref/training/adam.hpp"
#include "noisepref/training/bptt.hpp"
#include "noisepref/training/init.hpp"

namespace noisepref {

struct TrainConfig {
  double lr0 = 0.001;
  double half_life = 2500.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
  std::int64_t batches = 10000;
  std::int64_t batch_size = 32;
  double reg_coeff = 0.0;
  int power_iters = 30;
  NoiseConfig noise;
  std::uint64_t seed = 1;

  static TrainConfig function_defaults() { return {}; }
  static TrainConfig maze_defaults() {
    TrainConfig c;
    c.lr0 = 0.004;
    c.half_life = 1500.0;
    c.batches = 6000;
    c.batch_size = 36;
    c.reg_coeff = 0.001;
    c.noise.sigma_in = 0.0894;
    return c;
  }
  static TrainConfig regulator_defaults() {
    TrainConfig c;
    c.half_life = 4545.0;
    c.batch_size = 1;
    return c;
  }

  AdamConfig adam() const { return {beta1, beta2, epsilon}; }

  void validate() const {
    noise.validate();
    if (!(lr0 > 0.0) || !(half_life > 0.0)) throw ConfigError("lr0 and half_life must be positive");
    if (batches < 1 || batch_size < 1) throw ConfigError("batches and batch_size must be at least 1");
    if (!(reg_coeff >= 0.0)) throw ConfigError("reg_coeff must be non-negative");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon >= 0.0))
      throw ConfigError("ADAM constants out of range");
    if (power_iters < 1) throw ConfigError("power_iters must be at least 1");
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Anything that can produce the k-th training batch from an addressed stream.
template <class T>
concept BatchSource = requires(const T& task, std::int64_t k, std::size_t size, const RngStream& rng) {
  { task.make_batch(k, size, rng) } -> std::convertible_to<TrialBatch>;
};

struct HistoryRow {
  std::int64_t batch = 0;
  double loss = 0.0;  // masked MSE of the batch
  double lr = 0.0;
  double reg = 0.0;
};

struct TrainResult {
  NetworkParams params;
  std::vector<HistoryRow> history;
  bool aborted = false;
  std::string abort_reason;
};

/// Batch k: task draws from RngStream(seed).substream(k).substream(Channel::Task),
/// noise from ...substream(k).substream(Channel::PreActivation).
template <BatchSource Task>
TrainResult train(const Task& task, NetworkParams init, const TrainConfig& config, int threads = 1,
                  const std::function<void(const HistoryRow&)>& on_batch = {}) {
  config.validate();
  init.validate();
  TrainResult result;
  result.params = std::move(init);
  result.history.reserve(static_cast<std::size_t>(config.batches));
  OptimizerState state = OptimizerState::zeros_like(result.params);
  SpectralPenalty penalty{config.reg_coeff, config.power_iters, {}};
  const RngStream root(config.seed);
  int bad_streak = 0;
  constexpr int kMaxBadBatches = 10;

  for (std::int64_t k = 0; k < config.batches; ++k) {
    const RngStream batch_rng = root.substream(static_cast<std::uint64_t>(k));
    const TrialBatch batch =
        task.make_batch(k, static_cast<std::size_t>(config.batch_size), batch_rng.substream(Channel::Task));
    const double lr = lr_schedule(k, config.lr0, config.half_life);
    HistoryRow row{k, std::nan(""), lr, 0.0};
    bool ok = false;
    GradientResult grad;
    try {
      grad = bptt_gradient(result.params, config.noise, batch, batch_rng.substream(Channel::PreActivation),
                           &penalty, threads);
      ok = std::isfinite(grad.loss);
    } catch (const SimulationError& e) {
      result.abort_reason = e.what();
    }
    if (ok) {
      row.loss = grad.data_loss;
      row.reg = grad.reg_term;
      adam_step(result.params, state, grad.grads, lr, config.adam(), result.params.trainable);
      bad_streak = 0;
    } else if (++bad_streak > kMaxBadBatches) {
      result.history.push_back(row);
      result.aborted = true;
      if (result.abort_reason.empty()) result.abort_reason = "loss non-finite";
      result.abort_reason = "training aborted after " + std::to_string(bad_streak) +
                            " consecutive non-finite batches: " + result.abort_reason;
      return result;
    }
    result.history.push_back(row);
    if (on_batch) on_batch(row);
  }
  return result;
}

}  // namespace noisepref
