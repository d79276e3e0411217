// SPDX-License-Identifier: Apache-2.0
//
// Single-neuron regulator: one ReLU neuron with self-weight w and bias b,
// noise inside and outside the activation, started at the setpoint r:
//
//   h_{t+1} = (1 - gamma) h_t + gamma (ReLU(w h_t + b + eps_in) + eps_out),  h_1 = r
//   loss    = (1/T) sum_{t=1..T} (h_t - r)^2
#pragma once

#include <cmath>
#include <vector>

#include "noisepref/core/parallel.hpp"
#include "noisepref/core/rollout.hpp"

namespace noisepref {

struct RegulatorConfig {
  double r = 0.5;
  double w = -1.0;
  double b = 1.0;
  double sigma_in = 0.0;
  double sigma_out = 1.0;
  int steps = 50;
  double gamma = 0.2;

  /// Bias that puts the deterministic fixed point at the setpoint.
  double setpoint_bias() const { return r * (1.0 - w); }
  NoiseConfig noise() const { return {sigma_in, sigma_out}; }

  void validate() const {
    if (steps < 2) throw ConfigError("regulator needs T >= 2");
    if (!(r >= 0.0)) throw ConfigError("regulator setpoint must be non-negative");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("regulator gamma must lie in (0, 1]");
    noise().validate();
  }
};

/// The regulator as a one-neuron CTRNN with no inputs and direct readout; only the bias is trainable.
inline NetworkParams regulator_network(const RegulatorConfig& c) {
  NetworkParams p;
  p.w_rec = Matrix::Constant(1, 1, c.w);
  p.w_in = Matrix::Zero(1, 0);
  p.b_in = Vector::Constant(1, c.b);
  p.w_out = Matrix::Constant(1, 1, 1.0);
  p.b_out = Vector::Zero(1);
  p.h0 = Matrix::Constant(1, 1, c.r);
  p.tau = 1.0;
  p.dt = c.gamma;
  p.activation = {ActivationKind::ReLU, 10.0};
  p.trainable = {false, false, true, false, false, false};
  return p;
}

/// Loss of one episode; the initial state counts as the first of the T terms.
inline double simulate_regulator(const RegulatorConfig& c, const RngStream& rng) {
  c.validate();
  if (c.steps == 1) return 0.0;
  const NetworkParams net = regulator_network(c);
  const TrialRecord rec = simulate_trial(net, c.noise(), Matrix::Zero(c.steps - 1, 0), rng);
  const double sse = (rec.states.col(0).array() - c.r).square().sum();
  return sse / static_cast<double>(c.steps);
}

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

/// Mean regulator loss over `episodes` episodes; episode e uses rng.substream(e).
inline MonteCarloEstimate regulator_loss_mc(const RegulatorConfig& c, std::size_t episodes, const RngStream& rng,
                                            int threads = 1) {
  if (episodes < 2) throw ConfigError("need at least two episodes");
  std::vector<double> losses(episodes);
  parallel_for(episodes, threads, [&](std::size_t e) { losses[e] = simulate_regulator(c, rng.substream(e)); });
  double sum = 0.0, sq = 0.0;
  for (double l : losses) sum += l;
  const double mean = sum / static_cast<double>(episodes);
  for (double l : losses) sq += (l - mean) * (l - mean);
  const double var = sq / static_cast<double>(episodes - 1);
  return {mean, std::sqrt(var / static_cast<double>(episodes)), episodes};
}

/// Training view of the regulator: T - 1 updates scored against r. The
/// optimizer sees (T - 1)/T times the episode loss, which ADAM's scale
/// invariance makes immaterial.
struct RegulatorTask {
  RegulatorConfig config;

  TrialBatch make_batch(std::int64_t, std::size_t batch_size, const RngStream&) const {
    config.validate();
    if (config.steps < 2) throw ConfigError("regulator training needs T >= 2");
    TrialBatch batch;
    for (std::size_t i = 0; i < batch_size; ++i) {
      batch.inputs.push_back(Matrix::Zero(config.steps - 1, 0));
      batch.targets.push_back(Matrix::Constant(config.steps - 1, 1, config.r));
      batch.masks.emplace_back(static_cast<std::size_t>(config.steps - 1), 1);
      batch.init_index.push_back(0);
    }
    return batch;
  }
};

}  // namespace noisepref
