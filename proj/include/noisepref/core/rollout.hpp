// SPDX-License-Identifier: Apache-2.0
//
// Trials as the optimizer sees them: inputs, targets, readout masks, and an
// optional closed loop in which the first input columns are the position of
// a particle whose velocity is the network output.
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "noisepref/core/network.hpp"

namespace noisepref {

/// pos_{t+1} = pos_t + dt (z_{t+1} + xi_t), xi_t ~ N(0, velocity_variance I).
/// The positions occupy input columns [0, dims).
struct ClosedLoop {
  Eigen::Index dims = 2;
  double dt = 0.02;
  double velocity_variance = 0.0005;
};

using ReadoutMask = std::vector<std::uint8_t>;

struct TrialBatch {
  std::vector<Matrix> inputs;          // T x m per trial
  std::vector<Matrix> targets;         // T x p (open loop) or T x dims (closed loop)
  std::vector<ReadoutMask> masks;      // T flags per trial
  std::vector<Eigen::Index> init_index;
  std::optional<ClosedLoop> closed_loop;
  Matrix start_positions;              // trials x dims, closed loop only

  std::size_t size() const { return inputs.size(); }
};

/// Everything a backward pass needs from one forward pass.
struct TrialTrace {
  Matrix inputs;     // T x m, with the realized position feedback in closed loop
  Matrix pre;        // T x n noisy pre-activations
  Matrix states;     // T x n
  Matrix outputs;    // T x p
  Matrix positions;  // T x dims (closed loop only), row t is the position after update t
  Eigen::Index init_index = 0;
};

inline TrialTrace rollout(const NetworkParams& params, const NoiseConfig& noise, const Matrix& inputs,
                          Eigen::Index init_index, const RngStream& trial_rng, const ClosedLoop* loop = nullptr,
                          const Vector* start_position = nullptr) {
  const Eigen::Index steps = inputs.rows();
  if (steps < 1) throw ConfigError("a trial needs at least one timestep");
  if (inputs.cols() != params.m()) throw ConfigError("input width does not match W_in");
  if (init_index < 0 || init_index >= params.initial_states()) throw ConfigError("initial state index out of range");
  if (loop) {
    if (params.p() != loop->dims) throw ConfigError("closed loop needs one output per position dimension");
    if (params.m() < loop->dims) throw ConfigError("closed loop needs position feedback inputs");
    if (!start_position || start_position->size() != loop->dims) throw ConfigError("closed loop needs a start position");
  }

  TrialTrace trace;
  trace.init_index = init_index;
  trace.inputs = inputs;
  trace.pre.resize(steps, params.n());
  trace.states.resize(steps, params.n());
  trace.outputs.resize(steps, params.p());
  const TrialNoise draws(trial_rng);
  RngStream velocity_rng;
  double velocity_sd = 0.0;
  Vector pos;
  if (loop) {
    trace.positions.resize(steps, loop->dims);
    velocity_rng = trial_rng.substream(Channel::Velocity);
    velocity_sd = std::sqrt(loop->velocity_variance);
    pos = *start_position;
  }

  Vector h = params.h0.col(init_index);
  Vector u, pre, next, draw, z;
  for (Eigen::Index t = 0; t < steps; ++t) {
    if (loop) trace.inputs.row(t).head(loop->dims) = pos.transpose();
    u = trace.inputs.row(t).transpose();
    detail::forward_update(params, noise, h, u, draws, static_cast<std::uint64_t>(t), pre, next, draw);
    if (!next.allFinite()) throw SimulationError("state diverged", static_cast<std::size_t>(t));
    h.swap(next);
    z = readout(params, h);
    trace.pre.row(t) = pre.transpose();
    trace.states.row(t) = h.transpose();
    trace.outputs.row(t) = z.transpose();
    if (loop) {
      for (Eigen::Index k = 0; k < loop->dims; ++k) {
        const double xi = velocity_sd > 0.0
                              ? velocity_sd * velocity_rng.normal(static_cast<std::uint64_t>(t * loop->dims + k))
                              : 0.0;
        pos(k) += loop->dt * (z(k) + xi);
      }
      if (!pos.allFinite()) throw SimulationError("particle position diverged", static_cast<std::size_t>(t));
      trace.positions.row(t) = pos.transpose();
    }
  }
  return trace;
}

/// Rows compared against the targets: outputs in open loop, positions in closed loop.
inline const Matrix& scored_rows(const TrialTrace& trace, const TrialBatch& batch) {
  return batch.closed_loop ? trace.positions : trace.outputs;
}

}  // namespace noisepref
