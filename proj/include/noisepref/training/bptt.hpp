// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode gradients through unrolled noisy trials. The realized noise
// draws are constants of the forward pass, so the gradient is exact for them.
#pragma once

#include <vector>

#include "noisepref/core/parallel.hpp"
#include "noisepref/core/rollout.hpp"
#include "noisepref/training/adam.hpp"
#include "noisepref/training/loss.hpp"
#include "noisepref/training/spectral_norm.hpp"

namespace noisepref {

/// reg_coeff * sigma_max(W_rec)^2, estimated by power iteration warm-started from `warm`.
struct SpectralPenalty {
  double coeff = 0.0;
  int iters = 30;
  Vector warm;
};

struct GradientResult {
  double loss = 0.0;       // data MSE + penalty
  double data_loss = 0.0;  // masked MSE
  double reg_term = 0.0;   // coeff * sigma_max^2
  GradientSet grads;
};

namespace detail {

// Accumulates d(sum of scale * squared error)/d(theta) of one trial into g.
inline void backward_trial(const NetworkParams& params, const TrialTrace& trace, const Matrix& targets,
                           const ReadoutMask& mask, double scale, const ClosedLoop* loop, GradientSet& g) {
  const Eigen::Index steps = trace.states.rows();
  const Eigen::Index n = params.n();
  const double gamma = params.gamma();
  const ActivationSpec& act = params.activation;

  Vector dh = Vector::Zero(n);
  Vector dpos = loop ? Vector::Zero(loop->dims) : Vector();
  Vector dz(params.p()), da(n), h_prev(n);
  const Matrix& scored = loop ? trace.positions : trace.outputs;

  for (Eigen::Index t = steps - 1; t >= 0; --t) {
    const bool marked = mask[static_cast<std::size_t>(t)] != 0;
    if (loop) {
      if (marked) dpos += 2.0 * scale * (scored.row(t) - targets.row(t)).transpose();
      dz = loop->dt * dpos;
    } else if (marked) {
      dz = 2.0 * scale * (scored.row(t) - targets.row(t)).transpose();
    } else {
      dz.setZero();
    }
    if (loop || marked) {
      g.w_out.noalias() += dz * trace.states.row(t);
      g.b_out += dz;
      dh.noalias() += params.w_out.transpose() * dz;
    }

    for (Eigen::Index i = 0; i < n; ++i) da(i) = gamma * act.derivative(trace.pre(t, i)) * dh(i);
    if (t > 0)
      h_prev = trace.states.row(t - 1).transpose();
    else
      h_prev = params.h0.col(trace.init_index);
    g.w_rec.noalias() += da * h_prev.transpose();
    if (params.m() > 0) g.w_in.noalias() += da * trace.inputs.row(t);
    g.b_in += da;
    dh *= (1.0 - gamma);
    dh.noalias() += params.w_rec.transpose() * da;
    if (loop) dpos.noalias() += params.w_in.leftCols(loop->dims).transpose() * da;
  }
  g.h0.col(trace.init_index) += dh;
}

}  // namespace detail

/// Loss and gradient of [masked MSE + penalty] for one batch; trial i uses
/// noise_rng.substream(i). Per-trial gradients are summed in trial order, so
/// the result does not depend on `threads`.
inline GradientResult bptt_gradient(const NetworkParams& params, const NoiseConfig& noise, const TrialBatch& batch,
                                    const RngStream& noise_rng, SpectralPenalty* penalty = nullptr, int threads = 1) {
  params.validate();
  noise.validate();
  const std::size_t trials = batch.size();
  if (trials == 0) throw ConfigError("empty batch");
  if (batch.targets.size() != trials || batch.masks.size() != trials || batch.init_index.size() != trials)
    throw ConfigError("batch fields have inconsistent trial counts");
  const ClosedLoop* loop = batch.closed_loop ? &*batch.closed_loop : nullptr;
  const Eigen::Index dims = loop ? loop->dims : params.p();
  const std::size_t count = masked_entry_count(batch.masks, dims);
  const double scale = 1.0 / static_cast<double>(count);

  std::vector<GradientSet> partial(trials);
  std::vector<double> sse(trials, 0.0);
  parallel_for(trials, threads, [&](std::size_t i) {
    const Vector start = loop ? Vector(batch.start_positions.row(static_cast<Eigen::Index>(i)).transpose()) : Vector();
    const TrialTrace trace = rollout(params, noise, batch.inputs[i], batch.init_index[i], noise_rng.substream(i), loop,
                                     loop ? &start : nullptr);
    const Matrix& scored = scored_rows(trace, batch);
    const Matrix& target = batch.targets[i];
    if (target.rows() != scored.rows() || target.cols() != scored.cols())
      throw ConfigError("target shape does not match the scored rows");
    if (static_cast<Eigen::Index>(batch.masks[i].size()) != scored.rows())
      throw ConfigError("mask length does not match the trial length");
    double s = 0.0;
    for (Eigen::Index t = 0; t < scored.rows(); ++t)
      if (batch.masks[i][static_cast<std::size_t>(t)]) s += (scored.row(t) - target.row(t)).squaredNorm();
    sse[i] = s;
    partial[i] = GradientSet::zeros_like(params);
    detail::backward_trial(params, trace, target, batch.masks[i], scale, loop, partial[i]);
  });

  GradientResult result;
  result.grads = GradientSet::zeros_like(params);
  double total = 0.0;
  for (std::size_t i = 0; i < trials; ++i) {
    total += sse[i];
    result.grads += partial[i];
  }
  result.data_loss = total * scale;
  if (penalty && penalty->coeff > 0.0) {
    const SingularEstimate est = power_iteration(params.w_rec, penalty->iters, penalty->warm);
    penalty->warm = est.v;
    result.reg_term = penalty->coeff * est.sigma_sq;
    result.grads.w_rec += penalty->coeff * est.gradient();
  }
  result.loss = result.data_loss + result.reg_term;
  return result;
}

}  // namespace noisepref
