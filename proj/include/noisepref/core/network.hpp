// SPDX-License-Identifier: Apache-2.0
//
// Continuous-time RNN discretized with Euler's method:
//
//   h' = (1 - gamma) h + gamma (f(W_rec h + W_in u + B_in + eps_in) + eps_out)
//   z  = W_out h + B_out
//
// with gamma = dt / tau and eps_in, eps_out fresh Gaussian draws per neuron
// per step. Noise-in and noise-out networks are the two special cases of
// NoiseConfig; there is a single update rule.
#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "noisepref/core/activation.hpp"
#include "noisepref/core/errors.hpp"
#include "noisepref/core/rng.hpp"

namespace noisepref {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// The trainable tensors of a network. Shared layout for parameters and gradients.
struct TensorSet {
  Matrix w_rec;   // n x n
  Matrix w_in;    // n x m
  Vector b_in;    // n
  Matrix w_out;   // p x n
  Vector b_out;   // p
  Matrix h0;      // n x K, one trainable initial state per column

  /// Calls f(name, tensor) for every tensor in a fixed order.
  template <class Self, class F>
  static void for_each(Self& self, F&& f) {
    f("W_rec", self.w_rec);
    f("W_in", self.w_in);
    f("B_in", self.b_in);
    f("W_out", self.w_out);
    f("B_out", self.b_out);
    f("h0", self.h0);
  }
  template <class F> void for_each(F&& f) { for_each(*this, f); }
  template <class F> void for_each(F&& f) const { for_each(*this, f); }

  Eigen::Index n() const { return w_rec.rows(); }
  Eigen::Index m() const { return w_in.cols(); }
  Eigen::Index p() const { return w_out.rows(); }
};

/// Which tensors an optimizer may update.
struct TrainableMask {
  bool w_rec = true;
  bool w_in = true;
  bool b_in = true;
  bool w_out = true;
  bool b_out = true;
  bool h0 = true;

  bool contains(std::string_view name) const {
    if (name == "W_rec") return w_rec;
    if (name == "W_in") return w_in;
    if (name == "B_in") return b_in;
    if (name == "W_out") return w_out;
    if (name == "B_out") return b_out;
    if (name == "h0") return h0;
    return false;
  }

  friend bool operator==(const TrainableMask&, const TrainableMask&) = default;
};

struct NetworkParams : TensorSet {
  double tau = 0.1;
  double dt = 0.02;
  ActivationSpec activation;
  TrainableMask trainable;

  double gamma() const { return dt / tau; }
  Eigen::Index initial_states() const { return h0.cols(); }

  void validate() const {
    activation.validate();
    const double g = gamma();
    if (!(g > 0.0 && g <= 1.0)) throw ConfigError("gamma = dt/tau must lie in (0, 1], got " + std::to_string(g));
    const auto nn = n();
    if (nn < 1) throw ConfigError("network needs at least one neuron");
    if (w_rec.cols() != nn) throw ConfigError("W_rec must be square");
    if (w_in.rows() != nn) throw ConfigError("W_in must have n rows");
    if (b_in.size() != nn) throw ConfigError("B_in must have length n");
    if (w_out.cols() != nn) throw ConfigError("W_out must have n columns");
    if (b_out.size() != w_out.rows()) throw ConfigError("B_out must have length p");
    if (h0.rows() != nn || h0.cols() < 1) throw ConfigError("h0 must be n x K with K >= 1");
  }
};

/// Standard deviations of the pre- and post-activation noise.
struct NoiseConfig {
  double sigma_in = 0.0;
  double sigma_out = 0.0;

  bool noise_in() const { return sigma_in > 0.0 && sigma_out == 0.0; }
  bool noise_out() const { return sigma_in == 0.0 && sigma_out > 0.0; }
  bool silent() const { return sigma_in == 0.0 && sigma_out == 0.0; }

  void validate() const {
    if (!(sigma_in >= 0.0) || !(sigma_out >= 0.0) || !std::isfinite(sigma_in) || !std::isfinite(sigma_out))
      throw ConfigError("noise standard deviations must be finite and non-negative");
  }

  friend bool operator==(const NoiseConfig&, const NoiseConfig&) = default;
};

/// Noise streams of one trial. The draw for neuron i at update t sits at
/// index t * n + i of the channel stream.
struct TrialNoise {
  RngStream pre;
  RngStream post;

  TrialNoise() = default;
  explicit TrialNoise(const RngStream& trial)
      : pre(trial.substream(Channel::PreActivation)), post(trial.substream(Channel::PostActivation)) {}

  static void standard_normals(const RngStream& channel, std::uint64_t t, Eigen::Index n, Vector& out) {
    out.resize(n);
    channel.fill_normal(t * static_cast<std::uint64_t>(n), std::span<double>(out.data(), static_cast<std::size_t>(n)));
  }
};

struct TrialRecord {
  Matrix states;   // T x n, row t is the state after update t
  Matrix outputs;  // T x p
  Matrix inputs;   // T x m
};

namespace detail {

// One update. Writes the (noisy) pre-activation into pre_act so backward
// passes can reuse it. draw is scratch space.
inline void forward_update(const NetworkParams& params, const NoiseConfig& noise, const Vector& h, const Vector& u,
                           const TrialNoise& draws, std::uint64_t t, Vector& pre_act, Vector& h_next, Vector& draw) {
  const double g = params.gamma();
  pre_act.noalias() = params.w_rec * h;
  if (params.m() > 0) pre_act.noalias() += params.w_in * u;
  pre_act += params.b_in;
  if (noise.sigma_in > 0.0) {
    TrialNoise::standard_normals(draws.pre, t, params.n(), draw);
    pre_act += noise.sigma_in * draw;
  }
  h_next = pre_act.unaryExpr([&params](double v) { return params.activation(v); });
  if (noise.sigma_out > 0.0) {
    TrialNoise::standard_normals(draws.post, t, params.n(), draw);
    h_next += noise.sigma_out * draw;
  }
  h_next = (1.0 - g) * h + g * h_next;
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace detail

/// z = W_out h + B_out.
inline Vector readout(const NetworkParams& params, const Vector& h) { return params.w_out * h + params.b_out; }

/// One noisy update from state h under input u, using the draws of `trial_rng` at update index t.
inline Vector step(const NetworkParams& params, const NoiseConfig& noise, const Vector& h, const Vector& u,
                   const RngStream& trial_rng, std::uint64_t t = 0) {
  if (h.size() != params.n()) throw ConfigError("state has wrong length");
  if (u.size() != params.m()) throw ConfigError("input has wrong length");
  Vector pre, next, draw;
  detail::forward_update(params, noise, h, u, TrialNoise(trial_rng), t, pre, next, draw);
  return next;
}

/// Rolls out inputs.rows() updates starting from initial state column init_index.
inline TrialRecord simulate_trial(const NetworkParams& params, const NoiseConfig& noise, const Matrix& inputs,
                                  const RngStream& trial_rng, Eigen::Index init_index = 0) {
  const Eigen::Index steps = inputs.rows();
  if (steps < 1) throw ConfigError("a trial needs at least one timestep");
  if (inputs.cols() != params.m()) throw ConfigError("input width does not match W_in");
  if (init_index < 0 || init_index >= params.initial_states()) throw ConfigError("initial state index out of range");

  TrialRecord record;
  record.inputs = inputs;
  record.states.resize(steps, params.n());
  record.outputs.resize(steps, params.p());
  const TrialNoise draws(trial_rng);
  Vector h = params.h0.col(init_index);
  Vector u, pre, next, draw;
  for (Eigen::Index t = 0; t < steps; ++t) {
    u = inputs.row(t).transpose();
    detail::forward_update(params, noise, h, u, draws, static_cast<std::uint64_t>(t), pre, next, draw);
    if (!detail::all_finite(next)) throw SimulationError("state diverged", static_cast<std::size_t>(t));
    h.swap(next);
    record.states.row(t) = h.transpose();
    record.outputs.row(t) = readout(params, h).transpose();
  }
  return record;
}

}  // namespace noisepref
