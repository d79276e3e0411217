// SPDX-License-Identifier: Apache-2.0
//
// Piecewise Ornstein-Uhlenbeck process
//
//   dh = -theta(h) h dt + sigma dW,   theta(h) = theta_large for h < 0, theta_small otherwise
//
// and its realization as a one-neuron noise-out ReLU CTRNN with
// tau = 1/theta_small and w_rec = -(theta_large - theta_small)/theta_small.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "noisepref/analysis/stats.hpp"
#include "noisepref/core/network.hpp"

namespace noisepref {

struct OuParams {
  double theta_small = 1.0;
  double theta_large = 3.0;
  double sigma = 1.0;
  double dt = 1e-3;
  std::int64_t steps = 1'000'000;   // averaged steps after burn-in
  std::int64_t burn_in = 10'000;
  int batches = 100;                // for the batch-means standard error

  void validate() const {
    if (!(theta_small > 0.0 && theta_small <= theta_large))
      throw ConfigError("OU rates must satisfy 0 < theta_small <= theta_large");
    if (!(dt > 0.0) || !(dt * theta_large < 0.1)) throw ConfigError("OU step too large: need dt * theta_large < 0.1");
    if (!(sigma >= 0.0)) throw ConfigError("OU sigma must be non-negative");
    if (burn_in < 0 || batches < 2 || steps < batches) throw ConfigError("OU run needs steps >= batches >= 2");
  }
};

struct OuEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  double variance = 0.0;           // time-average of (h - mean)^2
  double variance_std_error = 0.0;
};

namespace detail {

template <class Advance>
OuEstimate ou_time_average(const OuParams& p, Advance&& advance) {
  p.validate();
  double h = 0.0;
  std::int64_t k = 0;
  for (; k < p.burn_in; ++k) h = advance(h, k);
  const std::int64_t per_batch = p.steps / p.batches;
  std::vector<double> means(static_cast<std::size_t>(p.batches)), squares(static_cast<std::size_t>(p.batches));
  for (int b = 0; b < p.batches; ++b) {
    double s = 0.0, s2 = 0.0;
    for (std::int64_t j = 0; j < per_batch; ++j, ++k) {
      h = advance(h, k);
      s += h;
      s2 += h * h;
    }
    means[static_cast<std::size_t>(b)] = s / static_cast<double>(per_batch);
    squares[static_cast<std::size_t>(b)] = s2 / static_cast<double>(per_batch);
  }
  const BatchMeans m = batch_means(means);
  const BatchMeans m2 = batch_means(squares);
  return {m.mean, m.std_error, m2.mean - m.mean * m.mean, m2.std_error};
}

}  // namespace detail

/// Euler-Maruyama time average after burn-in, started at h = 0. Step k uses rng.substream(Ou).normal(k).
inline OuEstimate ou_stationary_mean(const OuParams& p, const RngStream& rng) {
  const RngStream draws = rng.substream(Channel::Ou);
  const double noise = p.sigma * std::sqrt(p.dt);
  return detail::ou_time_average(p, [&](double h, std::int64_t k) {
    const double theta = h < 0.0 ? p.theta_large : p.theta_small;
    return h - theta * h * p.dt + noise * draws.normal(static_cast<std::uint64_t>(k));
  });
}

struct OuNetwork {
  NetworkParams params;
  NoiseConfig noise;
};

/// Discrete noise-out CTRNN whose Euler step equals the Euler-Maruyama step of the piecewise OU process.
inline OuNetwork ou_ctrnn_mapping(double theta_small, double theta_large, double sigma, double dt) {
  OuNetwork net;
  auto& p = net.params;
  p.w_rec = Matrix::Constant(1, 1, -(theta_large - theta_small) / theta_small);
  p.w_in = Matrix::Zero(1, 0);
  p.b_in = Vector::Zero(1);
  p.w_out = Matrix::Constant(1, 1, 1.0);
  p.b_out = Vector::Zero(1);
  p.h0 = Matrix::Zero(1, 1);
  p.tau = 1.0 / theta_small;
  p.dt = dt;
  p.activation = {ActivationKind::ReLU, 10.0};
  // gamma * sigma_out * N(0,1) must equal sigma * sqrt(dt) * N(0,1).
  net.noise = {0.0, sigma / (theta_small * std::sqrt(dt))};
  return net;
}

/// Same time average, stepping the mapped CTRNN through the network update (post-activation channel).
inline OuEstimate ou_stationary_mean_ctrnn(const OuParams& p, const RngStream& rng) {
  const OuNetwork net = ou_ctrnn_mapping(p.theta_small, p.theta_large, p.sigma, p.dt);
  net.params.validate();
  const TrialNoise draws(rng);
  Vector h(1), u(0), pre, next, draw;
  return detail::ou_time_average(p, [&](double state, std::int64_t k) {
    h(0) = state;
    detail::forward_update(net.params, net.noise, h, u, draws, static_cast<std::uint64_t>(k), pre, next, draw);
    return next(0);
  });
}

}  // namespace noisepref
