// SPDX-License-Identifier: Apache-2.0
//
// Fixed points as minimizers of the one-step change
//
//   q(h) = || gamma (-h + F(h)) ||^2,
//
// with F(h) = f(W_rec h + W_in u + B_in) (noiseless) or its Monte Carlo
// expectation over pre-activation noise N(0, sigma^2) (noisy).
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string_view>

#include "noisepref/core/network.hpp"
#include "noisepref/training/adam.hpp"

namespace noisepref {

enum class FixedPointMode { Noiseless, Noisy };

inline std::string_view to_string(FixedPointMode m) { return m == FixedPointMode::Noiseless ? "noiseless" : "noisy"; }

struct FixedPointOptions {
  double lr0 = 0.07;
  double half_life = 1386.0;
  double threshold = 4.9e-9;
  std::int64_t max_steps = 50'000;
  AdamConfig adam;
  /// Reuse one batch of noise draws for every objective evaluation.
  bool common_random_numbers = false;

  static FixedPointOptions noiseless() { return {}; }
  /// Threshold (1/100) sigma^2 n / S.
  static FixedPointOptions noisy(double sigma, Eigen::Index n, int samples) {
    FixedPointOptions o;
    o.lr0 = 0.0175;
    o.threshold = 0.01 * sigma * sigma * static_cast<double>(n) / static_cast<double>(samples);
    return o;
  }
};

struct FixedPointResult {
  Vector u;
  Vector h_star;
  double residual = 0.0;
  bool converged = false;
  FixedPointMode mode = FixedPointMode::Noiseless;
  double sigma = 0.0;
  int samples = 0;
  std::int64_t steps = 0;
  double threshold = 0.0;
};

/// Initial guess: final state of a noiseless trial holding u for `steps` updates.
inline Vector fixed_point_init(const NetworkParams& params, const Vector& u, Eigen::Index steps,
                               Eigen::Index init_index = 0) {
  Vector h = params.h0.col(init_index);
  const RngStream unused;
  for (Eigen::Index t = 0; t < steps; ++t) h = step(params, NoiseConfig{}, h, u, unused, static_cast<std::uint64_t>(t));
  return h;
}

namespace detail {

// Runs ADAM on h; objective(h, k, grad) returns q(h) and writes dq/dh.
template <class Objective>
FixedPointResult minimize_step_change(const Vector& init, const FixedPointOptions& opt, Objective&& objective) {
  FixedPointResult res;
  res.h_star = init;
  res.threshold = opt.threshold;
  Vector m = Vector::Zero(init.size()), v = Vector::Zero(init.size()), grad(init.size());
  for (std::int64_t k = 0; k < opt.max_steps; ++k) {
    res.residual = objective(res.h_star, k, grad);
    res.steps = k;
    if (res.residual < opt.threshold) {
      res.converged = true;
      return res;
    }
    adam_update(res.h_star, m, v, grad, k + 1, opt.lr0 * std::exp2(-static_cast<double>(k) / opt.half_life), opt.adam);
  }
  res.residual = objective(res.h_star, opt.max_steps, grad);
  res.steps = opt.max_steps;
  res.converged = res.residual < opt.threshold;
  return res;
}

inline Vector drive(const NetworkParams& params, const Vector& u) {
  Vector c = params.b_in;
  if (params.m() > 0) c.noalias() += params.w_in * u;
  return c;
}

}  // namespace detail

inline FixedPointResult find_fixed_point_noiseless(const NetworkParams& params, const Vector& u, const Vector& init,
                                                   const FixedPointOptions& opt = FixedPointOptions::noiseless()) {
  params.validate();
  if (init.size() != params.n() || u.size() != params.m()) throw ConfigError("fixed point: bad state or input size");
  const double gamma = params.gamma();
  const Vector c = detail::drive(params, u);
  Vector a(params.n()), r(params.n()), back(params.n());
  FixedPointResult res = detail::minimize_step_change(init, opt, [&](const Vector& h, std::int64_t, Vector& grad) {
    a.noalias() = params.w_rec * h;
    a += c;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      r(i) = gamma * (params.activation(a(i)) - h(i));
      back(i) = params.activation.derivative(a(i)) * r(i);
    }
    grad = -r;
    grad.noalias() += params.w_rec.transpose() * back;
    grad *= 2.0 * gamma;
    return r.squaredNorm();
  });
  res.u = u;
  res.mode = FixedPointMode::Noiseless;
  return res;
}

/// Noisy fixed point. Evaluation k averages over `samples` fresh draws taken from
/// rng.substream(FixedPoint) (index block k, or block 0 with common random numbers).
/// sigma == 0 is the noiseless problem and is delegated to it.
inline FixedPointResult find_fixed_point_noisy(const NetworkParams& params, const Vector& u, double sigma, int samples,
                                               const Vector& init, const RngStream& rng,
                                               std::optional<FixedPointOptions> options = std::nullopt) {
  if (samples < 1) throw ConfigError("noisy fixed point needs at least one sample");
  if (!(sigma >= 0.0)) throw ConfigError("noise level must be non-negative");
  if (sigma == 0.0) {
    FixedPointResult res = find_fixed_point_noiseless(params, u, init);
    res.mode = FixedPointMode::Noisy;
    res.samples = samples;
    return res;
  }
  params.validate();
  if (init.size() != params.n() || u.size() != params.m()) throw ConfigError("fixed point: bad state or input size");
  const FixedPointOptions opt = options.value_or(FixedPointOptions::noisy(sigma, params.n(), samples));
  const double gamma = params.gamma();
  const Eigen::Index n = params.n();
  const Vector c = detail::drive(params, u);
  const RngStream draws = rng.substream(Channel::FixedPoint);
  const auto block = static_cast<std::uint64_t>(samples) * static_cast<std::uint64_t>(n);
  Vector a(n), mean_f(n), mean_df(n), r(n), back(n), z(n);
  FixedPointResult res = detail::minimize_step_change(init, opt, [&](const Vector& h, std::int64_t k, Vector& grad) {
    a.noalias() = params.w_rec * h;
    a += c;
    mean_f.setZero();
    mean_df.setZero();
    const std::uint64_t base = opt.common_random_numbers ? 0 : static_cast<std::uint64_t>(k) * block;
    for (int s = 0; s < samples; ++s) {
      draws.fill_normal(base + static_cast<std::uint64_t>(s) * static_cast<std::uint64_t>(n),
                        std::span<double>(z.data(), static_cast<std::size_t>(n)));
      for (Eigen::Index i = 0; i < n; ++i) {
        const double x = a(i) + sigma * z(i);
        mean_f(i) += params.activation(x);
        mean_df(i) += params.activation.derivative(x);
      }
    }
    mean_f /= samples;
    mean_df /= samples;
    r = gamma * (mean_f - h);
    back = mean_df.cwiseProduct(r);
    grad = -r;
    grad.noalias() += params.w_rec.transpose() * back;
    grad *= 2.0 * gamma;
    return r.squaredNorm();
  });
  res.u = u;
  res.mode = FixedPointMode::Noisy;
  res.sigma = sigma;
  res.samples = samples;
  return res;
}

/// Output-space image of the noise-induced fixed point shift.
struct ShiftProjection {
  bool valid = false;    // false if either fixed point failed to converge
  Vector delta_h;        // noisy - noiseless
  Vector output_shift;   // W_out delta_h
  double magnitude = 0.0;
};

inline ShiftProjection projected_fp_shift(const FixedPointResult& noiseless, const FixedPointResult& noisy,
                                          const NetworkParams& params) {
  ShiftProjection s;
  if (!noiseless.converged || !noisy.converged) return s;
  if (noiseless.u.size() != noisy.u.size() || noiseless.u != noisy.u)
    throw ConfigError("fixed points belong to different inputs");
  s.valid = true;
  s.delta_h = noisy.h_star - noiseless.h_star;
  s.output_shift = params.w_out * s.delta_h;
  s.magnitude = s.output_shift.norm();
  return s;
}

}  // namespace noisepref
