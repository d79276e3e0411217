// SPDX-License-Identifier: Apache-2.0
//
// Test-noise sweeps: evaluate a trained network at a grid of noise levels
// and split the error into bias (mean signed error) and spread.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "noisepref/core/parallel.hpp"
#include "noisepref/tasks/function_task.hpp"
#include "noisepref/tasks/maze.hpp"

namespace noisepref {

enum class NoisePlacement { PreActivation, PostActivation };

/// Swept channel: the one the network was trained with (pre-activation if it had none).
inline NoisePlacement placement_of(const NoiseConfig& train) {
  return (train.sigma_in == 0.0 && train.sigma_out > 0.0) ? NoisePlacement::PostActivation
                                                          : NoisePlacement::PreActivation;
}

inline NoiseConfig with_test_sigma(const NoiseConfig& train, NoisePlacement where, double sigma) {
  NoiseConfig c = train;
  (where == NoisePlacement::PreActivation ? c.sigma_in : c.sigma_out) = sigma;
  return c;
}

struct SweepRow {
  double sigma_test = 0.0;
  double input = std::numeric_limits<double>::quiet_NaN();  // NaN on aggregate rows
  std::size_t count = 0;       // error entries in the row (K)
  double rmse = 0.0;
  double mean_error = 0.0;     // bias
  double std_error = 0.0;      // sample standard deviation (K - 1 divisor)
  double abs_bias = 0.0;       // mean over inputs of |per-input bias|
  double along_route = std::numeric_limits<double>::quiet_NaN();
  std::size_t divergent = 0;
};

struct SweepResult {
  std::vector<SweepRow> aggregate;   // one per sigma
  std::vector<SweepRow> per_input;   // sigma-major, then input
  std::size_t trials_per_point = 0;
  std::vector<double> inputs;

  const SweepRow& input_row(std::size_t sigma_index, std::size_t input_index) const {
    return per_input[sigma_index * inputs.size() + input_index];
  }
};

/// Errors contributed by one trial, plus an optional auxiliary signed error.
struct TrialErrors {
  std::vector<double> errors;
  double aux_sum = 0.0;
  std::size_t aux_count = 0;
};

namespace detail {

inline SweepRow summarize(std::span<const double> e) {
  SweepRow row;
  row.count = e.size();
  if (e.empty()) return row;
  double sum = 0.0, sq = 0.0;
  for (double v : e) {
    sum += v;
    sq += v * v;
  }
  const double k = static_cast<double>(e.size());
  row.mean_error = sum / k;
  row.rmse = std::sqrt(sq / k);
  double dev = 0.0;
  for (double v : e) dev += (v - row.mean_error) * (v - row.mean_error);
  row.std_error = e.size() > 1 ? std::sqrt(dev / (k - 1.0)) : 0.0;
  row.abs_bias = std::abs(row.mean_error);
  return row;
}

}  // namespace detail

/// Generic sweep. For every sigma, trial k of condition c runs errors_of(noise,
/// c, rng.substream(c).substream(k)); the same streams are reused at every
/// sigma so noise levels are compared on paired draws. Divergent trials are
/// dropped if they are fewer than 1% of a point's trials.
template <class ErrorsOf>
SweepResult evaluate_noise_sweep_generic(std::span<const double> sigma_grid, std::span<const double> condition_labels,
                                         std::size_t trials, const NoiseConfig& train_noise, ErrorsOf&& errors_of,
                                         const RngStream& rng, int threads = 1) {
  if (sigma_grid.empty()) throw ConfigError("sigma grid is empty");
  if (condition_labels.empty()) throw ConfigError("sweep needs at least one input condition");
  if (trials < 2) throw ConfigError("sweep needs at least two trials per point");
  for (double s : sigma_grid)
    if (!(s >= 0.0)) throw ConfigError("sigma grid values must be non-negative");
  const NoisePlacement where = placement_of(train_noise);
  const std::size_t conditions = condition_labels.size();

  SweepResult result;
  result.trials_per_point = trials;
  result.inputs.assign(condition_labels.begin(), condition_labels.end());
  for (double sigma : sigma_grid) {
    const NoiseConfig noise = with_test_sigma(train_noise, where, sigma);
    std::vector<TrialErrors> out(conditions * trials);
    std::vector<std::uint8_t> failed(conditions * trials, 0);
    parallel_for(out.size(), threads, [&](std::size_t j) {
      const std::size_t c = j / trials, k = j % trials;
      try {
        out[j] = errors_of(noise, c, rng.substream(c).substream(k));
      } catch (const SimulationError&) {
        failed[j] = 1;
      }
    });

    std::vector<double> all;
    double aux_sum = 0.0, abs_bias_sum = 0.0;
    std::size_t aux_count = 0, divergent = 0;
    for (std::size_t c = 0; c < conditions; ++c) {
      std::vector<double> mine;
      std::size_t bad = 0;
      for (std::size_t k = 0; k < trials; ++k) {
        const std::size_t j = c * trials + k;
        if (failed[j]) {
          ++bad;
          continue;
        }
        mine.insert(mine.end(), out[j].errors.begin(), out[j].errors.end());
        aux_sum += out[j].aux_sum;
        aux_count += out[j].aux_count;
      }
      if (static_cast<double>(bad) >= 0.01 * static_cast<double>(trials))
        throw EvaluationError("too many divergent trials (" + std::to_string(bad) + " of " + std::to_string(trials) +
                              ") at sigma_test " + std::to_string(sigma));
      SweepRow row = detail::summarize(mine);
      row.sigma_test = sigma;
      row.input = condition_labels[c];
      row.divergent = bad;
      abs_bias_sum += row.abs_bias;
      divergent += bad;
      result.per_input.push_back(row);
      all.insert(all.end(), mine.begin(), mine.end());
    }
    SweepRow agg = detail::summarize(all);
    agg.sigma_test = sigma;
    agg.abs_bias = abs_bias_sum / static_cast<double>(conditions);
    agg.divergent = divergent;
    if (aux_count > 0) agg.along_route = aux_sum / static_cast<double>(aux_count);
    result.aggregate.push_back(agg);
  }
  return result;
}

/// `count` evenly spaced points covering [lo, hi] inclusive.
inline std::vector<double> linspace(double lo, double hi, std::size_t count) {
  std::vector<double> v(count);
  for (std::size_t i = 0; i < count; ++i)
    v[i] = count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  return v;
}

/// Function-task sweep: error = z(final step) - g(x), K trials per input x.
inline SweepResult evaluate_noise_sweep(const NetworkParams& params, const NoiseConfig& train_noise,
                                        const FunctionTaskConfig& task, std::span<const double> inputs,
                                        std::span<const double> sigma_grid, std::size_t trials, const RngStream& rng,
                                        int threads = 1) {
  params.validate();
  task.validate();
  if (params.p() != 1 || params.m() != 1) throw ConfigError("function networks have one input and one output");
  std::vector<Matrix> input_rows;
  for (double x : inputs) input_rows.push_back(function_inputs(task, x));
  return evaluate_noise_sweep_generic(
      sigma_grid, inputs, trials, train_noise,
      [&](const NoiseConfig& noise, std::size_t c, const RngStream& trial_rng) {
        const TrialRecord rec = simulate_trial(params, noise, input_rows[c], trial_rng);
        return TrialErrors{{rec.outputs(rec.outputs.rows() - 1, 0) - task(inputs[c])}, 0.0, 0};
      },
      rng, threads);
}

/// Maze sweep over `trials` random (start, dest) trials. Errors are the
/// particle-minus-target coordinates at every step; the auxiliary column is
/// the mean along-route error (projection on the current jaunt heading),
/// negative when the particle lags behind its target.
inline SweepResult evaluate_maze_sweep(const NetworkParams& params, const NoiseConfig& train_noise,
                                       const MazeTask& task, std::span<const double> sigma_grid, std::size_t trials,
                                       const RngStream& rng, int threads = 1) {
  params.validate();
  const double label = 0.0;
  return evaluate_noise_sweep_generic(
      sigma_grid, std::span<const double>(&label, 1), trials, train_noise,
      [&](const NoiseConfig& noise, std::size_t, const RngStream& trial_rng) {
        const MazeTrialSchedule s = task.trial(trial_rng.substream(Channel::Task));
        const MazeRollout roll = simulate_maze_closed_loop(params, noise, s, trial_rng, task.loop);
        TrialErrors out;
        out.errors.reserve(static_cast<std::size_t>(roll.particle.size()));
        for (Eigen::Index t = 0; t < roll.particle.rows(); ++t) {
          const Eigen::RowVector2d e = roll.particle.row(t) - s.targets.row(t);
          out.errors.push_back(e(0));
          out.errors.push_back(e(1));
          const Eigen::RowVector2d dir = s.heading.row(t);
          if (dir.squaredNorm() > 0.0) {
            out.aux_sum += e.dot(dir);
            ++out.aux_count;
          }
        }
        return out;
      },
      rng, threads);
}

}  // namespace noisepref
