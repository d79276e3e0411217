// SPDX-License-Identifier: Apache-2.0
//
// Single-neuron regulator landscape: for each (w, sigma_in, r) train the bias,
// then compare the loss at the trained noise level against the loss with the
// pre-activation noise removed.
#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "noisepref/core/parallel.hpp"
#include "noisepref/tasks/regulator.hpp"
#include "noisepref/training/trainer.hpp"

namespace noisepref {

struct RegulatorSettings {
  TrainConfig train = TrainConfig::regulator_defaults();
  std::size_t eval_episodes = 10'000;
  std::uint64_t eval_seed = 7;
  double sigma_out = 1.0;
  int steps = 50;
  double gamma = 0.2;
};

struct RegulatorOptimum {
  double b = 0.0;
  double loss = 0.0;            // Monte Carlo loss at the trained sigma_in
  double loss_std_error = 0.0;
};

inline RegulatorConfig regulator_cell(double w, double sigma_in, double r, const RegulatorSettings& s) {
  RegulatorConfig c;
  c.r = r;
  c.w = w;
  c.b = c.setpoint_bias();
  c.sigma_in = sigma_in;
  c.sigma_out = s.sigma_out;
  c.steps = s.steps;
  c.gamma = s.gamma;
  return c;
}

/// Trains b from r(1 - w) with the training loop, then estimates the loss
/// with eval_episodes episodes drawn from RngStream(eval_seed).
inline RegulatorOptimum optimize_bias_for_regulator(double w, double sigma_in, double r,
                                                    const RegulatorSettings& settings) {
  if (!(w < 0.0)) throw ConfigError("regulator recurrent weight must be negative");
  RegulatorConfig cell = regulator_cell(w, sigma_in, r, settings);
  cell.validate();
  TrainConfig tc = settings.train;
  tc.noise = cell.noise();
  const TrainResult trained = train(RegulatorTask{cell}, regulator_network(cell), tc);
  if (trained.aborted) throw TrainingError(trained.abort_reason);
  cell.b = trained.params.b_in(0);
  const MonteCarloEstimate est = regulator_loss_mc(cell, settings.eval_episodes, RngStream(settings.eval_seed));
  return {cell.b, est.mean, est.std_error};
}

struct LandscapeCell {
  double w = 0.0;
  double sigma_in = 0.0;
  double r = 0.0;
  double b_opt = std::numeric_limits<double>::quiet_NaN();
  double loss_trained = std::numeric_limits<double>::quiet_NaN();
  double loss_zero = std::numeric_limits<double>::quiet_NaN();
  bool preference = false;      // loss rises when the pre-activation noise is removed
  bool ok = false;
  std::string error;
};

/// Setpoint with the lowest trained loss for one (w, sigma_in) column.
struct LandscapeOptimum {
  double w = 0.0;
  double sigma_in = 0.0;
  double best_r = std::numeric_limits<double>::quiet_NaN();
  double best_loss = std::numeric_limits<double>::quiet_NaN();
};

struct LandscapeResult {
  std::vector<LandscapeCell> cells;      // w-major, then sigma_in, then r
  std::vector<LandscapeOptimum> optima;  // w-major, then sigma_in
};

inline LandscapeResult regulator_landscape_sweep(std::span<const double> w_values, std::span<const double> sigma_grid,
                                                 std::span<const double> r_grid, const RegulatorSettings& settings,
                                                 int threads = 1) {
  if (w_values.empty() || sigma_grid.empty() || r_grid.empty()) throw ConfigError("landscape grids must be non-empty");
  const std::size_t ns = sigma_grid.size(), nr = r_grid.size();
  LandscapeResult out;
  out.cells.resize(w_values.size() * ns * nr);
  parallel_for(out.cells.size(), threads, [&](std::size_t j) {
    LandscapeCell& cell = out.cells[j];
    cell.w = w_values[j / (ns * nr)];
    cell.sigma_in = sigma_grid[(j / nr) % ns];
    cell.r = r_grid[j % nr];
    try {
      const RegulatorOptimum opt = optimize_bias_for_regulator(cell.w, cell.sigma_in, cell.r, settings);
      cell.b_opt = opt.b;
      cell.loss_trained = opt.loss;
      RegulatorConfig quiet = regulator_cell(cell.w, 0.0, cell.r, settings);
      quiet.b = opt.b;
      cell.loss_zero = regulator_loss_mc(quiet, settings.eval_episodes, RngStream(settings.eval_seed)).mean;
      cell.preference = cell.loss_zero > cell.loss_trained;
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
  });
  for (std::size_t wi = 0; wi < w_values.size(); ++wi) {
    for (std::size_t si = 0; si < ns; ++si) {
      LandscapeOptimum best{w_values[wi], sigma_grid[si]};
      for (std::size_t ri = 0; ri < nr; ++ri) {
        const LandscapeCell& c = out.cells[(wi * ns + si) * nr + ri];
        if (c.ok && !(c.loss_trained >= best.best_loss)) {
          best.best_loss = c.loss_trained;
          best.best_r = c.r;
        }
      }
      out.optima.push_back(best);
    }
  }
  return out;
}

}  // namespace noisepref
