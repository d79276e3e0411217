// SPDX-License-Identifier: Apache-2.0
//
// Experiment drivers behind the command-line tool. Every results file is
// written atomically next to a "<file>.meta.json" sidecar.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "noisepref/analysis/fixed_point.hpp"
#include "noisepref/analysis/ou.hpp"
#include "noisepref/analysis/regulator_landscape.hpp"
#include "noisepref/analysis/stats.hpp"
#include "noisepref/analysis/sweep.hpp"
#include "noisepref/core/parallel.hpp"
#include "noisepref/experiments/checkpoint.hpp"
#include "noisepref/experiments/config.hpp"
#include "noisepref/experiments/csv.hpp"
#include "noisepref/tasks/function_task.hpp"
#include "noisepref/tasks/maze.hpp"
#include "noisepref/training/trainer.hpp"

#ifndef NOISEPREF_VERSION
#define NOISEPREF_VERSION "0.0.0"
#endif

namespace noisepref {

inline constexpr std::string_view kCodeVersion = NOISEPREF_VERSION;

struct RunOptions {
  int threads = 1;
  std::filesystem::path checkpoint;  // empty: <out>/checkpoint.txt
  std::function<void(const std::string&)> log;
};

inline std::filesystem::path checkpoint_path(const ExperimentConfig& cfg, const RunOptions& opt) {
  return opt.checkpoint.empty() ? std::filesystem::path(cfg.out) / "checkpoint.txt" : opt.checkpoint;
}

/// Writes `contents` to path and its sidecar. The sidecar holds only things
/// that determine the contents, so reruns reproduce both files byte for byte.
inline void write_result(const std::filesystem::path& path, std::string_view contents, const ExperimentConfig& cfg,
                         std::string_view command) {
  write_file_atomic(path, contents);
  nlohmann::ordered_json meta;
  meta["file"] = path.filename().string();
  meta["command"] = std::string(command);
  meta["config_hash"] = config_hash(cfg);
  meta["seed"] = cfg.seed;
  meta["code_version"] = std::string(kCodeVersion);
  meta["content_digest"] = fnv1a_hex(contents);
  auto side = path;
  side += ".meta.json";
  write_file_atomic(side, meta.dump(2) + "\n");
}

inline MazeSpec maze_of(const ExperimentConfig& cfg) {
  if (cfg.task.maze_file.empty()) return MazeSpec::default_maze();
  return MazeSpec::parse(read_file(cfg.task.maze_file));
}

inline MazeTask maze_task_of(const ExperimentConfig& cfg) {
  MazeTask t;
  t.spec = maze_of(cfg);
  t.timing = cfg.task.timing;
  t.loop.dt = cfg.network.dt;
  t.loop.velocity_variance = cfg.task.velocity_variance;
  return t;
}

inline NetworkParams initial_network(const ExperimentConfig& cfg) {
  NetworkParams p;
  if (cfg.task.kind == ExperimentKind::Function) {
    p = init_params(cfg.network.n, 1, 1, cfg.seed, TaskKind::Function, 1, cfg.network.activation);
  } else if (cfg.task.kind == ExperimentKind::Maze) {
    const MazeSpec spec = maze_of(cfg);
    p = init_params(cfg.network.n, 6, 2, cfg.seed, TaskKind::Maze, spec.size(), cfg.network.activation);
  } else {
    throw ConfigError("train supports task kinds function and maze (use the regulator or ou subcommands)");
  }
  p.tau = cfg.network.tau;
  p.dt = cfg.network.dt;
  p.validate();
  return p;
}

struct TrainRun {
  Checkpoint checkpoint;
  std::vector<HistoryRow> history;
};

inline std::string history_csv(std::span<const HistoryRow> history) {
  CsvTable t({"batch", "loss", "lr", "reg"});
  for (const HistoryRow& r : history) t.add_row({static_cast<long long>(r.batch), r.loss, r.lr, r.reg});
  return t.str();
}

/// Trains and writes <out>/checkpoint.txt and <out>/history.csv. On abort the
/// partial history is still written before the TrainingError propagates.
inline TrainRun run_train(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  cfg.validate();
  const std::filesystem::path out(cfg.out);
  NetworkParams init = initial_network(cfg);
  const TrainConfig tc = cfg.train_config();
  const auto progress = [&](const HistoryRow& r) {
    if (opt.log && (r.batch + 1) % 500 == 0)
      opt.log("batch " + std::to_string(r.batch + 1) + "/" + std::to_string(tc.batches) + " loss " +
              format_double(r.loss));
  };
  TrainResult res;
  if (cfg.task.kind == ExperimentKind::Function)
    res = train(FunctionTask{cfg.task.function}, std::move(init), tc, opt.threads, progress);
  else
    res = train(maze_task_of(cfg), std::move(init), tc, opt.threads, progress);

  write_result(out / "history.csv", history_csv(res.history), cfg, "train");
  if (res.aborted) throw TrainingError(res.abort_reason);

  TrainRun run;
  run.checkpoint.params = std::move(res.params);
  run.checkpoint.meta = {cfg.task.kind, cfg.noise, cfg.seed, tc.batches, history_digest(res.history)};
  run.history = std::move(res.history);
  write_result(out / "checkpoint.txt", serialize_checkpoint(run.checkpoint), cfg, "train");
  return run;
}

inline Checkpoint load_matching_checkpoint(const ExperimentConfig& cfg, const RunOptions& opt) {
  Checkpoint ck = load_checkpoint(checkpoint_path(cfg, opt));
  if (ck.params.n() != cfg.network.n)
    throw ConfigError("checkpoint has n = " + std::to_string(ck.params.n()) + " but the config says network.n = " +
                      std::to_string(cfg.network.n));
  if (ck.meta.task != cfg.task.kind)
    throw ConfigError("checkpoint task kind '" + std::string(to_string(ck.meta.task)) + "' does not match task.kind '" +
                      std::string(to_string(cfg.task.kind)) + "'");
  return ck;
}

inline std::vector<double> function_eval_inputs(const ExperimentConfig& cfg) {
  return linspace(cfg.task.function.lower(), cfg.task.function.upper(), static_cast<std::size_t>(cfg.analysis.inputs));
}

struct SweepSummary {
  SweepResult result;
  NoisePlacement placement = NoisePlacement::PreActivation;
  double train_sigma = 0.0;
  double argmin_rmse_sigma = 0.0;
  double argmin_abs_bias_sigma = 0.0;
};

inline std::string sweep_csv(const SweepResult& r) {
  CsvTable t({"sigma_test", "input", "trials", "rmse", "bias", "std", "abs_bias", "along_route", "divergent"});
  const auto add = [&](const SweepRow& row, std::string input) {
    t.add_row({row.sigma_test, std::move(input), static_cast<long long>(row.count), row.rmse, row.mean_error,
               row.std_error, row.abs_bias, row.along_route, static_cast<long long>(row.divergent)});
  };
  for (const SweepRow& row : r.aggregate) add(row, "all");
  for (const SweepRow& row : r.per_input) add(row, format_double(row.input));
  return t.str();
}

/// Loads the checkpoint, evaluates it over analysis.sigma_grid and writes
/// sweep.csv and sweep_summary.json.
inline SweepSummary run_sweep(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  cfg.validate();
  if (cfg.analysis.sigma_grid.empty()) throw ConfigError("analysis.sigma_grid is empty");
  const Checkpoint ck = load_matching_checkpoint(cfg, opt);
  const RngStream rng = RngStream(cfg.seed).substream(Channel::Evaluation);
  const auto trials = static_cast<std::size_t>(cfg.analysis.trials);

  SweepSummary s;
  s.placement = placement_of(ck.meta.noise);
  s.train_sigma = s.placement == NoisePlacement::PreActivation ? ck.meta.noise.sigma_in : ck.meta.noise.sigma_out;
  if (cfg.task.kind == ExperimentKind::Function) {
    const std::vector<double> inputs = function_eval_inputs(cfg);
    s.result = evaluate_noise_sweep(ck.params, ck.meta.noise, cfg.task.function, inputs, cfg.analysis.sigma_grid, trials,
                                    rng, opt.threads);
  } else if (cfg.task.kind == ExperimentKind::Maze) {
    s.result = evaluate_maze_sweep(ck.params, ck.meta.noise, maze_task_of(cfg), cfg.analysis.sigma_grid, trials, rng,
                                   opt.threads);
  } else {
    throw ConfigError("sweep supports task kinds function and maze");
  }

  const auto argmin = [&](auto key) {
    const auto& rows = s.result.aggregate;
    return std::min_element(rows.begin(), rows.end(), [&](const SweepRow& a, const SweepRow& b) { return key(a) < key(b); })
        ->sigma_test;
  };
  s.argmin_rmse_sigma = argmin([](const SweepRow& r) { return r.rmse; });
  s.argmin_abs_bias_sigma = argmin([](const SweepRow& r) { return r.abs_bias; });

  nlohmann::ordered_json j;
  j["placement"] = s.placement == NoisePlacement::PreActivation ? "in" : "out";
  j["train_sigma"] = s.train_sigma;
  j["argmin_rmse_sigma"] = s.argmin_rmse_sigma;
  j["argmin_abs_bias_sigma"] = s.argmin_abs_bias_sigma;
  j["trials_per_point"] = s.result.trials_per_point;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const SweepRow& r : s.result.aggregate) {
    nlohmann::ordered_json row;
    row["sigma_test"] = r.sigma_test;
    row["rmse"] = r.rmse;
    row["bias"] = r.mean_error;
    row["abs_bias"] = r.abs_bias;
    row["std"] = r.std_error;
    if (!std::isnan(r.along_route)) row["along_route"] = r.along_route;
    row["divergent"] = r.divergent;
    rows.push_back(row);
  }
  j["rows"] = rows;

  const std::filesystem::path out(cfg.out);
  write_result(out / "sweep.csv", sweep_csv(s.result), cfg, "sweep");
  write_result(out / "sweep_summary.json", j.dump(2) + "\n", cfg, "sweep");
  return s;
}

struct FixedPointRun {
  std::vector<double> inputs;
  std::vector<FixedPointResult> noiseless, noisy;
  std::vector<ShiftProjection> shifts;
  std::vector<double> zero_noise_bias;  // z(final) - g(x) on a noiseless trial
  double correlation = std::numeric_limits<double>::quiet_NaN();
};

/// Noiseless and noisy fixed points for analysis.inputs evenly spaced inputs of
/// a function net, the projected shift and its correlation with the zero-noise
/// bias. The noisy problem uses the checkpoint's pre-activation sigma.
inline FixedPointRun run_fixed_points(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  cfg.validate();
  if (cfg.task.kind != ExperimentKind::Function) throw ConfigError("fixed-points supports task kind function");
  const Checkpoint ck = load_matching_checkpoint(cfg, opt);
  const NetworkParams& params = ck.params;
  const FunctionTaskConfig& task = cfg.task.function;
  const double sigma = ck.meta.noise.sigma_in;
  const int samples = static_cast<int>(cfg.analysis.samples);

  FixedPointRun run;
  run.inputs = function_eval_inputs(cfg);
  const std::size_t count = run.inputs.size();
  run.noiseless.resize(count);
  run.noisy.resize(count);
  run.shifts.resize(count);
  run.zero_noise_bias.resize(count);
  const RngStream root = RngStream(cfg.seed).substream(Channel::FixedPoint);

  parallel_for(count, opt.threads, [&](std::size_t i) {
    const double x = run.inputs[i];
    const Vector u = Vector::Constant(1, x);
    const TrialRecord rec = simulate_trial(params, NoiseConfig{}, function_inputs(task, x), RngStream());
    run.zero_noise_bias[i] = rec.outputs(rec.outputs.rows() - 1, 0) - task(x);
    const Vector init = rec.states.row(rec.states.rows() - 1).transpose();

    FixedPointOptions quiet = FixedPointOptions::noiseless();
    quiet.max_steps = cfg.analysis.fp_max_steps;
    run.noiseless[i] = find_fixed_point_noiseless(params, u, init, quiet);

    std::optional<FixedPointOptions> loud;
    if (sigma > 0.0) {
      loud = FixedPointOptions::noisy(sigma, params.n(), samples);
      loud->max_steps = cfg.analysis.fp_max_steps;
      loud->common_random_numbers = cfg.analysis.common_random_numbers;
    }
    run.noisy[i] = find_fixed_point_noisy(params, u, sigma, samples, init, root.substream(i), loud);
    run.shifts[i] = projected_fp_shift(run.noiseless[i], run.noisy[i], params);
  });

  std::vector<double> predicted, observed;
  for (std::size_t i = 0; i < count; ++i) {
    if (!run.shifts[i].valid) continue;
    predicted.push_back(-run.shifts[i].output_shift(0));
    observed.push_back(run.zero_noise_bias[i]);
  }
  if (predicted.size() >= 2) run.correlation = pearson(predicted, observed);

  CsvTable fps({"input", "mode", "sigma", "samples", "residual", "threshold", "converged", "steps"});
  for (const auto* set : {&run.noiseless, &run.noisy})
    for (const FixedPointResult& r : *set)
      fps.add_row({r.u(0), std::string(to_string(r.mode)), r.sigma, static_cast<long long>(r.samples), r.residual,
                   r.threshold, static_cast<long long>(r.converged), static_cast<long long>(r.steps)});
  CsvTable shifts({"input", "output_shift", "predicted_bias", "zero_noise_bias", "magnitude", "valid"});
  for (std::size_t i = 0; i < count; ++i) {
    const ShiftProjection& s = run.shifts[i];
    const double shift = s.valid ? s.output_shift(0) : std::numeric_limits<double>::quiet_NaN();
    shifts.add_row({run.inputs[i], shift, -shift, run.zero_noise_bias[i], s.magnitude, static_cast<long long>(s.valid)});
  }
  nlohmann::ordered_json j;
  j["sigma"] = sigma;
  j["samples"] = samples;
  j["valid_shifts"] = predicted.size();
  j["correlation"] = std::isnan(run.correlation) ? nlohmann::ordered_json() : nlohmann::ordered_json(run.correlation);

  const std::filesystem::path out(cfg.out);
  write_result(out / "fixed_points.csv", fps.str(), cfg, "fixed-points");
  write_result(out / "fixed_point_shifts.csv", shifts.str(), cfg, "fixed-points");
  write_result(out / "fixed_point_summary.json", j.dump(2) + "\n", cfg, "fixed-points");
  return run;
}

inline RegulatorSettings regulator_settings(const ExperimentConfig& cfg) {
  RegulatorSettings s;
  s.train = cfg.train_config();
  s.eval_episodes = static_cast<std::size_t>(cfg.analysis.eval_episodes);
  s.eval_seed = cfg.analysis.eval_seed;
  s.sigma_out = cfg.analysis.regulator_sigma_out;
  s.steps = static_cast<int>(cfg.analysis.regulator_steps);
  s.gamma = cfg.analysis.regulator_gamma;
  return s;
}

/// Landscape over (w, sigma_in, r); writes landscape.csv and landscape_optima.csv.
inline LandscapeResult run_regulator(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  cfg.validate();
  if (cfg.task.kind != ExperimentKind::Regulator) throw ConfigError("regulator needs task.kind = regulator");
  const std::vector<double> w = cfg.landscape_w(), sig = cfg.landscape_sigma(), r = cfg.landscape_r();
  const LandscapeResult res = regulator_landscape_sweep(w, sig, r, regulator_settings(cfg), opt.threads);

  CsvTable cells({"w", "sigma_in", "r", "b_opt", "loss_trained", "loss_zero_sigma_in", "preference", "ok"});
  for (const LandscapeCell& c : res.cells)
    cells.add_row({c.w, c.sigma_in, c.r, c.b_opt, c.loss_trained, c.loss_zero, static_cast<long long>(c.preference),
                   static_cast<long long>(c.ok)});
  CsvTable optima({"w", "sigma_in", "best_r", "best_loss", "distance_to_boundary"});
  // The ReLU kink sits at h = 0, so the distance of a setpoint r >= 0 is r itself.
  for (const LandscapeOptimum& o : res.optima) optima.add_row({o.w, o.sigma_in, o.best_r, o.best_loss, std::abs(o.best_r)});

  const std::filesystem::path out(cfg.out);
  write_result(out / "landscape.csv", cells.str(), cfg, "regulator");
  write_result(out / "landscape_optima.csv", optima.str(), cfg, "regulator");
  return res;
}

struct OuRow {
  std::string form;  // "direct" or "ctrnn"
  double theta_small = 0.0, theta_large = 0.0, sigma = 0.0;
  OuEstimate estimate;
};

/// Stationary means of the piecewise OU process for every analysis.ou_sigmas
/// entry, directly and through its one-neuron network form, plus the
/// symmetric control. Writes ou.csv.
inline std::vector<OuRow> run_ou(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  cfg.validate();
  const auto& a = cfg.analysis;
  std::vector<OuRow> rows;
  for (const char* form : {"direct", "ctrnn"}) {
    for (double s : a.ou_sigmas) rows.push_back({form, a.theta_small, a.theta_large, s, {}});
    if (a.ou_control)
      for (double s : a.ou_sigmas) rows.push_back({form, a.theta_small, a.theta_small, s, {}});
  }
  const RngStream root(cfg.seed);
  parallel_for(rows.size(), opt.threads, [&](std::size_t i) {
    OuRow& row = rows[i];
    OuParams p;
    p.theta_small = row.theta_small;
    p.theta_large = row.theta_large;
    p.sigma = row.sigma;
    p.dt = a.ou_dt;
    p.steps = a.ou_steps;
    p.burn_in = a.ou_burn_in;
    p.batches = static_cast<int>(a.ou_batches);
    p.validate();
    const RngStream rng = root.substream(i);
    row.estimate = row.form == "direct" ? ou_stationary_mean(p, rng) : ou_stationary_mean_ctrnn(p, rng);
  });

  CsvTable t({"form", "theta_small", "theta_large", "sigma", "mean", "std_error", "variance", "variance_std_error"});
  for (const OuRow& r : rows)
    t.add_row({r.form, r.theta_small, r.theta_large, r.sigma, r.estimate.mean, r.estimate.std_error, r.estimate.variance,
               r.estimate.variance_std_error});
  write_result(std::filesystem::path(cfg.out) / "ou.csv", t.str(), cfg, "ou");
  return rows;
}

}  // namespace noisepref
