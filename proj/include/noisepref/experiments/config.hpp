// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration: a sectioned key = value text format.
//
//   # comment
//   seed = 1
//   out = results/sin
//
//   [task]
//   kind = function
//
// Defaults depend on task.kind, which is therefore required. Unknown keys and
// duplicate keys are errors reported as "<source>:<line>:<column>: ...".
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "noisepref/core/activation.hpp"
#include "noisepref/core/errors.hpp"
#include "noisepref/core/network.hpp"
#include "noisepref/analysis/sweep.hpp"
#include "noisepref/experiments/text.hpp"
#include "noisepref/tasks/function_task.hpp"
#include "noisepref/tasks/maze.hpp"
#include "noisepref/training/trainer.hpp"

namespace noisepref {

enum class ExperimentKind { Function, Maze, Regulator, Ou };

inline std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Function: return "function";
    case ExperimentKind::Maze: return "maze";
    case ExperimentKind::Regulator: return "regulator";
    case ExperimentKind::Ou: return "ou";
  }
  return "?";
}

inline ExperimentKind parse_experiment_kind(std::string_view s) {
  if (s == "function") return ExperimentKind::Function;
  if (s == "maze") return ExperimentKind::Maze;
  if (s == "regulator") return ExperimentKind::Regulator;
  if (s == "ou") return ExperimentKind::Ou;
  throw ConfigError("unknown task kind '" + std::string(s) + "' (function, maze, regulator, ou)");
}

enum class GridScale { Desk, Full, Custom };

inline std::string_view to_string(GridScale g) {
  return g == GridScale::Desk ? "desk" : g == GridScale::Full ? "full" : "custom";
}

inline GridScale parse_grid_scale(std::string_view s) {
  if (s == "desk") return GridScale::Desk;
  if (s == "full") return GridScale::Full;
  if (s == "custom") return GridScale::Custom;
  throw ConfigError("unknown grid scale '" + std::string(s) + "' (desk, full, custom)");
}

struct TaskSection {
  ExperimentKind kind = ExperimentKind::Function;
  FunctionTaskConfig function;
  std::string maze_file;  // empty: built-in maze
  MazeTiming timing;
  double velocity_variance = 0.0005;

  friend bool operator==(const TaskSection&, const TaskSection&) = default;
};

struct NetworkSection {
  int n = 100;
  ActivationSpec activation;
  double tau = 0.1;
  double dt = 0.02;

  friend bool operator==(const NetworkSection&, const NetworkSection&) = default;
};

struct AnalysisSection {
  // noise sweeps
  std::vector<double> sigma_grid{0.0, 0.025, 0.05, 0.075, 0.1, 0.125, 0.15, 0.2};
  std::int64_t trials = 1000;  // K, per input (function) or in total (maze)
  std::int64_t inputs = 20;
  // fixed points
  std::int64_t samples = 300;  // S
  bool common_random_numbers = false;
  std::int64_t fp_max_steps = 50000;
  // regulator landscape
  GridScale grid_scale = GridScale::Desk;
  std::vector<double> w_values{-1.0, -2.0};
  std::int64_t r_points = 20;
  double r_min = 0.0, r_max = 1.0;
  std::int64_t sigma_points = 20;
  double sigma_min = 0.0, sigma_max = 2.0;
  double regulator_sigma_out = 1.0;
  std::int64_t regulator_steps = 50;
  double regulator_gamma = 0.2;
  std::int64_t eval_episodes = 10000;
  std::uint64_t eval_seed = 7;
  // piecewise OU
  double theta_small = 1.0, theta_large = 3.0;
  double ou_dt = 1e-3;
  std::int64_t ou_steps = 1'000'000, ou_burn_in = 10'000, ou_batches = 100;
  std::vector<double> ou_sigmas{0.0, 0.5, 1.0, 2.0};
  bool ou_control = true;  // also run theta_small = theta_large = theta_small

  friend bool operator==(const AnalysisSection&, const AnalysisSection&) = default;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string out = "out";
  TaskSection task;
  NetworkSection network;
  TrainConfig training;  // noise and seed fields are filled from the sections above
  NoiseConfig noise;
  AnalysisSection analysis;

  static ExperimentConfig defaults_for(ExperimentKind kind) {
    ExperimentConfig c;
    c.task.kind = kind;
    switch (kind) {
      case ExperimentKind::Function:
        c.training = TrainConfig::function_defaults();
        c.noise.sigma_in = 0.1;
        break;
      case ExperimentKind::Maze:
        c.training = TrainConfig::maze_defaults();
        c.noise = c.training.noise;
        c.network.n = 672;
        c.analysis.sigma_grid = {0.0, 0.0447, 0.0894, 0.1341, 0.1788};
        c.analysis.trials = 360;
        break;
      case ExperimentKind::Regulator:
        c.training = TrainConfig::regulator_defaults();
        c.network.activation.kind = ActivationKind::ReLU;
        break;
      case ExperimentKind::Ou:
        break;
    }
    c.training.noise = {};
    return c;
  }

  /// Training settings with the noise section and seed folded in.
  TrainConfig train_config() const {
    TrainConfig t = training;
    t.noise = noise;
    t.seed = seed;
    return t;
  }

  /// (w, sigma_in, r) grids after applying the grid scale.
  std::vector<double> landscape_w() const {
    if (analysis.grid_scale == GridScale::Desk) return {-1.0, -2.0};
    if (analysis.grid_scale == GridScale::Full) return {-1.0, -2.0, -3.0, -4.0};
    return analysis.w_values;
  }
  std::vector<double> landscape_sigma() const {
    return linspace(analysis.sigma_min, analysis.sigma_max, static_cast<std::size_t>(landscape_points(analysis.sigma_points)));
  }
  std::vector<double> landscape_r() const {
    return linspace(analysis.r_min, analysis.r_max, static_cast<std::size_t>(landscape_points(analysis.r_points)));
  }

  void validate() const {
    if (network.n < 1) throw ConfigError("network.n must be at least 1");
    network.activation.validate();
    if (!(network.tau > 0.0) || !(network.dt > 0.0)) throw ConfigError("network.tau and network.dt must be positive");
    noise.validate();
    train_config().validate();
    task.function.validate();
    if (task.velocity_variance < 0.0) throw ConfigError("task.velocity_variance must be non-negative");
    const auto& a = analysis;
    if (a.trials < 1 || a.inputs < 1 || a.samples < 1 || a.fp_max_steps < 1)
      throw ConfigError("analysis trials, inputs, samples and fp_max_steps must be at least 1");
    if (a.r_points < 1 || a.sigma_points < 1 || a.eval_episodes < 1 || a.regulator_steps < 2)
      throw ConfigError("analysis landscape grid sizes must be positive");
    if (a.ou_steps < 1 || a.ou_burn_in < 0 || a.ou_batches < 1) throw ConfigError("analysis OU step counts out of range");
  }

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;

 private:
  std::int64_t landscape_points(std::int64_t custom) const {
    if (analysis.grid_scale == GridScale::Desk) return 20;
    if (analysis.grid_scale == GridScale::Full) return 100;
    return custom;
  }
};

namespace detail {

inline std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += format_double(v[i]);
  }
  return s;
}

struct ConfigEntry {
  std::string value;
  int line = 0, column = 0, value_column = 0;
};

/// One table drives both parsing and serialization so the two cannot drift.
struct ConfigKey {
  std::string section;
  std::string name;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view)> set;
};

inline double to_double(std::string_view s) {
  if (auto v = parse_double(s)) return *v;
  throw ConfigError("expected a number, got '" + std::string(s) + "'");
}

template <class Int>
Int to_int(std::string_view s) {
  if (auto v = parse_int<Int>(s)) return *v;
  throw ConfigError("expected an integer, got '" + std::string(s) + "'");
}

inline bool to_bool(std::string_view s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError("expected true or false, got '" + std::string(s) + "'");
}

inline std::vector<double> to_doubles(std::string_view s) {
  std::vector<double> out;
  if (trim(s).empty()) return out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = s.find(',', pos);
    out.push_back(to_double(trim(s.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos))));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

#define NOISEPREF_KEY_D(sec, key, field)                                                    \
  ConfigKey{sec, key, [](const ExperimentConfig& c) { return format_double(c.field); }, \
            [](ExperimentConfig& c, std::string_view v) { c.field = to_double(v); }}
#define NOISEPREF_KEY_I(sec, key, field)                                                      \
  ConfigKey{sec, key, [](const ExperimentConfig& c) { return std::to_string(c.field); },   \
            [](ExperimentConfig& c, std::string_view v) { c.field = to_int<decltype(c.field)>(v); }}
#define NOISEPREF_KEY_B(sec, key, field)                                                          \
  ConfigKey{sec, key, [](const ExperimentConfig& c) { return std::string(c.field ? "true" : "false"); }, \
            [](ExperimentConfig& c, std::string_view v) { c.field = to_bool(v); }}
#define NOISEPREF_KEY_L(sec, key, field)                                                      \
  ConfigKey{sec, key, [](const ExperimentConfig& c) { return join_doubles(c.field); },     \
            [](ExperimentConfig& c, std::string_view v) { c.field = to_doubles(v); }}

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      NOISEPREF_KEY_I("", "seed", seed),
      ConfigKey{"", "out", [](const ExperimentConfig& c) { return c.out; },
                [](ExperimentConfig& c, std::string_view v) { c.out = std::string(v); }},

      ConfigKey{"task", "kind", [](const ExperimentConfig& c) { return std::string(to_string(c.task.kind)); },
                [](ExperimentConfig& c, std::string_view v) { c.task.kind = parse_experiment_kind(v); }},
      ConfigKey{"task", "target", [](const ExperimentConfig& c) { return std::string(to_string(c.task.function.target)); },
                [](ExperimentConfig& c, std::string_view v) { c.task.function.target = parse_function_target(v); }},
      NOISEPREF_KEY_I("task", "steps", task.function.steps),
      ConfigKey{"task", "readout", [](const ExperimentConfig& c) { return std::string(to_string(c.task.function.readout)); },
                [](ExperimentConfig& c, std::string_view v) { c.task.function.readout = parse_readout_mode(v); }},
      ConfigKey{"task", "maze_file", [](const ExperimentConfig& c) { return c.task.maze_file; },
                [](ExperimentConfig& c, std::string_view v) { c.task.maze_file = std::string(v); }},
      NOISEPREF_KEY_I("task", "trial_steps", task.timing.trial_steps),
      NOISEPREF_KEY_I("task", "downtime", task.timing.downtime),
      NOISEPREF_KEY_I("task", "jaunt", task.timing.jaunt),
      NOISEPREF_KEY_I("task", "fixation_min", task.timing.fixation_min),
      NOISEPREF_KEY_I("task", "fixation_max", task.timing.fixation_max),
      NOISEPREF_KEY_D("task", "velocity_variance", task.velocity_variance),

      NOISEPREF_KEY_I("network", "n", network.n),
      ConfigKey{"network", "activation",
                [](const ExperimentConfig& c) { return std::string(to_string(c.network.activation.kind)); },
                [](ExperimentConfig& c, std::string_view v) { c.network.activation.kind = parse_activation_kind(v); }},
      NOISEPREF_KEY_D("network", "alpha", network.activation.alpha),
      NOISEPREF_KEY_D("network", "tau", network.tau),
      NOISEPREF_KEY_D("network", "dt", network.dt),

      NOISEPREF_KEY_D("training", "lr0", training.lr0),
      NOISEPREF_KEY_D("training", "half_life", training.half_life),
      NOISEPREF_KEY_D("training", "beta1", training.beta1),
      NOISEPREF_KEY_D("training", "beta2", training.beta2),
      NOISEPREF_KEY_D("training", "epsilon", training.epsilon),
      NOISEPREF_KEY_I("training", "batches", training.batches),
      NOISEPREF_KEY_I("training", "batch_size", training.batch_size),
      NOISEPREF_KEY_D("training", "reg_coeff", training.reg_coeff),
      NOISEPREF_KEY_I("training", "power_iters", training.power_iters),

      NOISEPREF_KEY_D("noise", "sigma_in", noise.sigma_in),
      NOISEPREF_KEY_D("noise", "sigma_out", noise.sigma_out),

      NOISEPREF_KEY_L("analysis", "sigma_grid", analysis.sigma_grid),
      NOISEPREF_KEY_I("analysis", "trials", analysis.trials),
      NOISEPREF_KEY_I("analysis", "inputs", analysis.inputs),
      NOISEPREF_KEY_I("analysis", "samples", analysis.samples),
      NOISEPREF_KEY_B("analysis", "common_random_numbers", analysis.common_random_numbers),
      NOISEPREF_KEY_I("analysis", "fp_max_steps", analysis.fp_max_steps),
      ConfigKey{"analysis", "grid_scale", [](const ExperimentConfig& c) { return std::string(to_string(c.analysis.grid_scale)); },
                [](ExperimentConfig& c, std::string_view v) { c.analysis.grid_scale = parse_grid_scale(v); }},
      NOISEPREF_KEY_L("analysis", "w_values", analysis.w_values),
      NOISEPREF_KEY_I("analysis", "r_points", analysis.r_points),
      NOISEPREF_KEY_D("analysis", "r_min", analysis.r_min),
      NOISEPREF_KEY_D("analysis", "r_max", analysis.r_max),
      NOISEPREF_KEY_I("analysis", "sigma_points", analysis.sigma_points),
      NOISEPREF_KEY_D("analysis", "sigma_min", analysis.sigma_min),
      NOISEPREF_KEY_D("analysis", "sigma_max", analysis.sigma_max),
      NOISEPREF_KEY_D("analysis", "regulator_sigma_out", analysis.regulator_sigma_out),
      NOISEPREF_KEY_I("analysis", "regulator_steps", analysis.regulator_steps),
      NOISEPREF_KEY_D("analysis", "regulator_gamma", analysis.regulator_gamma),
      NOISEPREF_KEY_I("analysis", "eval_episodes", analysis.eval_episodes),
      NOISEPREF_KEY_I("analysis", "eval_seed", analysis.eval_seed),
      NOISEPREF_KEY_D("analysis", "theta_small", analysis.theta_small),
      NOISEPREF_KEY_D("analysis", "theta_large", analysis.theta_large),
      NOISEPREF_KEY_D("analysis", "ou_dt", analysis.ou_dt),
      NOISEPREF_KEY_I("analysis", "ou_steps", analysis.ou_steps),
      NOISEPREF_KEY_I("analysis", "ou_burn_in", analysis.ou_burn_in),
      NOISEPREF_KEY_I("analysis", "ou_batches", analysis.ou_batches),
      NOISEPREF_KEY_L("analysis", "ou_sigmas", analysis.ou_sigmas),
      NOISEPREF_KEY_B("analysis", "ou_control", analysis.ou_control),
  };
  return keys;
}

#undef NOISEPREF_KEY_D
#undef NOISEPREF_KEY_I
#undef NOISEPREF_KEY_B
#undef NOISEPREF_KEY_L

inline std::string where(std::string_view source, int line, int column) {
  return std::string(source) + ":" + std::to_string(line) + ":" + std::to_string(column) + ": ";
}

}  // namespace detail

/// Writes every key, so the output does not depend on kind-specific defaults.
inline std::string serialize_config(const ExperimentConfig& c) {
  std::string out;
  std::string section;
  for (const auto& key : detail::config_keys()) {
    if (key.section != section) {
      section = key.section;
      out += "\n[" + section + "]\n";
    }
    out += key.name + " = " + key.get(c) + "\n";
  }
  return out;
}

inline ExperimentConfig parse_config(std::string_view text, std::string_view source = "config") {
  using detail::ConfigEntry;
  std::map<std::pair<std::string, std::string>, ConfigEntry> entries;
  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const std::string_view line = trim(raw);
    if (line.empty()) continue;
    const int col = static_cast<int>(raw.find_first_not_of(" \t")) + 1;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        throw ConfigError(detail::where(source, line_no, col) + "malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(detail::where(source, line_no, col) + "expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError(detail::where(source, line_no, col) + "empty key");
    const std::string_view value = trim(line.substr(eq + 1));
    const std::size_t vstart = line.find_first_not_of(" \t", eq + 1);
    const int value_col = col + static_cast<int>(vstart == std::string_view::npos ? eq + 1 : vstart);
    auto [it, fresh] = entries.try_emplace({section, key}, ConfigEntry{std::string(value), line_no, col, value_col});
    if (!fresh) throw ConfigError(detail::where(source, line_no, col) + "duplicate key '" + key + "'");
  }

  const auto kind_it = entries.find({"task", "kind"});
  if (kind_it == entries.end()) throw ConfigError(std::string(source) + ": missing required key task.kind");
  ExperimentKind kind;
  try {
    kind = parse_experiment_kind(kind_it->second.value);
  } catch (const ConfigError& e) {
    throw ConfigError(detail::where(source, kind_it->second.line, kind_it->second.value_column) + e.what());
  }
  ExperimentConfig c = ExperimentConfig::defaults_for(kind);

  std::map<std::pair<std::string, std::string>, const detail::ConfigKey*> known;
  for (const auto& k : detail::config_keys()) known[{k.section, k.name}] = &k;
  for (const auto& [name, entry] : entries) {
    const auto k = known.find(name);
    if (k == known.end()) {
      const std::string qualified = name.first.empty() ? name.second : name.first + "." + name.second;
      throw ConfigError(detail::where(source, entry.line, entry.column) + "unknown key '" + qualified + "'");
    }
    try {
      k->second->set(c, entry.value);
    } catch (const ConfigError& e) {
      throw ConfigError(detail::where(source, entry.line, entry.value_column) + e.what());
    }
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path), path.string());
}

/// Hash of the canonical config text with the output directory blanked, so
/// the same experiment written to two places gets the same identity.
inline std::string config_hash(const ExperimentConfig& c) {
  ExperimentConfig canon = c;
  canon.out.clear();
  return fnv1a_hex(serialize_config(canon));
}

}  // namespace noisepref
