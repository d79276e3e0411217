// SPDX-License-Identifier: Apache-2.0
//
// noisepref: train / sweep / fixed-points / regulator / ou.
// Exit codes: 0 success, 2 configuration error, 3 runtime error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "noisepref/noisepref.hpp"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 1;
  std::string grid_scale;
  std::string checkpoint;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment config file")->required();
  cmd->add_option("--seed", c.seed, "overrides the config seed");
  cmd->add_option("--out", c.out, "overrides the config output directory");
  cmd->add_option("--threads", c.threads, "worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
  cmd->add_option("--grid-scale", c.grid_scale, "regulator landscape grid: desk or full")
      ->check(CLI::IsMember({"desk", "full"}));
  cmd->add_option("--checkpoint", c.checkpoint, "checkpoint to analyse (default <out>/checkpoint.txt)");
  cmd->add_flag("-q,--quiet", c.quiet, "no progress output");
}

noisepref::ExperimentConfig resolve(const Common& c) {
  noisepref::ExperimentConfig cfg = noisepref::load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out = c.out;
  if (!c.grid_scale.empty()) cfg.analysis.grid_scale = noisepref::parse_grid_scale(c.grid_scale);
  cfg.validate();
  return cfg;
}

noisepref::RunOptions options(const Common& c) {
  noisepref::RunOptions o;
  o.threads = c.threads;
  o.checkpoint = c.checkpoint;
  if (!c.quiet) o.log = [](const std::string& line) { std::cerr << line << '\n'; };
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noise-trained recurrent network experiments"};
  app.set_version_flag("--version", std::string(noisepref::kCodeVersion));
  app.require_subcommand(1);

  Common c;
  auto* train = app.add_subcommand("train", "train a network and write checkpoint.txt and history.csv");
  auto* sweep = app.add_subcommand("sweep", "evaluate a checkpoint over the test-noise grid");
  auto* fixed = app.add_subcommand("fixed-points", "noiseless and noisy fixed points of a function net");
  auto* regulator = app.add_subcommand("regulator", "single-neuron regulator landscape");
  auto* ou = app.add_subcommand("ou", "stationary means of the piecewise OU process");
  for (auto* cmd : {train, sweep, fixed, regulator, ou}) add_common(cmd, c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const noisepref::ExperimentConfig cfg = resolve(c);
    const noisepref::RunOptions opt = options(c);
    if (train->parsed()) {
      const auto run = noisepref::run_train(cfg, opt);
      std::cout << "wrote " << cfg.out << "/checkpoint.txt (" << run.history.size() << " batches)\n";
    } else if (sweep->parsed()) {
      const auto s = noisepref::run_sweep(cfg, opt);
      std::cout << "argmin rmse sigma " << noisepref::format_double(s.argmin_rmse_sigma) << ", argmin |bias| sigma "
                << noisepref::format_double(s.argmin_abs_bias_sigma) << '\n';
    } else if (fixed->parsed()) {
      const auto r = noisepref::run_fixed_points(cfg, opt);
      std::cout << "shift/bias correlation " << noisepref::format_double(r.correlation) << '\n';
    } else if (regulator->parsed()) {
      const auto r = noisepref::run_regulator(cfg, opt);
      std::cout << "wrote " << r.cells.size() << " landscape cells\n";
    } else if (ou->parsed()) {
      const auto rows = noisepref::run_ou(cfg, opt);
      std::cout << "wrote " << rows.size() << " OU rows\n";
    }
  } catch (const noisepref::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
