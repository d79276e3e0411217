// SPDX-License-Identifier: Apache-2.0
//
// Release acceptance: one PASS/FAIL line per criterion.
//   acceptance [--out DIR] [--long | --maze-only] [--skip-determinism] [--known-failure ID]...
// Exit status is 0 only if every criterion that ran passed or is listed with
// --known-failure. Known failures still print FAIL. The report is also
// written to DIR/report.txt.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "noisepref/noisepref.hpp"
#include "support/oracles.hpp"

using namespace noisepref;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  std::string id;
  std::string title;
  bool pass = false;
  std::string detail;
};

std::vector<Verdict> verdicts;
std::vector<std::string> known_failures;
std::string report_text;

bool is_known(const std::string& id) {
  return std::find(known_failures.begin(), known_failures.end(), id) != known_failures.end();
}

void emit(const std::string& line) {
  std::fputs(line.c_str(), stdout);
  std::fflush(stdout);
  report_text += line;
}

void report(std::string id, std::string title, bool pass, std::string detail) {
  emit("[" + std::string(pass ? "PASS" : "FAIL") + "] criterion " + id + ": " + title + " (" + detail + ")" +
       (!pass && is_known(id) ? " [known failure]" : "") + "\n");
  verdicts.push_back({std::move(id), std::move(title), pass, std::move(detail)});
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

ExperimentConfig shipped(const std::string& name, const fs::path& out) {
  ExperimentConfig c = load_config(fs::path(NOISEPREF_SOURCE_DIR) / "configs" / name);
  c.out = out.string();
  return c;
}

void log_step(const std::string& s) {
  std::fprintf(stderr, "  .. %s\n", s.c_str());
}

std::vector<double> flatten(const TensorSet& g) {
  std::vector<double> out;
  TensorSet::for_each(g, [&](std::string_view, const auto& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  });
  return out;
}

// Each stage writes its artifacts under `dir`. With judge == false it only
// regenerates them for the determinism comparison.
struct Suite {
  fs::path dir;
  int threads = 1;
  bool judge = true;

  void gradients() const {
    CsvTable t({"seed", "entry", "bptt", "finite_difference"});
    double worst = 0.0;
    std::size_t checked = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      NetworkParams p = init_params(8, 1, 1, seed, TaskKind::Function);
      const RngStream r = RngStream(seed).substream(99);
      for (Eigen::Index i = 0; i < 8; ++i) p.b_in(i) = 0.3 * r.normal(static_cast<std::uint64_t>(i));
      p.h0.col(0) = 0.3 * Vector::NullaryExpr(8, [&](Eigen::Index i) { return r.normal(100 + static_cast<std::uint64_t>(i)); });
      FunctionTaskConfig task;
      task.steps = 20;
      task.readout = ReadoutMode::Random;
      const TrialBatch batch = gen_function_batch(task, 4, RngStream(seed + 10));
      const NoiseConfig noise{0.1, 0.05};
      const RngStream noise_rng(seed + 20);
      const std::vector<double> g = flatten(bptt_gradient(p, noise, batch, noise_rng, nullptr, threads).grads);
      const std::vector<long double> fd = oracle::fd_gradient(p, noise, batch, noise_rng, 1e-5L);
      for (std::size_t i = 0; i < g.size(); ++i) {
        t.add_row({static_cast<long long>(seed), static_cast<long long>(i), g[i], static_cast<double>(fd[i])});
        if (std::abs(g[i]) > 1e-8) {
          ++checked;
          worst = std::max(worst, static_cast<double>(std::abs(g[i] - fd[i]) / std::abs(fd[i])));
        }
      }
    }
    write_file_atomic(dir / "c1_gradients.csv", t.str());
    if (judge)
      report("1", "BPTT matches central differences", worst < 1e-5,
             "max rel error " + fmt(worst) + " over " + std::to_string(checked) + " entries, bound 1e-5");
  }

  void adam() const {
    const AdamConfig cfg;
    CsvTable t({"case", "step", "theta"});
    double worst = 0.0;
    const auto run = [&](const std::string& name, double theta0, std::vector<double> grads, double lr,
                         std::vector<long double> expect) {
      Vector th = Vector::Constant(1, theta0), m = Vector::Zero(1), v = Vector::Zero(1);
      for (std::size_t k = 0; k < grads.size(); ++k) {
        adam_update(th, m, v, Vector::Constant(1, grads[k]), static_cast<std::int64_t>(k + 1), lr, cfg);
        t.add_row({name, static_cast<long long>(k + 1), th(0)});
        worst = std::max(worst, static_cast<double>(std::abs(th(0) - expect[k])));
      }
    };
    // references evaluated to 25+ digits
    run("unit", 0.0, {1.0}, 0.1, {-0.1L / (1.0L + 1e-7L)});
    run("negative", 0.5, {-2.0}, 0.01, {0.5099999995000000249999987L});
    run("two_step", 1.0, {1.0, 0.5}, 0.1, {0.9000000099999990000001L, 0.8067820579118699631441763L});
    NetworkParams p = init_params(4, 1, 1, 3, TaskKind::Function);
    const NetworkParams before = p;
    OptimizerState s = OptimizerState::zeros_like(p);
    adam_step(p, s, GradientSet::zeros_like(p), 0.1, cfg);
    const bool noop = bit_identical(p, before);
    write_file_atomic(dir / "c2_adam.csv", t.str());
    if (judge)
      report("2", "ADAM traces and zero-gradient no-op", worst < 1e-12 && noop,
             "max trace error " + fmt(worst) + ", bound 1e-12; zero-gradient step " + (noop ? "no-op" : "MOVED"));
  }

  void relu_gaussian() const {
    const std::vector<double> mus{-2, -1, 0, 1, 2}, sigmas{0.1, 0.5, 1, 2};
    struct Cell {
      double mu, sigma, closed;
      oracle::Moments mc;
    };
    std::vector<Cell> cells;
    for (double mu : mus)
      for (double s : sigmas) cells.push_back({mu, s, relu_gaussian_mean(mu, s), {}});
    parallel_for(cells.size(), threads, [&](std::size_t i) {
      std::mt19937_64 gen(1000 + i);
      std::normal_distribution<double> normal;
      const double mu = cells[i].mu, s = cells[i].sigma;
      cells[i].mc = oracle::monte_carlo(10'000'000, [&] { return std::max(0.0, mu + s * normal(gen)); });
    });
    CsvTable t({"mu", "sigma", "closed_form", "mc_mean", "mc_std_error"});
    double worst = 0.0;
    for (const Cell& c : cells) {
      t.add_row({c.mu, c.sigma, c.closed, c.mc.mean, c.mc.std_error});
      const double diff = std::abs(c.closed - c.mc.mean);
      // Far below the kink every sample can be zero; then SE = 0 and the closed form must be negligible.
      const double dev = c.mc.std_error > 0.0 ? diff / c.mc.std_error : (diff < 1e-12 ? 0.0 : HUGE_VAL);
      worst = std::max(worst, dev);
    }
    bool exact = true;
    for (double mu : mus) exact = exact && relu_gaussian_mean(mu, 0.0) == std::max(mu, 0.0);
    write_file_atomic(dir / "c3_relu_gaussian.csv", t.str());
    if (judge)
      report("3", "rectified Gaussian mean vs 1e7-sample Monte Carlo", worst < 3.0 && exact,
             "worst deviation " + fmt(worst) + " SE, bound 3; sigma=0 " + (exact ? "exact" : "NOT exact"));
  }

  void ou() const {
    const ExperimentConfig cfg = shipped("piecewise_ou.ini", dir / "piecewise_ou");
    const std::vector<OuRow> rows = run_ou(cfg, {.threads = threads});
    if (!judge) return;
    bool pass = true;
    std::ostringstream d;
    for (const char* form : {"direct", "ctrnn"}) {
      double prev = 0.0;
      for (const OuRow& r : rows) {
        if (r.form != form) continue;
        const OuEstimate& e = r.estimate;
        if (r.theta_small == r.theta_large) {
          const bool ok = r.sigma == 0.0 ? e.mean == 0.0 : std::abs(e.mean) < 3.0 * e.std_error;
          pass = pass && ok;
          if (!ok) d << form << " control sigma " << r.sigma << " mean " << fmt(e.mean) << "; ";
        } else if (r.sigma == 0.0) {
          pass = pass && e.mean == 0.0;
          if (e.mean != 0.0) d << form << " sigma 0 mean " << fmt(e.mean) << "; ";
        } else {
          const bool ok = e.mean > 3.0 * e.std_error && e.mean > prev;
          pass = pass && ok;
          d << form << " " << r.sigma << ":" << fmt(e.mean) << "+-" << fmt(e.std_error) << " ";
          prev = e.mean;
        }
      }
    }
    report("4", "piecewise OU mean shifts upward with noise", pass, d.str());
  }

  SweepSummary function_run(const std::string& ini, const std::string& name, double* final_rmse) const {
    const ExperimentConfig cfg = shipped(ini, dir / name);
    RunOptions opt{.threads = threads};
    if (judge) opt.log = log_step;
    const TrainRun run = run_train(cfg, opt);
    if (final_rmse) *final_rmse = std::sqrt(run.history.back().loss);
    return run_sweep(cfg, opt);
  }

  void noise_in() const {
    double final_rmse = 0.0;
    const SweepSummary s = function_run("sin_noise_in.ini", "sin_noise_in", &final_rmse);
    if (!judge) return;
    const auto at = [&](double sigma) -> const SweepRow& {
      for (const SweepRow& r : s.result.aggregate)
        if (r.sigma_test == sigma) return r;
      throw std::runtime_error("sigma not in grid");
    };
    const SweepRow &r0 = at(0.0), &r1 = at(0.1), &r2 = at(0.2);
    const bool pass = r1.rmse < r0.rmse && r1.rmse < r2.rmse && r0.abs_bias > r1.abs_bias;
    report("5", "noise-in net prefers its training noise", pass,
           "rmse(0)=" + fmt(r0.rmse) + " rmse(0.1)=" + fmt(r1.rmse) + " rmse(0.2)=" + fmt(r2.rmse) +
               " |bias|(0)=" + fmt(r0.abs_bias) + " |bias|(0.1)=" + fmt(r1.abs_bias) +
               " pooled bias(0)=" + fmt(r0.mean_error) + " pooled bias(0.1)=" + fmt(r1.mean_error));
    report("5a", "final training batch RMSE", final_rmse < 0.05, fmt(final_rmse) + ", bound 0.05");
  }

  void noise_out() const {
    const SweepSummary s = function_run("sin_noise_out.ini", "sin_noise_out", nullptr);
    if (!judge) return;
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0, sum = 0.0;
    for (const SweepRow& r : s.result.aggregate) {
      lo = std::min(lo, r.abs_bias);
      hi = std::max(hi, r.abs_bias);
      sum += r.abs_bias;
    }
    const double mean = sum / static_cast<double>(s.result.aggregate.size());
    const double spread = (hi - lo) / mean;
    std::string profile;
    for (const SweepRow& r : s.result.aggregate) profile += " " + fmt(r.sigma_test) + ":" + fmt(r.abs_bias);
    report("6", "noise-out net is best without noise and its bias is flat",
           s.argmin_rmse_sigma == 0.0 && spread < 0.2,
           "argmin rmse sigma " + fmt(s.argmin_rmse_sigma) + "; |bias| spread " + fmt(spread) +
               " of mean, bound 0.2;" + profile);
  }

  void fixed_points() const {
    ExperimentConfig cfg = shipped("sin_fixed_points.ini", dir / "sin_noise_in");
    const FixedPointRun r = run_fixed_points(cfg, {.threads = threads});
    if (!judge) return;
    const double sigma = 0.1;
    const double expect_threshold = 0.01 * sigma * sigma * 64.0 / 300.0;  // (1/3e-4) * 64/100
    double worst_quiet = 0.0, worst_noisy = 0.0;
    bool converged = true, threshold_ok = true;
    for (std::size_t i = 0; i < r.inputs.size(); ++i) {
      converged = converged && r.noiseless[i].converged && r.noisy[i].converged;
      worst_quiet = std::max(worst_quiet, r.noiseless[i].residual);
      worst_noisy = std::max(worst_noisy, r.noisy[i].residual);
      threshold_ok = threshold_ok && std::abs(r.noisy[i].threshold - expect_threshold) <= 1e-15 * expect_threshold;
    }
    const bool pass = r.inputs.size() == 20 && converged && threshold_ok && worst_quiet < 4.9e-9 &&
                      worst_noisy < expect_threshold && r.correlation >= 0.8;
    report("7", "fixed point shifts track the zero-noise bias", pass,
           "noiseless residual max " + fmt(worst_quiet) + " (< 4.9e-9), noisy residual max " + fmt(worst_noisy) +
               " (< " + fmt(expect_threshold) + "), pearson " + fmt(r.correlation) + " (>= 0.8)" +
               (converged ? "" : ", NOT all converged"));
  }

  void regulator() const {
    ExperimentConfig cfg = shipped("regulator_landscape.ini", dir / "regulator_landscape");
    cfg.analysis.grid_scale = GridScale::Custom;
    cfg.analysis.w_values = {-1.0, -2.0};
    cfg.analysis.r_points = 10;
    cfg.analysis.sigma_points = 10;
    const LandscapeResult res = run_regulator(cfg, {.threads = threads});
    if (!judge) return;
    bool pass = true;
    std::ostringstream d;
    for (double w : cfg.analysis.w_values) {
      int inversions = 0;
      double prev = std::numeric_limits<double>::infinity();
      d << "w=" << w << " best r:";
      for (const LandscapeOptimum& o : res.optima) {
        if (o.w != w) continue;
        const double dist = std::abs(o.best_r);
        if (dist > prev) ++inversions;
        prev = dist;
        d << " " << fmt(o.best_r);
      }
      d << " (" << inversions << " inversions); ";
      pass = pass && inversions <= 1;
    }
    bool any_high = false, any_zero = false, all_ok = true;
    for (const LandscapeCell& c : res.cells) {
      all_ok = all_ok && c.ok;
      if (c.sigma_in / cfg.analysis.regulator_sigma_out > 1.0 && c.preference) any_high = true;
      if (c.sigma_in == 0.0 && c.preference) any_zero = true;
    }
    pass = pass && any_high && !any_zero && all_ok;
    d << "preference above sigma ratio 1: " << (any_high ? "yes" : "no") << ", at sigma_in 0: "
      << (any_zero ? "yes" : "no");
    report("8", "regulator optimum moves toward the kink", pass, d.str());
  }

  void run_all() const {
    const auto timed = [&](const char* name, auto&& f) {
      const auto t0 = std::chrono::steady_clock::now();
      f();
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::fprintf(stderr, "  %s done in %.1f s (threads %d)\n", name, s, threads);
    };
    timed("gradients", [&] { gradients(); });
    timed("adam", [&] { adam(); });
    timed("relu_gaussian", [&] { relu_gaussian(); });
    timed("ou", [&] { ou(); });
    timed("noise_in", [&] { noise_in(); });
    timed("noise_out", [&] { noise_out(); });
    timed("fixed_points", [&] { fixed_points(); });
    timed("regulator", [&] { regulator(); });
  }
};

void maze(const fs::path& dir, int threads) {
  ExperimentConfig cfg = shipped("maze_noise_in.ini", dir / "maze_noise_in");
  RunOptions opt{.threads = threads, .log = log_step};
  run_train(cfg, opt);
  const SweepSummary s = run_sweep(cfg, opt);
  const double train = cfg.noise.sigma_in;
  const SweepRow *quiet = nullptr, *matched = nullptr;
  for (const SweepRow& r : s.result.aggregate) {
    if (r.sigma_test == 0.0) quiet = &r;
    if (r.sigma_test == train) matched = &r;
  }
  if (!quiet || !matched) throw ConfigError("maze sweep grid must contain 0 and the training sigma");
  report("9", "maze net is best at its training noise and undershoots without it",
         matched->rmse < quiet->rmse && quiet->along_route < 0.0,
         "rmse(0)=" + fmt(quiet->rmse) + " rmse(" + fmt(train) + ")=" + fmt(matched->rmse) +
             " along-route error at 0 = " + fmt(quiet->along_route));
}

std::vector<fs::path> files_under(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"noisepref acceptance checks"};
  std::string out = "acceptance_out";
  bool long_run = false, maze_only = false, skip_determinism = false;
  app.add_option("--out", out, "scratch directory for artifacts");
  app.add_flag("--long", long_run, "also run the reduced-scale maze criterion");
  app.add_flag("--maze-only", maze_only, "run only the maze criterion");
  app.add_flag("--skip-determinism", skip_determinism, "skip the threads 1 vs 8 rerun");
  app.add_option("--known-failure", known_failures, "criterion id whose failure does not change the exit status");
  CLI11_PARSE(app, argc, argv);

  const fs::path root(out);
  try {
    fs::remove_all(root);
    const Suite one{root / "threads1", 1, true};
    if (!maze_only) one.run_all();
    if (!maze_only && !skip_determinism) {
      const Suite eight{root / "threads8", 8, false};
      eight.run_all();
      const auto a = files_under(one.dir), b = files_under(eight.dir);
      std::vector<std::string> differ;
      for (const fs::path& f : a)
        if (std::find(b.begin(), b.end(), f) == b.end() || read_file(one.dir / f) != read_file(eight.dir / f))
          differ.push_back(f.string());
      const bool pass = a == b && differ.empty() && !a.empty();
      std::string detail = std::to_string(a.size()) + " artifacts compared";
      for (const auto& f : differ) detail += ", differs: " + f;
      report("10", "artifacts byte-identical for 1 and 8 threads", pass, detail);
    }
    if (long_run || maze_only) maze(root / "long", 1);
  } catch (const std::exception& e) {
    report("-", "acceptance run aborted", false, e.what());
  }

  std::size_t failed = 0, unexpected = 0;
  for (const Verdict& v : verdicts) {
    if (v.pass) continue;
    ++failed;
    if (!is_known(v.id)) ++unexpected;
  }
  emit(std::to_string(verdicts.size()) + " checks, " + std::to_string(failed) + " failed, " +
       std::to_string(unexpected) + " not listed as known\n");
  try {
    write_file_atomic(root / "report.txt", report_text);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "could not write report: %s\n", e.what());
  }
  return unexpected == 0 ? 0 : 1;
}
