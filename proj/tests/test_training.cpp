// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <Eigen/SVD>
#include <cmath>

#include "noisepref/tasks/function_task.hpp"
#include "noisepref/tasks/maze.hpp"
#include "noisepref/tasks/regulator.hpp"
#include "noisepref/training/adam.hpp"
#include "noisepref/training/bptt.hpp"
#include "noisepref/training/init.hpp"
#include "noisepref/training/loss.hpp"
#include "noisepref/training/spectral_norm.hpp"
#include "noisepref/training/trainer.hpp"
#include "support/oracles.hpp"

using namespace noisepref;

namespace {

std::vector<double> flatten(const TensorSet& g) {
  std::vector<double> out;
  TensorSet::for_each(g, [&](std::string_view, const auto& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  });
  return out;
}

// Random open-loop batch with one or two marked steps per trial.
TrialBatch random_batch(Eigen::Index steps, Eigen::Index m, Eigen::Index p, std::size_t trials, const RngStream& rng) {
  TrialBatch b;
  for (std::size_t i = 0; i < trials; ++i) {
    const RngStream r = rng.substream(i);
    Matrix in(steps, m), y(steps, p);
    for (Eigen::Index t = 0; t < steps; ++t) {
      for (Eigen::Index k = 0; k < m; ++k) in(t, k) = r.normal(static_cast<std::uint64_t>(t * m + k));
      for (Eigen::Index k = 0; k < p; ++k) y(t, k) = 0.5 * r.substream(1).normal(static_cast<std::uint64_t>(t * p + k));
    }
    ReadoutMask mask(static_cast<std::size_t>(steps), 0);
    mask.back() = 1;
    mask[static_cast<std::size_t>(r.uniform_int(999, 0, steps - 2))] = 1;
    b.inputs.push_back(in);
    b.targets.push_back(y);
    b.masks.push_back(mask);
    b.init_index.push_back(0);
  }
  return b;
}

NetworkParams randomized(NetworkParams p, std::uint64_t seed) {
  const RngStream r = RngStream(seed).substream(99);
  std::uint64_t k = 0;
  for (Eigen::Index i = 0; i < p.b_in.size(); ++i) p.b_in(i) = 0.3 * r.normal(k++);
  for (Eigen::Index i = 0; i < p.b_out.size(); ++i) p.b_out(i) = 0.3 * r.normal(k++);
  for (Eigen::Index i = 0; i < p.h0.size(); ++i) p.h0.data()[i] = 0.3 * r.normal(k++);
  return p;
}

double max_rel_error(const std::vector<double>& a, const std::vector<long double>& b, double floor, std::size_t* checked) {
  double worst = 0.0;
  *checked = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double ref = static_cast<double>(b[i]);
    if (std::abs(ref) <= floor && std::abs(a[i]) <= floor) continue;
    ++*checked;
    worst = std::max(worst, std::abs(a[i] - ref) / std::max(std::abs(a[i]), std::abs(ref)));
  }
  return worst;
}

}  // namespace

TEST(Loss, Examples) {
  const ReadoutMask one{1};
  const Matrix z = Matrix::Constant(1, 1, 1.0), y = Matrix::Zero(1, 1);
  EXPECT_EQ(loss_mse_readout(std::vector<Matrix>{z}, std::vector<Matrix>{y}, std::vector<ReadoutMask>{one}), 1.0);
  EXPECT_EQ(loss_mse_readout(std::vector<Matrix>{z}, std::vector<Matrix>{z}, std::vector<ReadoutMask>{one}), 0.0);
  Matrix z2(2, 1), y2 = Matrix::Zero(2, 1);
  z2 << 1, -1;
  EXPECT_EQ(loss_mse_readout(std::vector<Matrix>{z2}, std::vector<Matrix>{y2}, std::vector<ReadoutMask>{{1, 1}}), 1.0);
  // unmarked rows do not count
  EXPECT_EQ(loss_mse_readout(std::vector<Matrix>{z2}, std::vector<Matrix>{y2}, std::vector<ReadoutMask>{{0, 1}}), 1.0);
}

TEST(Loss, EmptyMaskIsAConfigError) {
  const Matrix z = Matrix::Zero(2, 1);
  EXPECT_THROW(loss_mse_readout(std::vector<Matrix>{z}, std::vector<Matrix>{z}, std::vector<ReadoutMask>{{0, 0}}),
               ConfigError);
  EXPECT_THROW(loss_mse_readout(std::vector<Matrix>{}, std::vector<Matrix>{}, std::vector<ReadoutMask>{}), ConfigError);
}

TEST(SpectralNorm, Examples) {
  EXPECT_NEAR(spectral_norm_sq(Matrix::Identity(5, 5)), 1.0, 1e-14);
  Matrix d = Matrix::Zero(3, 3);
  d.diagonal() << 3, 1, 0.5;
  EXPECT_NEAR(spectral_norm_sq(d), 9.0, 1e-12);
  EXPECT_EQ(spectral_norm_sq(Matrix::Zero(4, 4)), 0.0);
  EXPECT_THROW(spectral_norm_sq(Matrix::Zero(2, 3)), ConfigError);
}

TEST(SpectralNorm, MatchesDenseSvd) {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const RngStream r(seed);
    Matrix w(10, 10);
    for (Eigen::Index i = 0; i < 100; ++i) w.data()[i] = r.normal(static_cast<std::uint64_t>(i));
    const double ref = std::pow(Eigen::JacobiSVD<Matrix>(w).singularValues()(0), 2);
    EXPECT_NEAR(spectral_norm_sq(w, 2000), ref, 1e-9 * ref) << "seed " << seed;
    // a short run is a lower bound that is already close
    EXPECT_LE(spectral_norm_sq(w), ref * (1.0 + 1e-12));
    EXPECT_GT(spectral_norm_sq(w), 0.99 * ref);
  }
}

TEST(SpectralNorm, GradientMatchesFiniteDifferences) {
  const RngStream r(17);
  Matrix w(6, 6);
  for (Eigen::Index i = 0; i < 36; ++i) w.data()[i] = r.normal(static_cast<std::uint64_t>(i));
  const SingularEstimate est = power_iteration(w, 500);
  const Matrix g = est.gradient();
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < 6; ++i) {
    for (Eigen::Index j = 0; j < 6; ++j) {
      Matrix up = w, down = w;
      up(i, j) += h;
      down(i, j) -= h;
      const double fd = (power_iteration(up, 500).sigma_sq - power_iteration(down, 500).sigma_sq) / (2 * h);
      EXPECT_NEAR(g(i, j), fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(LrSchedule, HalfLives) {
  EXPECT_EQ(lr_schedule(0, 0.001, 2500), 0.001);
  EXPECT_DOUBLE_EQ(lr_schedule(2500, 0.001, 2500), 0.0005);
  EXPECT_DOUBLE_EQ(lr_schedule(5000, 0.001, 2500), 0.00025);
  double prev = lr_schedule(0, 0.004, 1500);
  for (std::int64_t k = 1; k < 6000; ++k) {
    const double lr = lr_schedule(k, 0.004, 1500);
    ASSERT_GT(lr, 0.0);
    ASSERT_LT(lr, prev);
    prev = lr;
  }
}

TEST(Adam, ZeroGradientOnFreshStateIsANoOp) {
  NetworkParams p = init_params(4, 2, 1, 3, TaskKind::Function);
  const NetworkParams before = p;
  OptimizerState s = OptimizerState::zeros_like(p);
  adam_step(p, s, GradientSet::zeros_like(p), 0.1, {});
  EXPECT_EQ(p.w_rec, before.w_rec);
  EXPECT_EQ(p.w_in, before.w_in);
  EXPECT_EQ(p.b_in, before.b_in);
  EXPECT_EQ(p.w_out, before.w_out);
  EXPECT_EQ(p.b_out, before.b_out);
  EXPECT_EQ(p.h0, before.h0);
  EXPECT_EQ(s.t, 1);
}

TEST(Adam, ScalarTraces) {
  const AdamConfig cfg;
  Vector th = Vector::Zero(1), m = Vector::Zero(1), v = Vector::Zero(1);
  adam_update(th, m, v, Vector::Constant(1, 1.0), 1, 0.1, cfg);
  EXPECT_NEAR(th(0), -0.1 / (1.0 + 1e-7), 1e-12);
  EXPECT_NEAR(th(0), -0.09999999, 1e-8);

  // theta0 = 0.5, g = -2, lr = 0.01: reference from a 40-digit evaluation.
  th(0) = 0.5;
  m.setZero();
  v.setZero();
  adam_update(th, m, v, Vector::Constant(1, -2.0), 1, 0.01, cfg);
  EXPECT_NEAR(th(0), 0.5099999995000000249999987, 1e-12);

  // theta0 = 1 with gradients 1 then 0.5 at lr = 0.1.
  th(0) = 1.0;
  m.setZero();
  v.setZero();
  adam_update(th, m, v, Vector::Constant(1, 1.0), 1, 0.1, cfg);
  EXPECT_NEAR(th(0), 0.9000000099999990000001, 1e-12);
  EXPECT_NEAR(m(0), 0.1, 1e-15);
  EXPECT_NEAR(v(0), 0.001, 1e-15);
  adam_update(th, m, v, Vector::Constant(1, 0.5), 2, 0.1, cfg);
  EXPECT_NEAR(th(0), 0.8067820579118699631441763, 1e-12);
  EXPECT_NEAR(m(0), 0.14, 1e-15);
  EXPECT_NEAR(v(0), 0.001249, 1e-15);
}

TEST(Adam, FirstStepIsScaleInvariantWithoutEpsilon) {
  const AdamConfig cfg{0.9, 0.999, 0.0};
  Vector g(3);
  g << 0.3, -2.0, 1e-3;
  for (double c : {1e-3, 1.0, 250.0}) {
    Vector th = Vector::Zero(3), m = Vector::Zero(3), v = Vector::Zero(3);
    adam_update(th, m, v, Vector(c * g), 1, 0.01, cfg);
    for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(th(i), -0.01 * (g(i) > 0 ? 1 : -1), 1e-15);
  }
}

TEST(Adam, NonFiniteGradientNamesTheTensor) {
  NetworkParams p = init_params(3, 1, 1, 3, TaskKind::Function);
  OptimizerState s = OptimizerState::zeros_like(p);
  GradientSet g = GradientSet::zeros_like(p);
  g.w_out(0, 1) = std::nan("");
  try {
    adam_step(p, s, g, 0.1, {});
    FAIL();
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.tensor(), "W_out");
  }
}

TEST(Adam, FrozenTensorsStayPut) {
  NetworkParams p = init_params(3, 1, 1, 3, TaskKind::Function);
  p.trainable.w_rec = false;
  const Matrix keep = p.w_rec;
  OptimizerState s = OptimizerState::zeros_like(p);
  GradientSet g = GradientSet::zeros_like(p);
  g.w_rec.setConstant(1.0);
  g.b_in.setConstant(1.0);
  adam_step(p, s, g, 0.1, {}, p.trainable);
  EXPECT_EQ(p.w_rec, keep);
  EXPECT_LT(p.b_in.maxCoeff(), 0.0);
}

TEST(Init, WeightScaleAndZeroBiases) {
  const NetworkParams p = init_params(100, 3, 2, 5, TaskKind::Function);
  const double mean = p.w_rec.mean();
  const double sd = std::sqrt((p.w_rec.array() - mean).square().sum() / (p.w_rec.size() - 1));
  EXPECT_NEAR(sd, 0.08, 0.05 * 0.08);
  EXPECT_TRUE(p.b_in.isZero(0.0));
  EXPECT_TRUE(p.b_out.isZero(0.0));
  EXPECT_TRUE(p.h0.isZero(0.0));
  EXPECT_EQ(p.h0.cols(), 1);
  EXPECT_EQ(init_params(8, 6, 2, 1, TaskKind::Maze, 6).h0.cols(), 6);
  EXPECT_THROW(init_params(1, 0, 1, 1, TaskKind::Regulator), ConfigError);
  // Same seed, same weights.
  EXPECT_EQ(init_params(100, 3, 2, 5, TaskKind::Function).w_rec, p.w_rec);
}

TEST(Init, RegulatorOnlyTrainsTheBiasStartingAtTheSetpointPlacement) {
  RegulatorConfig c;
  c.r = 0.3;
  c.w = -2.0;
  c.b = c.setpoint_bias();
  const NetworkParams p = regulator_network(c);
  EXPECT_DOUBLE_EQ(p.b_in(0), 0.3 * 3.0);
  EXPECT_EQ(p.h0(0, 0), 0.3);
  EXPECT_TRUE(p.trainable.b_in);
  EXPECT_FALSE(p.trainable.w_rec || p.trainable.w_in || p.trainable.w_out || p.trainable.b_out || p.trainable.h0);
}

TEST(Bptt, DeadInputPathHasZeroGradient) {
  NetworkParams p = randomized(init_params(5, 2, 1, 2, TaskKind::Function), 2);
  p.w_rec.setZero();
  p.w_out.setZero();
  const TrialBatch b = random_batch(10, 2, 1, 3, RngStream(4));
  const GradientResult g = bptt_gradient(p, {0.1, 0.0}, b, RngStream(5));
  EXPECT_TRUE(g.grads.w_in.isZero(0.0));
}

TEST(Bptt, HandDerivedSingleStep) {
  NetworkParams p = init_params(1, 1, 1, 1, TaskKind::Function, 1, {ActivationKind::ReLU});
  p.tau = p.dt = 0.02;
  p.w_rec(0, 0) = 0.7;
  p.w_in(0, 0) = -0.4;
  p.b_in(0) = 0.9;
  p.w_out(0, 0) = 1.3;
  p.b_out(0) = -0.2;
  p.h0(0, 0) = 0.5;
  const double u = 0.25, y = 0.1;
  TrialBatch b;
  b.inputs.push_back(Matrix::Constant(1, 1, u));
  b.targets.push_back(Matrix::Constant(1, 1, y));
  b.masks.push_back({1});
  b.init_index.push_back(0);
  const double h1 = 0.7 * 0.5 - 0.4 * u + 0.9;
  const double e = 2.0 * (1.3 * h1 - 0.2 - y);
  const GradientResult g = bptt_gradient(p, {}, b, RngStream(1));
  EXPECT_NEAR(g.grads.w_rec(0, 0), e * 1.3 * 0.5, 1e-15);
  EXPECT_NEAR(g.grads.w_in(0, 0), e * 1.3 * u, 1e-15);
  EXPECT_NEAR(g.grads.b_in(0), e * 1.3, 1e-15);
  EXPECT_NEAR(g.grads.w_out(0, 0), e * h1, 1e-15);
  EXPECT_NEAR(g.grads.b_out(0), e, 1e-15);
  EXPECT_NEAR(g.grads.h0(0, 0), e * 1.3 * 0.7, 1e-15);
  EXPECT_NEAR(g.loss, 0.25 * e * e, 1e-15);
}

class BpttFiniteDifference : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(BpttFiniteDifference, OpenLoopSoftPlus) {
  const std::uint64_t seed = GetParam();
  const NetworkParams p = randomized(init_params(8, 1, 1, seed, TaskKind::Function), seed);
  const TrialBatch b = random_batch(20, 1, 1, 3, RngStream(seed + 100));
  const NoiseConfig noise{0.1, 0.05};
  const RngStream noise_rng(seed + 200);
  const GradientResult g = bptt_gradient(p, noise, b, noise_rng);
  EXPECT_NEAR(g.loss, static_cast<double>(oracle::batch_loss(oracle::LongNet(p), noise, b, noise_rng)), 1e-13);
  std::size_t checked = 0;
  const double err = max_rel_error(flatten(g.grads), oracle::fd_gradient(p, noise, b, noise_rng), 1e-8, &checked);
  EXPECT_LT(err, 1e-5);
  EXPECT_GT(checked, 80u);
}

TEST_P(BpttFiniteDifference, ClosedLoopMaze) {
  const std::uint64_t seed = GetParam();
  const MazeTask task;
  NetworkParams p = randomized(init_params(6, 6, 2, seed, TaskKind::Maze, task.spec.size()), seed);
  MazeTask short_task = task;
  short_task.timing = {90, 5, 10, 10, 12};
  TrialBatch b = short_task.make_batch(0, 2, RngStream(seed));
  const NoiseConfig noise{0.05, 0.0};
  const RngStream noise_rng(seed + 7);
  const GradientResult g = bptt_gradient(p, noise, b, noise_rng);
  std::size_t checked = 0;
  const double err = max_rel_error(flatten(g.grads), oracle::fd_gradient(p, noise, b, noise_rng), 1e-8, &checked);
  EXPECT_LT(err, 1e-5);
  EXPECT_GT(checked, 50u);
}

INSTANTIATE_TEST_SUITE_P(Seeds, BpttFiniteDifference, ::testing::Values(1, 2, 3, 4, 5));

TEST(Bptt, ResultDoesNotDependOnThreadCount) {
  const NetworkParams p = randomized(init_params(16, 1, 1, 4, TaskKind::Function), 4);
  const TrialBatch b = random_batch(30, 1, 1, 9, RngStream(6));
  const GradientResult a = bptt_gradient(p, {0.1, 0.0}, b, RngStream(7), nullptr, 1);
  const GradientResult c = bptt_gradient(p, {0.1, 0.0}, b, RngStream(7), nullptr, 4);
  EXPECT_EQ(a.loss, c.loss);
  EXPECT_EQ(flatten(a.grads), flatten(c.grads));
}

TEST(Bptt, PenaltyAddsSpectralGradient) {
  const NetworkParams p = randomized(init_params(6, 1, 1, 9, TaskKind::Function), 9);
  const TrialBatch b = random_batch(10, 1, 1, 2, RngStream(1));
  SpectralPenalty pen{0.01, 200, {}};
  const GradientResult with = bptt_gradient(p, {}, b, RngStream(2), &pen);
  const GradientResult without = bptt_gradient(p, {}, b, RngStream(2));
  const SingularEstimate est = power_iteration(p.w_rec, 200);
  EXPECT_NEAR(with.reg_term, 0.01 * est.sigma_sq, 1e-12);
  EXPECT_LT((with.grads.w_rec - without.grads.w_rec - 0.01 * est.gradient()).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_EQ(with.grads.w_out, without.grads.w_out);
  EXPECT_EQ(pen.warm.size(), 6);
}

TEST(Train, RegulatorFarFromTheKinkKeepsTheSetpointBias) {
  RegulatorConfig c;
  c.r = 5.0;
  c.w = -1.0;
  c.b = c.setpoint_bias();
  c.sigma_in = 0.0;
  c.sigma_out = 1.0;
  TrainConfig tc = TrainConfig::regulator_defaults();
  tc.noise = c.noise();
  const TrainResult res = train(RegulatorTask{c}, regulator_network(c), tc);
  ASSERT_FALSE(res.aborted);
  EXPECT_EQ(res.history.size(), 10000u);
  EXPECT_NEAR(res.params.b_in(0), 10.0, 1.0);
}

TEST(Train, NoiselessToyLossDecreases) {
  // tanh target on an easy range, no noise: the smoothed loss keeps falling.
  FunctionTask task;
  task.config.target = FunctionTarget::Tanh;
  task.config.steps = 30;
  TrainConfig tc;
  tc.batches = 600;
  tc.lr0 = 0.003;
  tc.noise = {};
  const TrainResult res = train(task, init_params(16, 1, 1, 2, TaskKind::Function), tc);
  ASSERT_FALSE(res.aborted);
  const auto smooth = [&](std::size_t end) {
    double s = 0.0;
    for (std::size_t i = end - 50; i < end; ++i) s += res.history[i].loss;
    return s / 50.0;
  };
  for (std::size_t end = 150; end <= res.history.size(); end += 50) EXPECT_LT(smooth(end), smooth(end - 50)) << end;
}

TEST(Train, PenalizedMazeTrainingKeepsTheSpectralNormBounded) {
  MazeTask task;
  TrainConfig tc = TrainConfig::maze_defaults();
  tc.batches = 30;
  tc.batch_size = 6;
  const NetworkParams init = init_params(32, 6, 2, 3, TaskKind::Maze, task.spec.size());
  const double before = spectral_norm_sq(init.w_rec, 200);
  const TrainResult res = train(task, init, tc);
  ASSERT_FALSE(res.aborted) << res.abort_reason;
  EXPECT_LE(spectral_norm_sq(res.params.w_rec, 200), before + 10.0);
  for (const HistoryRow& r : res.history) EXPECT_GT(r.reg, 0.0);
}

TEST(Train, PersistentDivergenceAbortsWithPartialHistory) {
  FunctionTask task;
  task.config.steps = 20;
  NetworkParams p = init_params(4, 1, 1, 1, TaskKind::Function, 1, {ActivationKind::ReLU});
  p.w_rec = Matrix::Identity(4, 4) * 1e300;
  p.b_in.setConstant(1.0);
  p.tau = p.dt;
  TrainConfig tc;
  tc.batches = 100;
  const TrainResult res = train(task, p, tc);
  EXPECT_TRUE(res.aborted);
  EXPECT_EQ(res.history.size(), 11u);
  EXPECT_NE(res.abort_reason.find("diverged"), std::string::npos);
}

TEST(Train, SameSeedSameHistoryAcrossThreadCounts) {
  FunctionTask task;
  task.config.steps = 25;
  TrainConfig tc;
  tc.batches = 20;
  tc.noise = {0.1, 0.0};
  const NetworkParams init = init_params(8, 1, 1, 1, TaskKind::Function);
  const TrainResult a = train(task, init, tc, 1);
  const TrainResult b = train(task, init, tc, 3);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) EXPECT_EQ(a.history[i].loss, b.history[i].loss);
  EXPECT_EQ(a.params.w_rec, b.params.w_rec);
}
