// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "noisepref/core/activation.hpp"
#include "noisepref/core/errors.hpp"
#include "noisepref/core/network.hpp"
#include "noisepref/core/parallel.hpp"
#include "noisepref/core/rng.hpp"
#include "noisepref/core/rollout.hpp"
#include "noisepref/training/adam.hpp"
#include "noisepref/training/bptt.hpp"
#include "noisepref/training/init.hpp"
#include "noisepref/training/loss.hpp"
#include "noisepref/training/spectral_norm.hpp"
#include "noisepref/training/trainer.hpp"
#include "noisepref/tasks/function_task.hpp"
#include "noisepref/tasks/maze.hpp"
#include "noisepref/tasks/regulator.hpp"
#include "noisepref/analysis/fixed_point.hpp"
#include "noisepref/analysis/ou.hpp"
#include "noisepref/analysis/regulator_landscape.hpp"
#include "noisepref/analysis/relu_gaussian.hpp"
#include "noisepref/analysis/stats.hpp"
#include "noisepref/analysis/sweep.hpp"
#include "noisepref/experiments/checkpoint.hpp"
#include "noisepref/experiments/config.hpp"
#include "noisepref/experiments/csv.hpp"
#include "noisepref/experiments/runner.hpp"
#include "noisepref/experiments/text.hpp"
