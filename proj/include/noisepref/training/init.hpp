// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>

#include "noisepref/core/network.hpp"

namespace noisepref {

enum class TaskKind { Function, Maze, Regulator };

/// Weights i.i.d. N(0, (0.8 / sqrt(n))^2), biases zero, `initial_states`
/// trainable zero initial states (one for function nets, one per vertex for the maze).
inline NetworkParams init_params(Eigen::Index n, Eigen::Index m, Eigen::Index p, std::uint64_t seed,
                                 TaskKind kind, Eigen::Index initial_states = 1,
                                 ActivationSpec activation = {}) {
  if (n < 1 || m < 0 || p < 1) throw ConfigError("init_params needs n >= 1, m >= 0, p >= 1");
  if (kind == TaskKind::Regulator)
    throw ConfigError("regulator networks are built by regulator_network(), not init_params()");
  if (kind == TaskKind::Function) initial_states = 1;
  const double sd = 0.8 / std::sqrt(static_cast<double>(n));
  const RngStream root = RngStream(seed).substream(Channel::Init);

  const auto gaussian = [&](std::uint64_t tensor, Eigen::Index rows, Eigen::Index cols) {
    const RngStream rng = root.substream(tensor);
    Matrix w(rows, cols);
    // Row-major fill so the draw for entry (i, j) is independent of Eigen's storage order.
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = sd * rng.normal(static_cast<std::uint64_t>(i * cols + j));
    return w;
  };

  NetworkParams params;
  params.w_rec = gaussian(1, n, n);
  params.w_in = gaussian(2, n, m);
  params.w_out = gaussian(3, p, n);
  params.b_in = Vector::Zero(n);
  params.b_out = Vector::Zero(p);
  params.h0 = Matrix::Zero(n, initial_states);
  params.activation = activation;
  return params;
}

}  // namespace noisepref
