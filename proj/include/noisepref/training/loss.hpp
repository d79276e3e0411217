// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

#include "noisepref/core/rollout.hpp"

namespace noisepref {

/// Total number of scored (trial, timestep, dimension) entries; every trial needs a marked step.
inline std::size_t masked_entry_count(std::span<const ReadoutMask> masks, Eigen::Index dims) {
  std::size_t count = 0;
  for (const auto& mask : masks) {
    std::size_t marked = 0;
    for (auto flag : mask) marked += flag ? 1 : 0;
    if (marked == 0) throw ConfigError("readout mask marks no timestep for a trial");
    count += marked * static_cast<std::size_t>(dims);
  }
  if (count == 0) throw ConfigError("readout mask is empty");
  return count;
}

/// Mean of (z - target)^2 over all masked (trial, timestep, dimension) entries.
inline double loss_mse_readout(std::span<const Matrix> outputs, std::span<const Matrix> targets,
                               std::span<const ReadoutMask> masks) {
  if (outputs.size() != targets.size() || outputs.size() != masks.size())
    throw ConfigError("outputs, targets and masks must have the same number of trials");
  if (outputs.empty()) throw ConfigError("readout mask is empty");
  const std::size_t count = masked_entry_count(masks, outputs.front().cols());
  double sum = 0.0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const auto& z = outputs[i];
    const auto& y = targets[i];
    if (z.rows() != y.rows() || z.cols() != y.cols() || static_cast<Eigen::Index>(masks[i].size()) != z.rows())
      throw ConfigError("output, target and mask shapes differ");
    for (Eigen::Index t = 0; t < z.rows(); ++t)
      if (masks[i][static_cast<std::size_t>(t)]) sum += (z.row(t) - y.row(t)).squaredNorm();
  }
  return sum / static_cast<double>(count);
}

}  // namespace noisepref
