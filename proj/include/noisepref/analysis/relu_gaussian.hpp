// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <numbers>

#include "noisepref/core/errors.hpp"

namespace noisepref {

/// E[ReLU(mu + sigma Z)] for Z ~ N(0, 1): mu Phi(mu/sigma) + sigma phi(mu/sigma).
inline double relu_gaussian_mean(double mu, double sigma) {
  if (!(sigma >= 0.0)) throw ConfigError("relu_gaussian_mean needs sigma >= 0");
  if (sigma == 0.0) return mu > 0.0 ? mu : 0.0;
  const double z = mu / sigma;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return mu * cdf + sigma * pdf;
}

}  // namespace noisepref
