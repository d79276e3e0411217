// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <span>

#include "noisepref/core/errors.hpp"

namespace noisepref {

inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw ConfigError("pearson needs two equal-length series of length >= 2");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

/// Batch-means estimate of the mean of a correlated series and its standard error.
struct BatchMeans {
  double mean = 0.0;
  double std_error = 0.0;
};

inline BatchMeans batch_means(std::span<const double> batch_averages) {
  const std::size_t k = batch_averages.size();
  if (k < 2) throw ConfigError("batch means need at least two batches");
  double mean = 0.0;
  for (double v : batch_averages) mean += v;
  mean /= static_cast<double>(k);
  double ss = 0.0;
  for (double v : batch_averages) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(k - 1) / static_cast<double>(k))};
}

}  // namespace noisepref
