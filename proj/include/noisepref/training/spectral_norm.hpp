// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "noisepref/core/network.hpp"

namespace noisepref {

/// Top singular triple estimate: sigma_sq = ||W v||^2, u = W v / ||W v||.
struct SingularEstimate {
  double sigma_sq = 0.0;
  Vector u;
  Vector v;

  /// d(sigma^2)/dW = 2 sigma u v^T.
  Matrix gradient() const { return 2.0 * std::sqrt(sigma_sq) * u * v.transpose(); }
};

inline Vector default_power_start(Eigen::Index n) {
  Vector v(n);
  const RngStream rng(0x5EC7'0A11ull);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.normal(static_cast<std::uint64_t>(i));
  return v.normalized();
}

/// Power iteration on W^T W. `start` is the warm-start right vector; if it
/// is empty or has the wrong length a fixed pseudo-random vector is used.
inline SingularEstimate power_iteration(const Matrix& w, int iters, const Vector& start = {}) {
  if (w.rows() != w.cols()) throw ConfigError("spectral norm penalty expects a square matrix");
  if (iters < 1) throw ConfigError("power iteration needs at least one step");
  const Eigen::Index n = w.cols();
  SingularEstimate est;
  est.v = (start.size() == n && start.norm() > 0.0) ? Vector(start.normalized()) : default_power_start(n);
  est.u = Vector::Zero(w.rows());
  for (int k = 0; k < iters; ++k) {
    const Vector next = w.transpose() * (w * est.v);
    const double norm = next.norm();
    if (norm == 0.0) return est;
    est.v = next / norm;
  }
  const Vector wv = w * est.v;
  est.sigma_sq = wv.squaredNorm();
  if (est.sigma_sq > 0.0) est.u = wv / std::sqrt(est.sigma_sq);
  return est;
}

/// Squared largest singular value of W.
inline double spectral_norm_sq(const Matrix& w, int iters = 30) { return power_iteration(w, iters).sigma_sq; }

}  // namespace noisepref
