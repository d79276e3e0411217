// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "noisepref/core/errors.hpp"

namespace noisepref {

enum class ActivationKind { ReLU, SoftPlus };

/// Rectifying nonlinearity. SoftPlus(x) = ln(1 + e^{alpha x}) / alpha.
struct ActivationSpec {
  ActivationKind kind = ActivationKind::SoftPlus;
  double alpha = 10.0;

  // Above this value of alpha*x SoftPlus switches to x + ln(1 + e^{-alpha x}) / alpha.
  static constexpr double kLargeArgument = 30.0;

  double operator()(double x) const {
    if (kind == ActivationKind::ReLU) return x > 0.0 ? x : 0.0;
    const double ax = alpha * x;
    if (ax > kLargeArgument) return x + std::log1p(std::exp(-ax)) / alpha;
    return std::log1p(std::exp(ax)) / alpha;
  }

  /// df/dx; the ReLU derivative at exactly 0 is taken as 0.
  double derivative(double x) const {
    if (kind == ActivationKind::ReLU) return x > 0.0 ? 1.0 : 0.0;
    const double ax = alpha * x;
    if (ax >= 0.0) return 1.0 / (1.0 + std::exp(-ax));
    const double e = std::exp(ax);
    return e / (1.0 + e);
  }

  void validate() const {
    if (kind == ActivationKind::SoftPlus && !(alpha > 0.0 && std::isfinite(alpha)))
      throw ConfigError("SoftPlus sharpness alpha must be positive and finite");
  }

  friend bool operator==(const ActivationSpec&, const ActivationSpec&) = default;
};

inline Eigen::VectorXd activation_apply(const ActivationSpec& act, const Eigen::VectorXd& x) {
  return x.unaryExpr([&act](double v) { return act(v); });
}

inline std::string_view to_string(ActivationKind kind) {
  return kind == ActivationKind::ReLU ? "relu" : "softplus";
}

inline ActivationKind parse_activation_kind(std::string_view name) {
  if (name == "relu") return ActivationKind::ReLU;
  if (name == "softplus") return ActivationKind::SoftPlus;
  throw ConfigError("unknown activation '" + std::string(name) + "' (expected relu or softplus)");
}

}  // namespace noisepref
