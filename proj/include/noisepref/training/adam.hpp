// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>

#include "noisepref/core/network.hpp"

namespace noisepref {

struct GradientSet : TensorSet {
  static GradientSet zeros_like(const TensorSet& shape) {
    GradientSet g;
    g.w_rec = Matrix::Zero(shape.w_rec.rows(), shape.w_rec.cols());
    g.w_in = Matrix::Zero(shape.w_in.rows(), shape.w_in.cols());
    g.b_in = Vector::Zero(shape.b_in.size());
    g.w_out = Matrix::Zero(shape.w_out.rows(), shape.w_out.cols());
    g.b_out = Vector::Zero(shape.b_out.size());
    g.h0 = Matrix::Zero(shape.h0.rows(), shape.h0.cols());
    return g;
  }

  GradientSet& operator+=(const GradientSet& o) {
    w_rec += o.w_rec;
    w_in += o.w_in;
    b_in += o.b_in;
    w_out += o.w_out;
    b_out += o.b_out;
    h0 += o.h0;
    return *this;
  }
};

/// Applies f(name, a.x, b.x, c.x, d.x) across four shape-matched tensor sets.
template <class A, class B, class C, class D, class F>
void zip_tensors(A& a, B& b, C& c, D& d, F&& f) {
  f("W_rec", a.w_rec, b.w_rec, c.w_rec, d.w_rec);
  f("W_in", a.w_in, b.w_in, c.w_in, d.w_in);
  f("B_in", a.b_in, b.b_in, c.b_in, d.b_in);
  f("W_out", a.w_out, b.w_out, c.w_out, d.w_out);
  f("B_out", a.b_out, b.b_out, c.b_out, d.b_out);
  f("h0", a.h0, b.h0, c.h0, d.h0);
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

struct OptimizerState {
  GradientSet m;
  GradientSet v;
  std::int64_t t = 0;

  static OptimizerState zeros_like(const TensorSet& shape) {
    return {GradientSet::zeros_like(shape), GradientSet::zeros_like(shape), 0};
  }
};

/// Bias-corrected ADAM update of one tensor, for step number t >= 1.
template <class Theta, class Moment, class Grad>
void adam_update(Theta& theta, Moment& m, Moment& v, const Grad& g, std::int64_t t, double lr, const AdamConfig& cfg) {
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  auto ma = m.array();
  auto va = v.array();
  const auto ga = g.array();
  ma = cfg.beta1 * ma + (1.0 - cfg.beta1) * ga;
  va = cfg.beta2 * va + (1.0 - cfg.beta2) * ga.square();
  theta.array() -= lr * (ma / c1) / ((va / c2).sqrt() + cfg.epsilon);
}

/// One ADAM step over every trainable tensor. Gradients of frozen tensors are ignored.
inline void adam_step(TensorSet& params, OptimizerState& state, const TensorSet& grads, double lr,
                      const AdamConfig& cfg, const TrainableMask& trainable = {}) {
  bool shapes_ok = true;
  const auto check = [&](std::string_view name, const auto& p, const auto& g, const auto& m, const auto& v) {
    if (p.rows() != g.rows() || p.cols() != g.cols() || p.rows() != m.rows() || p.cols() != m.cols() ||
        p.rows() != v.rows() || p.cols() != v.cols())
      shapes_ok = false;
    if (trainable.contains(name) && !g.allFinite()) throw TrainingError("non-finite gradient", std::string(name));
  };
  zip_tensors(params, grads, state.m, state.v, check);
  if (!shapes_ok) throw ConfigError("gradient and optimizer shapes do not match the parameters");
  ++state.t;
  zip_tensors(params, grads, state.m, state.v,
              [&](std::string_view name, auto& p, const auto& g, auto& m, auto& v) {
                if (trainable.contains(name)) adam_update(p, m, v, g, state.t, lr, cfg);
              });
}

/// lr0 * 2^(-k / half_life).
inline double lr_schedule(std::int64_t batch_index, double lr0, double half_life) {
  return lr0 * std::exp2(-static_cast<double>(batch_index) / half_life);
}

}  // namespace noisepref
