#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mitodet/autodiff.hpp"
#include "mitodet/tensor.hpp"

namespace mitodet {

struct AdamConfig {
  real learning_rate = real(1e-5);
  real beta1 = real(0.9);
  real beta2 = real(0.999);
  real epsilon = real(1e-8);
};

inline void validate(const AdamConfig& cfg) {
  if (!(cfg.learning_rate > 0)) throw std::invalid_argument("AdamConfig: learning_rate must be > 0");
  if (!(cfg.beta1 > 0 && cfg.beta1 < 1)) throw std::invalid_argument("AdamConfig: beta1 must be in (0,1)");
  if (!(cfg.beta2 > 0 && cfg.beta2 < 1)) throw std::invalid_argument("AdamConfig: beta2 must be in (0,1)");
  if (!(cfg.epsilon > 0)) throw std::invalid_argument("AdamConfig: epsilon must be > 0");
}

// A named trainable weight plus its Adam state. The Var leaf is shared with
// whatever graphs reference it, so updates here are visible everywhere.
struct Parameter {
  std::string name;
  Var var;
  Tensor moment1;
  Tensor moment2;
  long long step_count = 0;

  Parameter(std::string param_name, Tensor init)
      : name(std::move(param_name)),
        var(Var::parameter(std::move(init))),
        moment1(var.shape()),
        moment2(var.shape()) {}

  Tensor& weights() { return var.value(); }
  const Tensor& weights() const { return var.value(); }
  Tensor& gradient() { return var.grad(); }
  void clear_gradient() { var.node()->clear_grad(); }
};

// Standard Adam update with bias correction; gradients are cleared after use.
inline void adam_step(std::vector<Parameter>& params, const AdamConfig& cfg) {
  validate(cfg);
  for (Parameter& p : params) {
    p.step_count += 1;
    const real bc1 = real(1) - std::pow(cfg.beta1, static_cast<real>(p.step_count));
    const real bc2 = real(1) - std::pow(cfg.beta2, static_cast<real>(p.step_count));
    Tensor& w = p.weights();
    Tensor& g = p.gradient();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const real gi = g.data[i];
      p.moment1.data[i] = cfg.beta1 * p.moment1.data[i] + (real(1) - cfg.beta1) * gi;
      p.moment2.data[i] = cfg.beta2 * p.moment2.data[i] + (real(1) - cfg.beta2) * gi * gi;
      const real mhat = p.moment1.data[i] / bc1;
      const real vhat = p.moment2.data[i] / bc2;
      w.data[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
    p.clear_gradient();
  }
}

inline void clear_gradients(std::vector<Parameter>& params) {
  for (Parameter& p : params) p.clear_gradient();
}

}  // namespace mitodet
