#pragma once

#include <cmath>
#include <vector>

#include "medmerge/layers.hpp"

namespace mm {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;

  void validate() const {
    require(lr > 0, "adamw: lr must be positive");
    require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "adamw: betas must be in [0,1)");
    require(epsilon > 0, "adamw: epsilon must be positive");
    require(weight_decay >= 0, "adamw: weight_decay must be non-negative");
  }
};

/// AdamW with decoupled weight decay: decay acts on the parameter value
/// directly, never folded into the gradient moments. Frozen parameters are
/// skipped entirely.
template <class S>
class AdamW {
 public:
  AdamW(std::vector<Parameter<S>*> params, AdamWConfig cfg)
      : params_(std::move(params)), cfg_(cfg) {
    cfg_.validate();
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      m_[i] = Tensor<S>(params_[i]->value.shape);
      v_[i] = Tensor<S>(params_[i]->value.shape);
    }
  }

  int64_t step_count() const { return t_; }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      Parameter<S>& p = *params_[i];
      if (!p.trainable) continue;
      require(p.has_grad, "adamw: step on parameter with stale grad: " + p.name);
      for (int64_t j = 0; j < p.value.numel(); ++j) {
        double g = static_cast<double>(p.grad[j]);
        double m = cfg_.beta1 * static_cast<double>(m_[i][j]) + (1.0 - cfg_.beta1) * g;
        double v = cfg_.beta2 * static_cast<double>(v_[i][j]) + (1.0 - cfg_.beta2) * g * g;
        m_[i][j] = static_cast<S>(m);
        v_[i][j] = static_cast<S>(v);
        double update = (m / bc1) / (std::sqrt(v / bc2) + cfg_.epsilon);
        double decay = cfg_.weight_decay * static_cast<double>(p.value[j]);
        p.value[j] = static_cast<S>(static_cast<double>(p.value[j]) - cfg_.lr * (update + decay));
      }
    }
    for (auto* p : params_)
      if (p->trainable) p->has_grad = false;
  }

 private:
  std::vector<Parameter<S>*> params_;
  AdamWConfig cfg_;
  std::vector<Tensor<S>> m_, v_;
  int64_t t_ = 0;
};

}  // namespace mm
