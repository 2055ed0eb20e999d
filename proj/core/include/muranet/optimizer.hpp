#pragma once

#include <vector>

#include "muranet/layers.hpp"

namespace mura {

// SGD with classical momentum and decoupled weight decay. Decay multiplies
// the weight directly by (1 - lr*wd) and is skipped for parameters flagged
// decay=false (norm scales/offsets, biases).
class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<Param*> params, double momentum, double weight_decay)
      : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
    velocity_.reserve(params_.size());
    for (const Param* p : params_)
      velocity_.emplace_back(p->trainable ? Tensor::zeros(p->value.shape()) : Tensor());
  }

  void step(double lr) {
    for (size_t i = 0; i < params_.size(); ++i) {
      Param* p = params_[i];
      if (!p->trainable) continue;
      Tensor& v = velocity_[i];
      double* w = p->value.data();
      const double* g = p->grad.data();
      double* vel = v.data();
      const int64_t n = p->value.numel();
      for (int64_t k = 0; k < n; ++k) {
        if (weight_decay_ > 0.0 && p->decay) w[k] -= lr * weight_decay_ * w[k];
        vel[k] = momentum_ * vel[k] + g[k];
        w[k] -= lr * vel[k];
      }
    }
  }

 private:
  std::vector<Param*> params_;
  std::vector<Tensor> velocity_;
  double momentum_, weight_decay_;
};

}  // namespace mura
