#pragma once

#include "echodet/nn/module.hpp"

namespace echodet {

// SGD with momentum and decoupled-from-nothing weight decay folded into the
// gradient: v = mu*v + (g + wd*theta); theta -= lr*v
template <class T>
class SgdOptimizer {
 public:
  SgdOptimizer() = default;
  SgdOptimizer(NamedParams<T> params, double momentum, double weight_decay)
      : params_(std::move(params)), momentum_(momentum), wd_(weight_decay) {
    for (auto& [name, p] : params_.items)
      velocity_.push_back(Tensor<T>(p->value().shape()));
  }

  void zero_grad() {
    for (auto& [name, p] : params_.items) p->zero_grad();
  }

  void step(double lr) {
    for (size_t i = 0; i < params_.items.size(); ++i) {
      Var<T>& p = *params_.items[i].second;
      if (!p.has_grad()) continue;  // parameter unused this step
      Tensor<T>& v = velocity_[i];
      Tensor<T>& g = p.grad();
      Tensor<T>& th = p.value();
      const T mu = static_cast<T>(momentum_), wd = static_cast<T>(wd_), eta = static_cast<T>(lr);
      for (int64_t j = 0; j < th.numel(); ++j) {
        v[j] = mu * v[j] + g[j] + wd * th[j];
        th[j] -= eta * v[j];
      }
    }
  }

  const NamedParams<T>& params() const { return params_; }
  std::vector<Tensor<T>>& velocity() { return velocity_; }

 private:
  NamedParams<T> params_;
  std::vector<Tensor<T>> velocity_;
  double momentum_ = 0.9, wd_ = 1e-4;
};

}  // namespace echodet
