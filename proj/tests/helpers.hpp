#pragma once

#include <functional>

#include "echodet/core/autograd.hpp"
#include "echodet/core/rng.hpp"

namespace echodet::testing {

template <class T>
Tensor<T> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t = Tensor<T>::empty(std::move(s));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// central finite differences of a scalar-valued functional wrt one leaf
template <class T>
Tensor<T> finite_diff_grad(Var<T>& leaf, const std::function<T()>& eval, T eps) {
  Tensor<T>& v = leaf.value();
  Tensor<T> g = Tensor<T>::empty(v.shape());
  for (int64_t i = 0; i < v.numel(); ++i) {
    T keep = v[i];
    v[i] = keep + eps;
    T fp = eval();
    v[i] = keep - eps;
    T fm = eval();
    v[i] = keep;
    g[i] = (fp - fm) / (2 * eps);
  }
  return g;
}

// max_i |a_i - b_i| normalized by the peak gradient magnitude, the usual
// grad-check error measure (stable where individual entries are near zero)
template <class T>
double max_rel_err(const Tensor<T>& a, const Tensor<T>& b, double /*unused*/ = 0) {
  double peak = 1e-30, diff = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    peak = std::max({peak, std::abs(static_cast<double>(a[i])), std::abs(static_cast<double>(b[i]))});
    diff = std::max(diff, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return diff / peak;
}

}  // namespace echodet::testing
