#pragma once

#include <string>
#include <utility>
#include <vector>

#include "echodet/core/autograd.hpp"
#include "echodet/core/rng.hpp"

namespace echodet {

// Flat name -> parameter registry used by the optimizer and checkpointing.
template <class T>
struct NamedParams {
  std::vector<std::pair<std::string, Var<T>*>> items;

  void add(const std::string& name, Var<T>& p) {
    ECHODET_CHECK(p.tracked(), "parameter " << name << " must be a leaf var");
    items.push_back({name, &p});
  }
};

template <class T>
Var<T> param_zeros(Shape s) {
  return Var<T>::leaf(Tensor<T>(std::move(s)));
}

template <class T>
Var<T> param_full(Shape s, T v) {
  return Var<T>::leaf(Tensor<T>::full(std::move(s), v));
}

template <class T>
Var<T> param_trunc_normal(Shape s, Rng& rng, double sigma) {
  Tensor<T> t = Tensor<T>::empty(std::move(s));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.trunc_normal(sigma));
  return Var<T>::leaf(std::move(t));
}

}  // namespace echodet
