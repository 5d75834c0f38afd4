#pragma once

#include <Eigen/Core>

#include <cmath>

#include "echodet/core/autograd.hpp"

namespace echodet {

template <class T>
using ArrMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
template <class T>
using CArrMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;

namespace detail {

inline Shape pad_rank(const Shape& s, int rank) {
  Shape r(rank, 1);
  std::copy(s.begin(), s.end(), r.begin() + (rank - s.size()));
  return r;
}

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  int rank = std::max(a.size(), b.size());
  Shape pa = pad_rank(a, rank), pb = pad_rank(b, rank), out(rank);
  for (int i = 0; i < rank; ++i) {
    ECHODET_CHECK(pa[i] == pb[i] || pa[i] == 1 || pb[i] == 1,
                  "cannot broadcast " << shape_str(a) << " with " << shape_str(b));
    out[i] = std::max(pa[i], pb[i]);
  }
  return out;
}

inline std::vector<int64_t> broadcast_strides(const Shape& s, const Shape& out) {
  Shape p = pad_rank(s, out.size());
  std::vector<int64_t> st(out.size());
  int64_t acc = 1;
  for (int i = static_cast<int>(out.size()) - 1; i >= 0; --i) {
    st[i] = (p[i] == 1) ? 0 : acc;
    acc *= p[i];
  }
  return st;
}

// applies f(out_index, a_index, b_index) over the broadcast iteration space
template <class F>
void for_broadcast(const Shape& out, const std::vector<int64_t>& sa,
                   const std::vector<int64_t>& sb, F&& f) {
  int rank = static_cast<int>(out.size());
  std::vector<int64_t> idx(rank, 0);
  int64_t n = shape_numel(out);
  int64_t ia = 0, ib = 0;
  for (int64_t o = 0; o < n; ++o) {
    f(o, ia, ib);
    for (int d = rank - 1; d >= 0; --d) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      idx[d] = 0;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
    }
  }
}

// sums g down to `shape` (inverse of broadcasting)
template <class T>
Tensor<T> reduce_to_shape(const Tensor<T>& g, const Shape& shape) {
  if (g.shape() == shape) return g;
  Tensor<T> out(shape);
  auto so = broadcast_strides(shape, g.shape());
  std::vector<int64_t> zero(g.shape().size(), 0);
  for_broadcast(g.shape(), so, zero,
                [&](int64_t gi, int64_t oi, int64_t) { out[oi] += g[gi]; });
  return out;
}

template <class T>
void accumulate_reduced(const std::shared_ptr<GradNode<T>>& node, const Tensor<T>& g,
                        const Shape& shape) {
  if (!node) return;
  accumulate(node, reduce_to_shape(g, shape));
}

}  // namespace detail

// ---- binary broadcast ops ----

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  const Tensor<T>&av = a.value(), &bv = b.value();
  if (same_shape(av, bv)) {
    Tensor<T> out = Tensor<T>::empty(av.shape());
    for (int64_t i = 0; i < av.numel(); ++i) out[i] = av[i] + bv[i];
    auto an = a.node(), bn = b.node();
    return make_op<T>(std::move(out), {an, bn}, [an, bn](const Tensor<T>& g) {
      accumulate(an, g);
      accumulate(bn, g);
    });
  }
  Shape os = detail::broadcast_shape(av.shape(), bv.shape());
  Tensor<T> out = Tensor<T>::empty(os);
  auto sa = detail::broadcast_strides(av.shape(), os);
  auto sb = detail::broadcast_strides(bv.shape(), os);
  detail::for_broadcast(os, sa, sb,
                        [&](int64_t o, int64_t ia, int64_t ib) { out[o] = av[ia] + bv[ib]; });
  auto an = a.node(), bn = b.node();
  Shape ash = av.shape(), bsh = bv.shape();
  return make_op<T>(std::move(out), {an, bn}, [an, bn, ash, bsh](const Tensor<T>& g) {
    detail::accumulate_reduced(an, g, ash);
    detail::accumulate_reduced(bn, g, bsh);
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  const Tensor<T>&av = a.value(), &bv = b.value();
  Shape os = detail::broadcast_shape(av.shape(), bv.shape());
  Tensor<T> out = Tensor<T>::empty(os);
  auto sa = detail::broadcast_strides(av.shape(), os);
  auto sb = detail::broadcast_strides(bv.shape(), os);
  detail::for_broadcast(os, sa, sb,
                        [&](int64_t o, int64_t ia, int64_t ib) { out[o] = av[ia] * bv[ib]; });
  auto an = a.node(), bn = b.node();
  return make_op<T>(std::move(out), {an, bn}, [an, bn, av, bv, os, sa, sb](const Tensor<T>& g) {
    if (an) {
      Tensor<T> ga(os);
      detail::for_broadcast(os, sa, sb,
                            [&](int64_t o, int64_t, int64_t ib) { ga[o] = g[o] * bv[ib]; });
      detail::accumulate_reduced(an, ga, av.shape());
    }
    if (bn) {
      Tensor<T> gb(os);
      detail::for_broadcast(os, sa, sb,
                            [&](int64_t o, int64_t ia, int64_t) { gb[o] = g[o] * av[ia]; });
      detail::accumulate_reduced(bn, gb, bv.shape());
    }
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  const Tensor<T>&av = a.value(), &bv = b.value();
  Shape os = detail::broadcast_shape(av.shape(), bv.shape());
  Tensor<T> out = Tensor<T>::empty(os);
  auto sa = detail::broadcast_strides(av.shape(), os);
  auto sb = detail::broadcast_strides(bv.shape(), os);
  detail::for_broadcast(os, sa, sb,
                        [&](int64_t o, int64_t ia, int64_t ib) { out[o] = av[ia] - bv[ib]; });
  auto an = a.node(), bn = b.node();
  Shape ash = av.shape(), bsh = bv.shape();
  return make_op<T>(std::move(out), {an, bn}, [an, bn, ash, bsh](const Tensor<T>& g) {
    detail::accumulate_reduced(an, g, ash);
    if (bn) {
      Tensor<T> gb = Tensor<T>::empty(g.shape());
      for (int64_t i = 0; i < g.numel(); ++i) gb[i] = -g[i];
      detail::accumulate_reduced(bn, gb, bsh);
    }
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  const Tensor<T>& av = a.value();
  Tensor<T> out = Tensor<T>::empty(av.shape());
  for (int64_t i = 0; i < av.numel(); ++i) out[i] = av[i] * s;
  auto an = a.node();
  return make_op<T>(std::move(out), {an}, [an, s](const Tensor<T>& g) {
    if (!an) return;
    Tensor<T> ga = Tensor<T>::empty(g.shape());
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] = g[i] * s;
    accumulate(an, ga);
  });
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T s) {
  const Tensor<T>& av = a.value();
  Tensor<T> out = Tensor<T>::empty(av.shape());
  for (int64_t i = 0; i < av.numel(); ++i) out[i] = av[i] + s;
  auto an = a.node();
  return make_op<T>(std::move(out), {an}, [an](const Tensor<T>& g) { accumulate(an, g); });
}

// ---- unary activations ----

template <class T>
Var<T> relu(const Var<T>& a) {
  const Tensor<T>& av = a.value();
  Tensor<T> out = Tensor<T>::empty(av.shape());
  for (int64_t i = 0; i < av.numel(); ++i) out[i] = av[i] > T(0) ? av[i] : T(0);
  auto an = a.node();
  return make_op<T>(std::move(out), {an}, [an, av](const Tensor<T>& g) {
    if (!an) return;
    Tensor<T> ga = Tensor<T>::empty(g.shape());
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] = av[i] > T(0) ? g[i] : T(0);
    accumulate(an, ga);
  });
}

template <class T>
inline T sigmoid_scalar(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  T e = std::exp(x);
  return e / (T(1) + e);
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
  const Tensor<T>& av = a.value();
  int64_t n = av.numel();
  Tensor<T> out = Tensor<T>::empty(av.shape());
  // 0.5*(1+tanh(x/2)): saturates cleanly and vectorizes
  ArrMap<T>(out.data(), n) = T(0.5) * (T(1) + (CArrMap<T>(av.data(), n) * T(0.5)).tanh());
  auto an = a.node();
  Tensor<T> s = out;  // shallow
  return make_op<T>(std::move(out), {an}, [an, s](const Tensor<T>& g) {
    if (!an) return;
    int64_t n = g.numel();
    Tensor<T> ga = Tensor<T>::empty(g.shape());
    CArrMap<T> sv(s.data(), n);
    ArrMap<T>(ga.data(), n) = CArrMap<T>(g.data(), n) * sv * (T(1) - sv);
    accumulate(an, ga);
  });
}

// tanh-form gelu
template <class T>
Var<T> gelu(const Var<T>& a) {
  constexpr T c0 = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T c1 = T(0.044715);
  const Tensor<T>& av = a.value();
  int64_t n = av.numel();
  Tensor<T> out = Tensor<T>::empty(av.shape());
  Tensor<T> th = Tensor<T>::empty(av.shape());
  {
    CArrMap<T> x(av.data(), n);
    ArrMap<T> t(th.data(), n);
    t = (c0 * (x + c1 * x.cube())).tanh();
    ArrMap<T>(out.data(), n) = T(0.5) * x * (T(1) + t);
  }
  auto an = a.node();
  return make_op<T>(std::move(out), {an}, [an, av, th](const Tensor<T>& g) {
    if (!an) return;
    constexpr T k0 = T(0.7978845608028654);
    constexpr T k1 = T(0.044715);
    int64_t n = g.numel();
    Tensor<T> ga = Tensor<T>::empty(g.shape());
    CArrMap<T> x(av.data(), n), t(th.data(), n);
    ArrMap<T>(ga.data(), n) =
        CArrMap<T>(g.data(), n) *
        (T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t.square()) * k0 * (T(1) + T(3) * k1 * x.square()));
    accumulate(an, ga);
  });
}

template <class T>
Var<T> exp_op(const Var<T>& a) {
  const Tensor<T>& av = a.value();
  Tensor<T> out = Tensor<T>::empty(av.shape());
  for (int64_t i = 0; i < av.numel(); ++i) out[i] = std::exp(av[i]);
  auto an = a.node();
  Tensor<T> e = out;
  return make_op<T>(std::move(out), {an}, [an, e](const Tensor<T>& g) {
    if (!an) return;
    Tensor<T> ga = Tensor<T>::empty(g.shape());
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] = g[i] * e[i];
    accumulate(an, ga);
  });
}

// pass-through gradient inside [lo, hi] (boundary included), zero outside
template <class T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
  const Tensor<T>& av = a.value();
  Tensor<T> out = Tensor<T>::empty(av.shape());
  for (int64_t i = 0; i < av.numel(); ++i) out[i] = std::min(std::max(av[i], lo), hi);
  auto an = a.node();
  return make_op<T>(std::move(out), {an}, [an, av, lo, hi](const Tensor<T>& g) {
    if (!an) return;
    Tensor<T> ga = Tensor<T>::empty(g.shape());
    for (int64_t i = 0; i < g.numel(); ++i)
      ga[i] = (av[i] >= lo && av[i] <= hi) ? g[i] : T(0);
    accumulate(an, ga);
  });
}

// ---- reductions / shape ops ----

template <class T>
Var<T> sum_all(const Var<T>& a) {
  const Tensor<T>& av = a.value();
  T acc = 0;
  for (int64_t i = 0; i < av.numel(); ++i) acc += av[i];
  auto an = a.node();
  Shape ash = av.shape();
  return make_op<T>(Tensor<T>::scalar(acc), {an}, [an, ash](const Tensor<T>& g) {
    if (!an) return;
    accumulate(an, Tensor<T>::full(ash, g[0]));
  });
}

template <class T>
Var<T> reshape(const Var<T>& a, Shape s) {
  Tensor<T> out = a.value().reshaped(s);
  auto an = a.node();
  Shape ash = a.value().shape();
  return make_op<T>(std::move(out), {an}, [an, ash](const Tensor<T>& g) {
    if (an) accumulate(an, g.reshaped(ash));
  });
}

template <class T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  ECHODET_CHECK(!parts.empty(), "concat of nothing");
  const Shape& s0 = parts[0].value().shape();
  ECHODET_CHECK(s0.size() == 4, "concat expects rank-4");
  int64_t b = s0[0], h = s0[2], w = s0[3], ctot = 0;
  for (auto& p : parts) {
    const Shape& s = p.value().shape();
    ECHODET_CHECK(s[0] == b && s[2] == h && s[3] == w,
                  "concat operand " << shape_str(s) << " incompatible with " << shape_str(s0));
    ctot += s[1];
  }
  Tensor<T> out = Tensor<T>::empty({b, ctot, h, w});
  int64_t hw = h * w;
  std::vector<int64_t> offsets;
  std::vector<int64_t> widths;
  std::vector<std::shared_ptr<GradNode<T>>> nodes;
  int64_t coff = 0;
  for (auto& p : parts) {
    int64_t c = p.value().size(1);
    for (int64_t bi = 0; bi < b; ++bi)
      std::memcpy(out.data() + (bi * ctot + coff) * hw, p.value().data() + bi * c * hw,
                  sizeof(T) * static_cast<size_t>(c * hw));
    offsets.push_back(coff);
    widths.push_back(c);
    nodes.push_back(p.node());
    coff += c;
  }
  return make_op<T>(std::move(out), nodes,
                    [nodes, offsets, widths, b, hw, ctot](const Tensor<T>& g) {
                      for (size_t k = 0; k < nodes.size(); ++k) {
                        if (!nodes[k]) continue;
                        Tensor<T> gk = Tensor<T>::empty({b, widths[k], g.shape()[2], g.shape()[3]});
                        for (int64_t bi = 0; bi < b; ++bi)
                          std::memcpy(gk.data() + bi * widths[k] * hw,
                                      g.data() + (bi * ctot + offsets[k]) * hw,
                                      sizeof(T) * static_cast<size_t>(widths[k] * hw));
                        accumulate(nodes[k], gk);
                      }
                    });
}

template <class T>
Var<T> global_avg_pool(const Var<T>& a) {
  const Tensor<T>& av = a.value();
  int64_t b = av.size(0), c = av.size(1), hw = av.size(2) * av.size(3);
  Tensor<T> out({b, c, 1, 1});
  for (int64_t i = 0; i < b * c; ++i) {
    T acc = 0;
    const T* p = av.data() + i * hw;
    for (int64_t j = 0; j < hw; ++j) acc += p[j];
    out[i] = acc / static_cast<T>(hw);
  }
  auto an = a.node();
  Shape ash = av.shape();
  return make_op<T>(std::move(out), {an}, [an, ash, hw](const Tensor<T>& g) {
    if (!an) return;
    Tensor<T> ga = Tensor<T>::empty(ash);
    int64_t bc = ash[0] * ash[1];
    for (int64_t i = 0; i < bc; ++i) {
      T v = g[i] / static_cast<T>(hw);
      T* p = ga.data() + i * hw;
      for (int64_t j = 0; j < hw; ++j) p[j] = v;
    }
    accumulate(an, ga);
  });
}

template <class T>
Var<T> global_max_pool(const Var<T>& a) {
  const Tensor<T>& av = a.value();
  int64_t b = av.size(0), c = av.size(1), hw = av.size(2) * av.size(3);
  Tensor<T> out({b, c, 1, 1});
  std::vector<int64_t> arg(static_cast<size_t>(b * c));
  for (int64_t i = 0; i < b * c; ++i) {
    const T* p = av.data() + i * hw;
    int64_t best = 0;
    for (int64_t j = 1; j < hw; ++j)
      if (p[j] > p[best]) best = j;  // first index wins ties
    out[i] = p[best];
    arg[static_cast<size_t>(i)] = best;
  }
  auto an = a.node();
  Shape ash = av.shape();
  return make_op<T>(std::move(out), {an}, [an, ash, hw, arg](const Tensor<T>& g) {
    if (!an) return;
    Tensor<T> ga(ash);
    int64_t bc = ash[0] * ash[1];
    for (int64_t i = 0; i < bc; ++i) ga[i * hw + arg[static_cast<size_t>(i)]] = g[i];
    accumulate(an, ga);
  });
}

// nearest-neighbour resize to an exact output size
template <class T>
Var<T> upsample_nearest(const Var<T>& a, int64_t oh, int64_t ow) {
  const Tensor<T>& av = a.value();
  int64_t b = av.size(0), c = av.size(1), ih = av.size(2), iw = av.size(3);
  Tensor<T> out = Tensor<T>::empty({b, c, oh, ow});
  std::vector<int64_t> ym(static_cast<size_t>(oh)), xm(static_cast<size_t>(ow));
  for (int64_t y = 0; y < oh; ++y) ym[static_cast<size_t>(y)] = y * ih / oh;
  for (int64_t x = 0; x < ow; ++x) xm[static_cast<size_t>(x)] = x * iw / ow;
  for (int64_t bc = 0; bc < b * c; ++bc) {
    const T* src = av.data() + bc * ih * iw;
    T* dst = out.data() + bc * oh * ow;
    for (int64_t y = 0; y < oh; ++y) {
      const T* row = src + ym[static_cast<size_t>(y)] * iw;
      for (int64_t x = 0; x < ow; ++x) dst[y * ow + x] = row[xm[static_cast<size_t>(x)]];
    }
  }
  auto an = a.node();
  Shape ash = av.shape();
  return make_op<T>(std::move(out), {an}, [an, ash, ym, xm, oh, ow](const Tensor<T>& g) {
    if (!an) return;
    Tensor<T> ga(ash);
    int64_t ih = ash[2], iw = ash[3];
    for (int64_t bc = 0; bc < ash[0] * ash[1]; ++bc) {
      T* dst = ga.data() + bc * ih * iw;
      const T* src = g.data() + bc * oh * ow;
      for (int64_t y = 0; y < oh; ++y)
        for (int64_t x = 0; x < ow; ++x)
          dst[ym[static_cast<size_t>(y)] * iw + xm[static_cast<size_t>(x)]] += src[y * ow + x];
    }
    accumulate(an, ga);
  });
}

// parameter-free stride-2 subsampling; output is ceil(h/2) x ceil(w/2)
template <class T>
Var<T> downsample_stride2(const Var<T>& a) {
  const Tensor<T>& av = a.value();
  int64_t b = av.size(0), c = av.size(1), ih = av.size(2), iw = av.size(3);
  int64_t oh = (ih + 1) / 2, ow = (iw + 1) / 2;
  Tensor<T> out = Tensor<T>::empty({b, c, oh, ow});
  for (int64_t bc = 0; bc < b * c; ++bc) {
    const T* src = av.data() + bc * ih * iw;
    T* dst = out.data() + bc * oh * ow;
    for (int64_t y = 0; y < oh; ++y)
      for (int64_t x = 0; x < ow; ++x) dst[y * ow + x] = src[2 * y * iw + 2 * x];
  }
  auto an = a.node();
  Shape ash = av.shape();
  return make_op<T>(std::move(out), {an}, [an, ash, oh, ow](const Tensor<T>& g) {
    if (!an) return;
    Tensor<T> ga(ash);
    int64_t ih = ash[2], iw = ash[3];
    for (int64_t bc = 0; bc < ash[0] * ash[1]; ++bc) {
      T* dst = ga.data() + bc * ih * iw;
      const T* src = g.data() + bc * oh * ow;
      for (int64_t y = 0; y < oh; ++y)
        for (int64_t x = 0; x < ow; ++x) dst[2 * y * iw + 2 * x] = src[y * ow + x];
    }
    accumulate(an, ga);
  });
}

}  // namespace echodet
