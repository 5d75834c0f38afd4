#pragma once

#include "echodet/core/ops.hpp"

namespace echodet {

// LayerNorm over the channel axis of an NCHW tensor (the ConvNeXt layout):
// per (b, y, x) position, normalize across C, then per-channel affine.
template <class T>
Var<T> layer_norm_channels(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                           T eps = T(1e-6)) {
  const Tensor<T>& xv = x.value();
  ECHODET_CHECK(xv.rank() == 4, "layer_norm_channels expects rank-4");
  int64_t b = xv.size(0), c = xv.size(1), h = xv.size(2), w = xv.size(3);
  ECHODET_CHECK(gamma.value().numel() == c && beta.value().numel() == c,
                "affine size mismatch");
  int64_t hw = h * w;
  Tensor<T> out = Tensor<T>::empty(xv.shape());
  Tensor<T> mean({b, hw}), inv({b, hw});
  const Tensor<T>&gv = gamma.value(), &bv = beta.value();
  for (int64_t bi = 0; bi < b; ++bi) {
    const T* xb = xv.data() + bi * c * hw;
    T* mb = mean.data() + bi * hw;
    T* ib = inv.data() + bi * hw;
    for (int64_t ci = 0; ci < c; ++ci) {
      const T* xc = xb + ci * hw;
      for (int64_t p = 0; p < hw; ++p) mb[p] += xc[p];
    }
    for (int64_t p = 0; p < hw; ++p) mb[p] /= static_cast<T>(c);
    for (int64_t ci = 0; ci < c; ++ci) {
      const T* xc = xb + ci * hw;
      for (int64_t p = 0; p < hw; ++p) {
        T d = xc[p] - mb[p];
        ib[p] += d * d;
      }
    }
    for (int64_t p = 0; p < hw; ++p) ib[p] = T(1) / std::sqrt(ib[p] / static_cast<T>(c) + eps);
    T* ob = out.data() + bi * c * hw;
    for (int64_t ci = 0; ci < c; ++ci) {
      const T* xc = xb + ci * hw;
      T* oc = ob + ci * hw;
      T ga = gv[ci], be = bv[ci];
      for (int64_t p = 0; p < hw; ++p) oc[p] = ga * (xc[p] - mb[p]) * ib[p] + be;
    }
  }

  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return make_op<T>(
      std::move(out), {xn, gn, bn}, [=](const Tensor<T>& g) {
        Tensor<T> gx = xn ? Tensor<T>::empty(xv.shape()) : Tensor<T>();
        Tensor<T> gg = gn ? Tensor<T>({c}) : Tensor<T>();
        Tensor<T> gb = bn ? Tensor<T>({c}) : Tensor<T>();
        std::vector<T> sum_gy(static_cast<size_t>(hw)), sum_gyx(static_cast<size_t>(hw));
        for (int64_t bi = 0; bi < b; ++bi) {
          const T* xb = xv.data() + bi * c * hw;
          const T* gB = g.data() + bi * c * hw;
          const T* mb = mean.data() + bi * hw;
          const T* ib = inv.data() + bi * hw;
          std::fill(sum_gy.begin(), sum_gy.end(), T(0));
          std::fill(sum_gyx.begin(), sum_gyx.end(), T(0));
          for (int64_t ci = 0; ci < c; ++ci) {
            const T* xc = xb + ci * hw;
            const T* gc = gB + ci * hw;
            T ga = gv[ci];
            T acc_g = 0, acc_gx = 0;
            for (int64_t p = 0; p < hw; ++p) {
              T xhat = (xc[p] - mb[p]) * ib[p];
              T gy = gc[p] * ga;
              sum_gy[static_cast<size_t>(p)] += gy;
              sum_gyx[static_cast<size_t>(p)] += gy * xhat;
              acc_g += gc[p];
              acc_gx += gc[p] * xhat;
            }
            if (gn.get()) gg[ci] += acc_gx;
            if (bn.get()) gb[ci] += acc_g;
          }
          if (xn) {
            T* gxb = gx.data() + bi * c * hw;
            for (int64_t ci = 0; ci < c; ++ci) {
              const T* xc = xb + ci * hw;
              const T* gc = gB + ci * hw;
              T* gxc = gxb + ci * hw;
              T ga = gv[ci];
              for (int64_t p = 0; p < hw; ++p) {
                T xhat = (xc[p] - mb[p]) * ib[p];
                T gy = gc[p] * ga;
                gxc[p] = ib[p] * (gy - sum_gy[static_cast<size_t>(p)] / static_cast<T>(c) -
                                  xhat * sum_gyx[static_cast<size_t>(p)] / static_cast<T>(c));
              }
            }
          }
        }
        if (xn) accumulate(xn, gx);
        if (gn) accumulate(gn, gg);
        if (bn) accumulate(bn, gb);
      });
}

// GroupNorm: stats over (C/groups, H, W) per (batch, group), per-channel affine.
template <class T>
Var<T> group_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, int groups,
                  T eps = T(1e-5)) {
  const Tensor<T>& xv = x.value();
  ECHODET_CHECK(xv.rank() == 4, "group_norm expects rank-4");
  int64_t b = xv.size(0), c = xv.size(1), hw = xv.size(2) * xv.size(3);
  ECHODET_CHECK(c % groups == 0, "channels " << c << " not divisible by groups " << groups);
  int64_t gc = c / groups;
  int64_t n = gc * hw;  // normalization set size
  Tensor<T> out = Tensor<T>::empty(xv.shape());
  Tensor<T> mean({b, static_cast<int64_t>(groups)}), inv({b, static_cast<int64_t>(groups)});
  const Tensor<T>&gv = gamma.value(), &bv = beta.value();
  for (int64_t bi = 0; bi < b; ++bi) {
    for (int gi = 0; gi < groups; ++gi) {
      const T* base = xv.data() + (bi * c + gi * gc) * hw;
      T m = 0;
      for (int64_t i = 0; i < n; ++i) m += base[i];
      m /= static_cast<T>(n);
      T v = 0;
      for (int64_t i = 0; i < n; ++i) {
        T d = base[i] - m;
        v += d * d;
      }
      T is = T(1) / std::sqrt(v / static_cast<T>(n) + eps);
      mean[bi * groups + gi] = m;
      inv[bi * groups + gi] = is;
      T* ob = out.data() + (bi * c + gi * gc) * hw;
      for (int64_t ci = 0; ci < gc; ++ci) {
        T ga = gv[gi * gc + ci], be = bv[gi * gc + ci];
        for (int64_t p = 0; p < hw; ++p) ob[ci * hw + p] = ga * (base[ci * hw + p] - m) * is + be;
      }
    }
  }

  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return make_op<T>(
      std::move(out), {xn, gn, bn}, [=](const Tensor<T>& g) {
        Tensor<T> gx = xn ? Tensor<T>::empty(xv.shape()) : Tensor<T>();
        Tensor<T> gg = gn ? Tensor<T>({c}) : Tensor<T>();
        Tensor<T> gb = bn ? Tensor<T>({c}) : Tensor<T>();
        for (int64_t bi = 0; bi < b; ++bi) {
          for (int gi = 0; gi < groups; ++gi) {
            const T* base = xv.data() + (bi * c + gi * gc) * hw;
            const T* gbase = g.data() + (bi * c + gi * gc) * hw;
            T m = mean[bi * groups + gi], is = inv[bi * groups + gi];
            T sum_gy = 0, sum_gyx = 0;
            for (int64_t ci = 0; ci < gc; ++ci) {
              T ga = gv[gi * gc + ci];
              T acc_g = 0, acc_gx = 0;
              for (int64_t p = 0; p < hw; ++p) {
                T xhat = (base[ci * hw + p] - m) * is;
                T gout = gbase[ci * hw + p];
                sum_gy += gout * ga;
                sum_gyx += gout * ga * xhat;
                acc_g += gout;
                acc_gx += gout * xhat;
              }
              if (gn.get()) gg[gi * gc + ci] += acc_gx;
              if (bn.get()) gb[gi * gc + ci] += acc_g;
            }
            if (xn) {
              T* gxb = gx.data() + (bi * c + gi * gc) * hw;
              T mg = sum_gy / static_cast<T>(n), mgx = sum_gyx / static_cast<T>(n);
              for (int64_t ci = 0; ci < gc; ++ci) {
                T ga = gv[gi * gc + ci];
                for (int64_t p = 0; p < hw; ++p) {
                  T xhat = (base[ci * hw + p] - m) * is;
                  gxb[ci * hw + p] = is * (gbase[ci * hw + p] * ga - mg - xhat * mgx);
                }
              }
            }
          }
        }
        if (xn) accumulate(xn, gx);
        if (gn) accumulate(gn, gg);
        if (bn) accumulate(bn, gb);
      });
}

}  // namespace echodet
