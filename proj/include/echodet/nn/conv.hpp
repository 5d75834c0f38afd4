#pragma once

#include <Eigen/Core>

#include "echodet/core/ops.hpp"

namespace echodet {

template <class T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapM = Eigen::Map<MatRM<T>>;
template <class T>
using CMapM = Eigen::Map<const MatRM<T>>;

struct ConvSpec {
  int stride = 1;
  int pad_t = 0, pad_b = 0, pad_l = 0, pad_r = 0;
  int dilation = 1;
  int groups = 1;

  ConvSpec& pad(int p) {
    pad_t = pad_b = pad_l = pad_r = p;
    return *this;
  }
  // bottom/right padding so the output is exactly ceil(in/stride)
  static ConvSpec ceil_same(int64_t ih, int64_t iw, int k, int s) {
    ConvSpec c;
    c.stride = s;
    auto need = [&](int64_t n) {
      int64_t out = (n + s - 1) / s;
      return static_cast<int>(std::max<int64_t>(0, (out - 1) * s + k - n));
    };
    c.pad_b = need(ih);
    c.pad_r = need(iw);
    return c;
  }
};

namespace conv_detail {

inline int64_t out_size(int64_t in, int pad0, int pad1, int k, int dil, int stride) {
  return (in + pad0 + pad1 - static_cast<int64_t>(dil) * (k - 1) - 1) / stride + 1;
}

// cols is [cin*kh*kw, oh*ow] for one sample
template <class T>
void im2col(const T* x, int64_t cin, int64_t ih, int64_t iw, int kh, int kw, const ConvSpec& sp,
            int64_t oh, int64_t ow, T* cols) {
  int64_t on = oh * ow;
  for (int64_t c = 0; c < cin; ++c) {
    const T* xc = x + c * ih * iw;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        T* row = cols + ((c * kh + ky) * kw + kx) * on;
        for (int64_t oy = 0; oy < oh; ++oy) {
          int64_t iy = oy * sp.stride - sp.pad_t + static_cast<int64_t>(ky) * sp.dilation;
          T* dst = row + oy * ow;
          if (iy < 0 || iy >= ih) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          const T* src = xc + iy * iw;
          for (int64_t ox = 0; ox < ow; ++ox) {
            int64_t ix = ox * sp.stride - sp.pad_l + static_cast<int64_t>(kx) * sp.dilation;
            dst[ox] = (ix >= 0 && ix < iw) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im(const T* cols, int64_t cin, int64_t ih, int64_t iw, int kh, int kw,
            const ConvSpec& sp, int64_t oh, int64_t ow, T* x) {
  int64_t on = oh * ow;
  for (int64_t c = 0; c < cin; ++c) {
    T* xc = x + c * ih * iw;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const T* row = cols + ((c * kh + ky) * kw + kx) * on;
        for (int64_t oy = 0; oy < oh; ++oy) {
          int64_t iy = oy * sp.stride - sp.pad_t + static_cast<int64_t>(ky) * sp.dilation;
          if (iy < 0 || iy >= ih) continue;
          const T* src = row + oy * ow;
          T* dst = xc + iy * iw;
          for (int64_t ox = 0; ox < ow; ++ox) {
            int64_t ix = ox * sp.stride - sp.pad_l + static_cast<int64_t>(kx) * sp.dilation;
            if (ix >= 0 && ix < iw) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace conv_detail

// 2-D convolution, weight [cout, cin/groups, kh, kw], optional bias [cout].
// Pointwise and depthwise cases take direct paths; everything else goes
// through im2col + GEMM.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, ConvSpec sp = {}) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  ECHODET_CHECK(xv.rank() == 4 && wv.rank() == 4, "conv2d expects rank-4 input and weight");
  int64_t b = xv.size(0), cin = xv.size(1), ih = xv.size(2), iw = xv.size(3);
  int64_t cout = wv.size(0), wcin = wv.size(1);
  int kh = static_cast<int>(wv.size(2)), kw = static_cast<int>(wv.size(3));
  ECHODET_CHECK(cin == wcin * sp.groups, "conv2d channel mismatch: input " << cin << " weight "
                                             << wcin << " groups " << sp.groups);
  ECHODET_CHECK(cout % sp.groups == 0, "out channels not divisible by groups");
  int64_t oh = conv_detail::out_size(ih, sp.pad_t, sp.pad_b, kh, sp.dilation, sp.stride);
  int64_t ow = conv_detail::out_size(iw, sp.pad_l, sp.pad_r, kw, sp.dilation, sp.stride);
  ECHODET_CHECK(oh > 0 && ow > 0, "conv2d output would be empty for input " << shape_str(xv.shape()));
  const bool has_bias = bias.defined();
  if (has_bias)
    ECHODET_CHECK(bias.value().numel() == cout, "bias size mismatch");

  const bool pointwise = kh == 1 && kw == 1 && sp.stride == 1 && sp.groups == 1 &&
                         sp.pad_t == 0 && sp.pad_b == 0 && sp.pad_l == 0 && sp.pad_r == 0;
  const bool depthwise = sp.groups == cin && cout == cin && sp.stride == 1;

  Tensor<T> out = Tensor<T>::empty({b, cout, oh, ow});
  int64_t on = oh * ow;

  Tensor<T> cols;  // cached for the GEMM backward path
  if (pointwise) {
    CMapM<T> W(wv.data(), cout, cin);
    for (int64_t bi = 0; bi < b; ++bi) {
      CMapM<T> X(xv.data() + bi * cin * on, cin, on);
      MapM<T> O(out.data() + bi * cout * on, cout, on);
      O.noalias() = W * X;
    }
  } else if (depthwise) {
    // per-tap shifted-row accumulation; the inner loops are contiguous axpy
    out.fill(T(0));
    for (int64_t bi = 0; bi < b; ++bi) {
      for (int64_t c = 0; c < cin; ++c) {
        const T* xc = xv.data() + (bi * cin + c) * ih * iw;
        const T* wc = wv.data() + c * kh * kw;
        T* oc = out.data() + (bi * cout + c) * on;
        for (int ky = 0; ky < kh; ++ky) {
          for (int kx = 0; kx < kw; ++kx) {
            T wk = wc[ky * kw + kx];
            int64_t sx = -sp.pad_l + static_cast<int64_t>(kx) * sp.dilation;
            int64_t x0 = std::max<int64_t>(0, -sx);
            int64_t x1 = std::min<int64_t>(ow, iw - sx);
            if (x0 >= x1) continue;
            for (int64_t oy = 0; oy < oh; ++oy) {
              int64_t iy = oy - sp.pad_t + static_cast<int64_t>(ky) * sp.dilation;
              if (iy < 0 || iy >= ih) continue;
              const T* src = xc + iy * iw + sx;
              T* dst = oc + oy * ow;
              for (int64_t ox = x0; ox < x1; ++ox) dst[ox] += wk * src[ox];
            }
          }
        }
      }
    }
  } else {
    int64_t kdim = wcin * kh * kw;
    cols = Tensor<T>::empty({b, sp.groups, kdim, on});
    int64_t gout_ch = cout / sp.groups;
    for (int64_t bi = 0; bi < b; ++bi) {
      for (int g = 0; g < sp.groups; ++g) {
        T* colp = cols.data() + (bi * sp.groups + g) * kdim * on;
        conv_detail::im2col(xv.data() + (bi * cin + g * wcin) * ih * iw, wcin, ih, iw, kh, kw,
                            sp, oh, ow, colp);
        CMapM<T> W(wv.data() + g * gout_ch * kdim, gout_ch, kdim);
        CMapM<T> C(colp, kdim, on);
        MapM<T> O(out.data() + (bi * cout + g * gout_ch) * on, gout_ch, on);
        O.noalias() = W * C;
      }
    }
  }
  if (has_bias) {
    const Tensor<T>& bv = bias.value();
    for (int64_t bi = 0; bi < b; ++bi)
      for (int64_t o = 0; o < cout; ++o) {
        T* p = out.data() + (bi * cout + o) * on;
        T v = bv[o];
        for (int64_t i = 0; i < on; ++i) p[i] += v;
      }
  }

  auto xn = x.node(), wn = w.node(), bn = has_bias ? bias.node() : nullptr;
  if (!grad_enabled() || (!xn && !wn && !bn)) return Var<T>(std::move(out));

  Shape xsh = xv.shape();
  return make_op<T>(
      std::move(out), {xn, wn, bn},
      [=](const Tensor<T>& g) {
        int64_t gout_ch = cout / sp.groups;
        int64_t kdim = wcin * kh * kw;
        if (bn) {
          Tensor<T> gb({cout});
          for (int64_t bi = 0; bi < b; ++bi)
            for (int64_t o = 0; o < cout; ++o) {
              const T* p = g.data() + (bi * cout + o) * on;
              T acc = 0;
              for (int64_t i = 0; i < on; ++i) acc += p[i];
              gb[o] += acc;
            }
          accumulate(bn, gb);
        }
        if (pointwise) {
          if (wn) {
            Tensor<T> gw(wv.shape());
            MapM<T> GW(gw.data(), cout, cin);
            for (int64_t bi = 0; bi < b; ++bi) {
              CMapM<T> G(g.data() + bi * cout * on, cout, on);
              CMapM<T> X(xv.data() + bi * cin * on, cin, on);
              GW.noalias() += G * X.transpose();
            }
            accumulate(wn, gw);
          }
          if (xn) {
            Tensor<T> gx = Tensor<T>::empty(xsh);
            CMapM<T> W(wv.data(), cout, cin);
            for (int64_t bi = 0; bi < b; ++bi) {
              CMapM<T> G(g.data() + bi * cout * on, cout, on);
              MapM<T> GX(gx.data() + bi * cin * on, cin, on);
              GX.noalias() = W.transpose() * G;
            }
            accumulate(xn, gx);
          }
          return;
        }
        if (depthwise) {
          Tensor<T> gw = wn ? Tensor<T>(wv.shape()) : Tensor<T>();
          Tensor<T> gx = xn ? Tensor<T>(xsh) : Tensor<T>();
          for (int64_t bi = 0; bi < b; ++bi) {
            for (int64_t c = 0; c < cin; ++c) {
              const T* xc = xv.data() + (bi * cin + c) * ih * iw;
              const T* wc = wv.data() + c * kh * kw;
              const T* gc = g.data() + (bi * cout + c) * on;
              T* gwc = wn ? gw.data() + c * kh * kw : nullptr;
              T* gxc = xn ? gx.data() + (bi * cin + c) * ih * iw : nullptr;
              for (int ky = 0; ky < kh; ++ky) {
                for (int kx = 0; kx < kw; ++kx) {
                  int64_t sx = -sp.pad_l + static_cast<int64_t>(kx) * sp.dilation;
                  int64_t x0 = std::max<int64_t>(0, -sx);
                  int64_t x1 = std::min<int64_t>(ow, iw - sx);
                  if (x0 >= x1) continue;
                  T wk = wc[ky * kw + kx];
                  T wsum = 0;
                  for (int64_t oy = 0; oy < oh; ++oy) {
                    int64_t iy = oy - sp.pad_t + static_cast<int64_t>(ky) * sp.dilation;
                    if (iy < 0 || iy >= ih) continue;
                    const T* xrow = xc + iy * iw + sx;
                    const T* grow = gc + oy * ow;
                    if (gxc) {
                      T* gxrow = gxc + iy * iw + sx;
                      for (int64_t ox = x0; ox < x1; ++ox) gxrow[ox] += wk * grow[ox];
                    }
                    if (gwc) {
                      T dot = 0;
                      for (int64_t ox = x0; ox < x1; ++ox) dot += xrow[ox] * grow[ox];
                      wsum += dot;
                    }
                  }
                  if (gwc) gwc[ky * kw + kx] += wsum;
                }
              }
            }
          }
          if (wn) accumulate(wn, gw);
          if (xn) accumulate(xn, gx);
          return;
        }
        // generic path
        if (wn) {
          Tensor<T> gw(wv.shape());
          for (int64_t bi = 0; bi < b; ++bi)
            for (int g2 = 0; g2 < sp.groups; ++g2) {
              CMapM<T> G(g.data() + (bi * cout + g2 * gout_ch) * on, gout_ch, on);
              CMapM<T> C(cols.data() + (bi * sp.groups + g2) * kdim * on, kdim, on);
              MapM<T> GW(gw.data() + g2 * gout_ch * kdim, gout_ch, kdim);
              GW.noalias() += G * C.transpose();
            }
          accumulate(wn, gw);
        }
        if (xn) {
          Tensor<T> gx(xsh);
          Tensor<T> gcol = Tensor<T>::empty({kdim, on});
          for (int64_t bi = 0; bi < b; ++bi)
            for (int g2 = 0; g2 < sp.groups; ++g2) {
              CMapM<T> W(wv.data() + g2 * gout_ch * kdim, gout_ch, kdim);
              CMapM<T> G(g.data() + (bi * cout + g2 * gout_ch) * on, gout_ch, on);
              MapM<T> GC(gcol.data(), kdim, on);
              GC.noalias() = W.transpose() * G;
              conv_detail::col2im(gcol.data(), wcin, ih, iw, kh, kw, sp, oh, ow,
                                  gx.data() + (bi * cin + g2 * wcin) * ih * iw);
            }
          accumulate(xn, gx);
        }
      });
}

}  // namespace echodet
