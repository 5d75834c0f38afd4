#pragma once

#include <array>

#include "echodet/nn/conv.hpp"

namespace echodet {

// Deformable surround convolution: a 3x3 convolution whose center tap stays
// fixed on the anchor position while the 8 surround taps slide radially
// outward along their own directions by learned magnitudes clamped to
// [0, tau].  Sampling is bilinear with zero padding; tap k's position is
//   q_k = p0 + p_k + clamp(raw_k, 0, tau) * p_k / |p_k|
// with p_k the standard 3x3 grid offset.  raw offsets come in as 8 planes
// (k-order with the center skipped).

namespace surround_detail {

struct Tap {
  int dy, dx;      // base grid offset
  double uy, ux;   // unit direction (0 for the center)
};

inline const std::array<Tap, 9>& taps() {
  static const std::array<Tap, 9> t = [] {
    std::array<Tap, 9> a{};
    const double inv_sqrt2 = 0.7071067811865475244;
    int k = 0;
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx, ++k) {
        double n = (dy == 0 && dx == 0) ? 0.0 : (dy != 0 && dx != 0 ? inv_sqrt2 : 1.0);
        a[k] = {dy, dx, dy * n, dx * n};
      }
    return a;
  }();
  return t;
}

// raw-offset plane index for tap k (center has no plane)
inline int raw_plane(int k) { return k < 4 ? k : k - 1; }

}  // namespace surround_detail

// Sample positions for one anchor; raw holds the 8 surround magnitudes.
// Returned as (y, x) pairs in tap order, center included at k = 4.
template <class T>
std::array<std::pair<T, T>, 9> surround_sample_positions(const T raw[8], T tau, T py, T px) {
  ECHODET_CHECK(tau > T(0), "tau must be positive");
  std::array<std::pair<T, T>, 9> q;
  const auto& taps = surround_detail::taps();
  for (int k = 0; k < 9; ++k) {
    if (k == 4) {
      q[k] = {py, px};
      continue;
    }
    T m = std::min(std::max(raw[surround_detail::raw_plane(k)], T(0)), tau);
    q[k] = {py + taps[k].dy + m * static_cast<T>(taps[k].uy),
            px + taps[k].dx + m * static_cast<T>(taps[k].ux)};
  }
  return q;
}

namespace surround_detail {

template <class T>
inline T bilinear_zero_pad(const T* plane, int64_t h, int64_t w, T y, T x) {
  int64_t y0 = static_cast<int64_t>(std::floor(y));
  int64_t x0 = static_cast<int64_t>(std::floor(x));
  T fy = y - static_cast<T>(y0), fx = x - static_cast<T>(x0);
  auto rd = [&](int64_t yy, int64_t xx) -> T {
    return (yy >= 0 && yy < h && xx >= 0 && xx < w) ? plane[yy * w + xx] : T(0);
  };
  T v00 = rd(y0, x0), v01 = rd(y0, x0 + 1), v10 = rd(y0 + 1, x0), v11 = rd(y0 + 1, x0 + 1);
  return (T(1) - fy) * ((T(1) - fx) * v00 + fx * v01) + fy * ((T(1) - fx) * v10 + fx * v11);
}

}  // namespace surround_detail

// weight [cout, cin, 3, 3], bias [cout] optional, raw_offsets [b, 8, h, w].
// Output spatial size equals the input's (padding-1 semantics; out-of-bounds
// bilinear samples read zero).  Gradients flow to x, weight, bias and raw.
template <class T>
Var<T> surround_conv(const Var<T>& x, const Var<T>& w, const Var<T>& bias,
                     const Var<T>& raw_offsets, T tau) {
  using surround_detail::bilinear_zero_pad;
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  const Tensor<T>& rv = raw_offsets.value();
  ECHODET_CHECK(tau > T(0), "tau must be positive");
  ECHODET_CHECK(xv.rank() == 4, "surround_conv expects rank-4 input");
  ECHODET_CHECK(wv.rank() == 4 && wv.size(2) == 3 && wv.size(3) == 3,
                "surround_conv weight must be [cout,cin,3,3]");
  int64_t b = xv.size(0), cin = xv.size(1), h = xv.size(2), w_ = xv.size(3);
  int64_t cout = wv.size(0);
  ECHODET_CHECK(wv.size(1) == cin, "weight cin mismatch");
  ECHODET_CHECK(rv.shape() == Shape({b, 8, h, w_}),
                "raw offsets must be [b,8,h,w], got " << shape_str(rv.shape()));
  ECHODET_CHECK(rv.all_finite(), "non-finite raw offsets");
  int64_t hw = h * w_;

  const auto& taps = surround_detail::taps();

  // gather the 9 (possibly fractional) taps into columns, then one GEMM
  Tensor<T> cols = Tensor<T>::empty({b, cin * 9, hw});
  Tensor<T> out = Tensor<T>::empty({b, cout, h, w_});
  for (int64_t bi = 0; bi < b; ++bi) {
    const T* rb = rv.data() + bi * 8 * hw;
    for (int64_t c = 0; c < cin; ++c) {
      const T* plane = xv.data() + (bi * cin + c) * hw;
      for (int k = 0; k < 9; ++k) {
        T* dst = cols.data() + (bi * cin * 9 + c * 9 + k) * hw;
        if (k == 4) {
          std::copy(plane, plane + hw, dst);
          continue;
        }
        const T* rp = rb + surround_detail::raw_plane(k) * hw;
        for (int64_t py = 0; py < h; ++py)
          for (int64_t px = 0; px < w_; ++px) {
            T m = std::min(std::max(rp[py * w_ + px], T(0)), tau);
            T qy = static_cast<T>(py + taps[k].dy) + m * static_cast<T>(taps[k].uy);
            T qx = static_cast<T>(px + taps[k].dx) + m * static_cast<T>(taps[k].ux);
            dst[py * w_ + px] = bilinear_zero_pad(plane, h, w_, qy, qx);
          }
      }
    }
    CMapM<T> W(wv.data(), cout, cin * 9);
    CMapM<T> C(cols.data() + bi * cin * 9 * hw, cin * 9, hw);
    MapM<T> O(out.data() + bi * cout * hw, cout, hw);
    O.noalias() = W * C;
  }
  if (bias.defined()) {
    const Tensor<T>& bv = bias.value();
    for (int64_t bi = 0; bi < b; ++bi)
      for (int64_t o = 0; o < cout; ++o) {
        T* p = out.data() + (bi * cout + o) * hw;
        for (int64_t i = 0; i < hw; ++i) p[i] += bv[o];
      }
  }

  auto xn = x.node(), wn = w.node(), bn = bias.defined() ? bias.node() : nullptr,
       rn = raw_offsets.node();
  if (!grad_enabled() || (!xn && !wn && !bn && !rn)) return Var<T>(std::move(out));

  return make_op<T>(
      std::move(out), {xn, wn, bn, rn}, [=](const Tensor<T>& g) {
        if (bn) {
          Tensor<T> gb({cout});
          for (int64_t bi = 0; bi < b; ++bi)
            for (int64_t o = 0; o < cout; ++o) {
              const T* p = g.data() + (bi * cout + o) * hw;
              T acc = 0;
              for (int64_t i = 0; i < hw; ++i) acc += p[i];
              gb[o] += acc;
            }
          accumulate(bn, gb);
        }
        if (wn) {
          Tensor<T> gw(wv.shape());
          MapM<T> GW(gw.data(), cout, cin * 9);
          for (int64_t bi = 0; bi < b; ++bi) {
            CMapM<T> G(g.data() + bi * cout * hw, cout, hw);
            CMapM<T> C(cols.data() + bi * cin * 9 * hw, cin * 9, hw);
            GW.noalias() += G * C.transpose();
          }
          accumulate(wn, gw);
        }
        if (!xn && !rn) return;
        Tensor<T> gx = xn ? Tensor<T>(xv.shape()) : Tensor<T>();
        Tensor<T> gr = rn ? Tensor<T>(rv.shape()) : Tensor<T>();
        Tensor<T> gcol = Tensor<T>::empty({cin * 9, hw});
        for (int64_t bi = 0; bi < b; ++bi) {
          CMapM<T> W(wv.data(), cout, cin * 9);
          CMapM<T> G(g.data() + bi * cout * hw, cout, hw);
          MapM<T> GC(gcol.data(), cin * 9, hw);
          GC.noalias() = W.transpose() * G;
          const T* rb = rv.data() + bi * 8 * hw;
          T* grb = rn ? gr.data() + bi * 8 * hw : nullptr;
          for (int64_t c = 0; c < cin; ++c) {
            const T* plane = xv.data() + (bi * cin + c) * hw;
            T* gplane = xn ? gx.data() + (bi * cin + c) * hw : nullptr;
            for (int k = 0; k < 9; ++k) {
              const T* gc = gcol.data() + (c * 9 + k) * hw;
              if (k == 4) {
                if (gplane)
                  for (int64_t i = 0; i < hw; ++i) gplane[i] += gc[i];
                continue;
              }
              const T* rp = rb + surround_detail::raw_plane(k) * hw;
              T* grp = grb ? grb + surround_detail::raw_plane(k) * hw : nullptr;
              for (int64_t py = 0; py < h; ++py)
                for (int64_t px = 0; px < w_; ++px) {
                  T gv = gc[py * w_ + px];
                  if (gv == T(0)) continue;
                  T rawv = rp[py * w_ + px];
                  T m = std::min(std::max(rawv, T(0)), tau);
                  T qy = static_cast<T>(py + taps[k].dy) + m * static_cast<T>(taps[k].uy);
                  T qx = static_cast<T>(px + taps[k].dx) + m * static_cast<T>(taps[k].ux);
                  int64_t y0 = static_cast<int64_t>(std::floor(qy));
                  int64_t x0 = static_cast<int64_t>(std::floor(qx));
                  T fy = qy - static_cast<T>(y0), fx = qx - static_cast<T>(x0);
                  auto in = [&](int64_t yy, int64_t xx) { return yy >= 0 && yy < h && xx >= 0 && xx < w_; };
                  T v00 = in(y0, x0) ? plane[y0 * w_ + x0] : T(0);
                  T v01 = in(y0, x0 + 1) ? plane[y0 * w_ + x0 + 1] : T(0);
                  T v10 = in(y0 + 1, x0) ? plane[(y0 + 1) * w_ + x0] : T(0);
                  T v11 = in(y0 + 1, x0 + 1) ? plane[(y0 + 1) * w_ + x0 + 1] : T(0);
                  if (gplane) {
                    if (in(y0, x0)) gplane[y0 * w_ + x0] += gv * (T(1) - fy) * (T(1) - fx);
                    if (in(y0, x0 + 1)) gplane[y0 * w_ + x0 + 1] += gv * (T(1) - fy) * fx;
                    if (in(y0 + 1, x0)) gplane[(y0 + 1) * w_ + x0] += gv * fy * (T(1) - fx);
                    if (in(y0 + 1, x0 + 1)) gplane[(y0 + 1) * w_ + x0 + 1] += gv * fy * fx;
                  }
                  if (grp && rawv >= T(0) && rawv <= tau) {
                    T dvy = (T(1) - fx) * (v10 - v00) + fx * (v11 - v01);
                    T dvx = (T(1) - fy) * (v01 - v00) + fy * (v11 - v10);
                    grp[py * w_ + px] +=
                        gv * (dvy * static_cast<T>(taps[k].uy) + dvx * static_cast<T>(taps[k].ux));
                  }
                }
            }
          }
        }
        if (xn) accumulate(xn, gx);
        if (rn) accumulate(rn, gr);
      });
}

// Unvectorized direct-summation oracle with the same contract as
// surround_conv; kept alongside the operator so tests can diff the two.
template <class T>
Tensor<T> surround_conv_reference(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                                  const Tensor<T>& raw, T tau) {
  using surround_detail::bilinear_zero_pad;
  int64_t b = x.size(0), cin = x.size(1), h = x.size(2), w_ = x.size(3);
  int64_t cout = w.size(0);
  Tensor<T> out({b, cout, h, w_});
  const auto& taps = surround_detail::taps();
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t o = 0; o < cout; ++o)
      for (int64_t py = 0; py < h; ++py)
        for (int64_t px = 0; px < w_; ++px) {
          T acc = bias.defined() ? bias[o] : T(0);
          for (int k = 0; k < 9; ++k) {
            T qy = static_cast<T>(py), qx = static_cast<T>(px);
            if (k != 4) {
              T m = std::min(
                  std::max(raw.at(bi, surround_detail::raw_plane(k), py, px), T(0)), tau);
              qy += static_cast<T>(taps[k].dy) + m * static_cast<T>(taps[k].uy);
              qx += static_cast<T>(taps[k].dx) + m * static_cast<T>(taps[k].ux);
            }
            for (int64_t c = 0; c < cin; ++c)
              acc += w.at(o, c, k / 3, k % 3) *
                     bilinear_zero_pad(x.data() + (bi * cin + c) * h * w_, h, w_, qy, qx);
          }
          out.at(bi, o, py, px) = acc;
        }
  return out;
}

}  // namespace echodet
