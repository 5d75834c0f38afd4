#pragma once

#include "echodet/nn/conv.hpp"

namespace echodet::testing {

// direct-summation convolution used as the independent oracle for conv2d and
// for the zero-offset surround convolution
template <class T>
Tensor<T> dense_conv_oracle(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                            ConvSpec sp = {}) {
  int64_t b = x.size(0), cin = x.size(1), ih = x.size(2), iw = x.size(3);
  int64_t cout = w.size(0), wcin = w.size(1);
  int kh = static_cast<int>(w.size(2)), kw = static_cast<int>(w.size(3));
  int64_t oh = conv_detail::out_size(ih, sp.pad_t, sp.pad_b, kh, sp.dilation, sp.stride);
  int64_t ow = conv_detail::out_size(iw, sp.pad_l, sp.pad_r, kw, sp.dilation, sp.stride);
  int64_t gout = cout / sp.groups;
  Tensor<T> out({b, cout, oh, ow});
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t o = 0; o < cout; ++o) {
      int64_t g = o / gout;
      for (int64_t oy = 0; oy < oh; ++oy)
        for (int64_t ox = 0; ox < ow; ++ox) {
          T acc = bias.defined() ? bias[o] : T(0);
          for (int64_t c = 0; c < wcin; ++c)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                int64_t iy = oy * sp.stride - sp.pad_t + static_cast<int64_t>(ky) * sp.dilation;
                int64_t ix = ox * sp.stride - sp.pad_l + static_cast<int64_t>(kx) * sp.dilation;
                if (iy < 0 || iy >= ih || ix < 0 || ix >= iw) continue;
                acc += w.at(o, c, ky, kx) * x.at(bi, g * wcin + c, iy, ix);
              }
          out.at(bi, o, oy, ox) = acc;
        }
    }
  return out;
}

}  // namespace echodet::testing
