#pragma once

#include "echodet/model/config.hpp"
#include "echodet/nn/conv.hpp"
#include "echodet/nn/module.hpp"

namespace echodet {

// Feedback feature selection: ASPP multi-scale fusion followed by a channel
// attention factor (global hybrid pooling) and a spatial attention factor
// (7x7 depthwise), multiplied into the ASPP output. Either factor can be
// disabled for the ablation rows, in which case it is replaced by 1.
template <class T>
class SelectionModule {
 public:
  SelectionModule() = default;

  SelectionModule(const ModelConfig& cfg, Rng& rng)
      : channels_(cfg.pyramid_channels),
        dil_(cfg.selection_dilations),
        sigma1_on_(cfg.selection_sigma1),
        sigma2_on_(cfg.selection_sigma2) {
    ECHODET_CHECK(channels_ % 4 == 0, "selection channels " << channels_ << " not divisible by 4");
    const int64_t c = channels_, q = channels_ / 4;
    conv1_w_ = param_trunc_normal<T>({q, c, 1, 1}, rng, 0.01);
    conv1_b_ = param_zeros<T>({q});
    dil1_w_ = param_trunc_normal<T>({q, c, 3, 3}, rng, 0.01);
    dil1_b_ = param_zeros<T>({q});
    dil2_w_ = param_trunc_normal<T>({q, c, 3, 3}, rng, 0.01);
    dil2_b_ = param_zeros<T>({q});
    pool_w_ = param_trunc_normal<T>({q, c, 1, 1}, rng, 0.01);
    pool_b_ = param_zeros<T>({q});
    ca_w_ = param_trunc_normal<T>({c, c, 1, 1}, rng, 0.01);
    ca_b_ = param_zeros<T>({c});
    sa_w_ = param_trunc_normal<T>({c, 1, 7, 7}, rng, 0.01);
    sa_b_ = param_zeros<T>({c});
  }

  // four C/4 branches concatenated: 1x1, dilated 3x3 (r=dil[0]),
  // dilated 3x3 (r=dil[1]), global pool -> 1x1 -> broadcast
  Var<T> aspp(const Var<T>& p) const {
    ECHODET_CHECK(p.value().size(1) == channels_,
                  "selection expects " << channels_ << " channels, got " << p.value().size(1));
    int64_t h = p.value().size(2), w = p.value().size(3);
    Var<T> b1 = conv2d(p, conv1_w_, conv1_b_);
    ConvSpec d1;
    d1.pad(dil_[0]);
    d1.dilation = dil_[0];
    Var<T> b2 = conv2d(p, dil1_w_, dil1_b_, d1);
    ConvSpec d2;
    d2.pad(dil_[1]);
    d2.dilation = dil_[1];
    Var<T> b3 = conv2d(p, dil2_w_, dil2_b_, d2);
    Var<T> b4 = upsample_nearest(conv2d(global_avg_pool(p), pool_w_, pool_b_), h, w);
    return concat_channels<T>({b1, b2, b3, b4});
  }

  // sigma1 = sigmoid(Conv1x1(GlobalAvgPool(A) + GlobalMaxPool(A))), [b,C,1,1]
  Var<T> channel_attention(const Var<T>& a) const {
    ECHODET_CHECK(a.value().all_finite(), "non-finite attention input");
    Var<T> pooled = add(global_avg_pool(a), global_max_pool(a));
    return sigmoid(conv2d(pooled, ca_w_, ca_b_));
  }

  // sigma2 = sigmoid(DepthwiseConv7x7(A)), per channel, spatial size kept
  Var<T> spatial_attention(const Var<T>& a) const {
    ConvSpec sp;
    sp.pad(3);
    sp.groups = static_cast<int>(channels_);
    return sigmoid(conv2d(a, sa_w_, sa_b_, sp));
  }

  // R = ASPP(P) * sigma1 * sigma2 with broadcasting; disabled factors are 1
  Var<T> select(const Var<T>& p) const {
    Var<T> a = aspp(p);
    Var<T> r = a;
    if (sigma1_on_) r = mul(r, channel_attention(a));
    if (sigma2_on_) r = mul(r, spatial_attention(a));
    return r;
  }

  void collect(const std::string& p, NamedParams<T>& out) {
    out.add(p + ".conv1.w", conv1_w_);
    out.add(p + ".conv1.b", conv1_b_);
    out.add(p + ".dil1.w", dil1_w_);
    out.add(p + ".dil1.b", dil1_b_);
    out.add(p + ".dil2.w", dil2_w_);
    out.add(p + ".dil2.b", dil2_b_);
    out.add(p + ".pool.w", pool_w_);
    out.add(p + ".pool.b", pool_b_);
    out.add(p + ".ca.w", ca_w_);
    out.add(p + ".ca.b", ca_b_);
    out.add(p + ".sa.w", sa_w_);
    out.add(p + ".sa.b", sa_b_);
  }

 private:
  int64_t channels_ = 0;
  std::array<int, 2> dil_{3, 6};
  bool sigma1_on_ = true, sigma2_on_ = true;
  Var<T> conv1_w_, conv1_b_, dil1_w_, dil1_b_, dil2_w_, dil2_b_, pool_w_, pool_b_;
  Var<T> ca_w_, ca_b_;  // channel attention 1x1 after hybrid pooling
  Var<T> sa_w_, sa_b_;  // spatial attention depthwise 7x7
};

}  // namespace echodet
