#pragma once

#include "echodet/model/config.hpp"
#include "echodet/nn/conv.hpp"
#include "echodet/nn/deform.hpp"
#include "echodet/nn/module.hpp"
#include "echodet/nn/norm.hpp"

namespace echodet {

template <class T>
struct HeadLevelOut {
  Var<T> cls;  // [b, M, h, w]
  Var<T> reg;  // [b, 4, h, w] raw; distances decode as exp(s_i * raw) * stride
  Var<T> ctn;  // [b, 1, h, w]
};

namespace head_detail {

template <class T>
struct GNParams {
  Var<T> g, b;
  int groups = 1;
  void init(int64_t c) {
    g = param_full<T>({c}, T(1));
    b = param_zeros<T>({c});
    groups = norm_groups(static_cast<int>(c));
  }
  Var<T> operator()(const Var<T>& x) const { return group_norm(x, g, b, groups); }
  void collect(const std::string& p, NamedParams<T>& out) {
    out.add(p + ".g", g);
    out.add(p + ".b", b);
  }
};

// residual block: surround conv 3x3 -> GN -> ReLU -> depthwise-separable 7x7
// -> GN -> ReLU, added back onto the input. The final pointwise conv starts
// at zero so an untrained block is an exact pass-through.
template <class T>
struct PreprocessBlock {
  Var<T> sur_w, sur_b, off_w, off_b;
  Var<T> dw_w, dw_b, pw_w, pw_b;
  GNParams<T> gn1, gn2;
  T tau = T(3);
  int64_t dim = 0;

  void init(int64_t c, T tau_, Rng& rng) {
    dim = c;
    tau = tau_;
    sur_w = param_trunc_normal<T>({c, c, 3, 3}, rng, 0.01);
    sur_b = param_zeros<T>({c});
    off_w = param_zeros<T>({8, c, 3, 3});
    off_b = param_zeros<T>({8});
    gn1.init(c);
    dw_w = param_trunc_normal<T>({c, 1, 7, 7}, rng, 0.01);
    dw_b = param_zeros<T>({c});
    pw_w = param_zeros<T>({c, c, 1, 1});
    pw_b = param_zeros<T>({c});
    gn2.init(c);
  }

  Var<T> operator()(const Var<T>& f) const {
    Var<T> raw = conv2d(f, off_w, off_b, ConvSpec{}.pad(1));
    Var<T> y = surround_conv(f, sur_w, sur_b, raw, tau);
    y = relu(gn1(y));
    ConvSpec dw;
    dw.pad(3);
    dw.groups = static_cast<int>(dim);
    y = conv2d(y, dw_w, dw_b, dw);
    y = conv2d(y, pw_w, pw_b);
    y = relu(gn2(y));
    return add(f, y);
  }

  void collect(const std::string& p, NamedParams<T>& out) {
    out.add(p + ".surround.w", sur_w);
    out.add(p + ".surround.b", sur_b);
    out.add(p + ".offset.w", off_w);
    out.add(p + ".offset.b", off_b);
    gn1.collect(p + ".gn1", out);
    out.add(p + ".dw.w", dw_w);
    out.add(p + ".dw.b", dw_b);
    out.add(p + ".pw.w", pw_w);
    out.add(p + ".pw.b", pw_b);
    gn2.collect(p + ".gn2", out);
  }
};

template <class T>
struct TowerLayer {
  Var<T> w, b;
  GNParams<T> gn;
  void init(int64_t c, Rng& rng) {
    w = param_trunc_normal<T>({c, c, 3, 3}, rng, 0.01);
    b = param_zeros<T>({c});
    gn.init(c);
  }
  Var<T> operator()(const Var<T>& x) const { return relu(gn(conv2d(x, w, b, ConvSpec{}.pad(1)))); }
  void collect(const std::string& p, NamedParams<T>& out) {
    out.add(p + ".w", w);
    out.add(p + ".b", b);
    gn.collect(p + ".gn", out);
  }
};

}  // namespace head_detail

// Adaptive multi-level detection head: a weight-unshared preprocessing block
// per pyramid level feeding one weight-shared decoupled head (classification
// tower + regression tower; the center-ness branch hangs off the regression
// tower). Each level also carries a learnable regression scale.
template <class T>
class AdaptiveHead {
 public:
  AdaptiveHead() = default;

  AdaptiveHead(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    const int64_t c = cfg.pyramid_channels;
    for (auto& blk : pre_) blk.init(c, static_cast<T>(cfg.surround_tau), rng);
    cls_tower_.resize(cfg.head_tower_depth);
    reg_tower_.resize(cfg.head_tower_depth);
    for (auto& l : cls_tower_) l.init(c, rng);
    for (auto& l : reg_tower_) l.init(c, rng);
    cls_w_ = param_trunc_normal<T>({cfg.num_classes, c, 3, 3}, rng, 0.01);
    // focal-loss prior: start every location at ~1% foreground probability
    cls_b_ = param_full<T>({cfg.num_classes}, static_cast<T>(-std::log(99.0)));
    reg_w_ = param_trunc_normal<T>({4, c, 3, 3}, rng, 0.01);
    reg_b_ = param_zeros<T>({4});
    ctn_w_ = param_trunc_normal<T>({1, c, 3, 3}, rng, 0.01);
    ctn_b_ = param_zeros<T>({1});
    for (auto& s : scale_) s = param_full<T>({1}, T(1));
  }

  // level in 0..4; parameters are unique per level
  Var<T> preprocess_level(const Var<T>& f, int level) const {
    ECHODET_CHECK(f.value().size(1) == cfg_.pyramid_channels, "preprocess expects pyramid width");
    if (!cfg_.head_preprocess_surround) return f;
    return pre_[level](f);
  }

  // weight-shared decoupled head on one preprocessed level
  HeadLevelOut<T> shared_head(const Var<T>& g) const {
    Var<T> t = g;
    for (auto& l : cls_tower_) t = l(t);
    Var<T> r = g;
    for (auto& l : reg_tower_) r = l(r);
    HeadLevelOut<T> out;
    out.cls = conv2d(t, cls_w_, cls_b_, ConvSpec{}.pad(1));
    out.reg = conv2d(r, reg_w_, reg_b_, ConvSpec{}.pad(1));
    out.ctn = conv2d(r, ctn_w_, ctn_b_, ConvSpec{}.pad(1));
    return out;
  }

  std::array<HeadLevelOut<T>, 5> forward(const std::array<Var<T>, 5>& fused) const {
    std::array<HeadLevelOut<T>, 5> out;
    for (int i = 0; i < 5; ++i) out[i] = shared_head(preprocess_level(fused[i], i));
    return out;
  }

  Var<T>& scale(int level) { return scale_[level]; }
  const Var<T>& scale(int level) const { return scale_[level]; }

  void collect(const std::string& p, NamedParams<T>& out) {
    for (int i = 0; i < 5; ++i) pre_[i].collect(p + ".pre" + std::to_string(i + 3), out);
    for (size_t i = 0; i < cls_tower_.size(); ++i)
      cls_tower_[i].collect(p + ".cls_tower" + std::to_string(i), out);
    for (size_t i = 0; i < reg_tower_.size(); ++i)
      reg_tower_[i].collect(p + ".reg_tower" + std::to_string(i), out);
    out.add(p + ".cls.w", cls_w_);
    out.add(p + ".cls.b", cls_b_);
    out.add(p + ".reg.w", reg_w_);
    out.add(p + ".reg.b", reg_b_);
    out.add(p + ".ctn.w", ctn_w_);
    out.add(p + ".ctn.b", ctn_b_);
    for (int i = 0; i < 5; ++i) out.add(p + ".scale" + std::to_string(i + 3), scale_[i]);
  }

 private:
  ModelConfig cfg_;
  std::array<head_detail::PreprocessBlock<T>, 5> pre_;
  std::vector<head_detail::TowerLayer<T>> cls_tower_, reg_tower_;
  Var<T> cls_w_, cls_b_, reg_w_, reg_b_, ctn_w_, ctn_b_;
  std::array<Var<T>, 5> scale_;
};

}  // namespace echodet
