#pragma once

#include "echodet/model/config.hpp"
#include "echodet/nn/conv.hpp"
#include "echodet/nn/module.hpp"
#include "echodet/nn/norm.hpp"

namespace echodet {

template <class T>
struct BackboneActs {
  int phase = 1;
  Var<T> c2, c3, c4, c5;
};

namespace backbone_detail {

template <class T>
struct LayerNormParams {
  Var<T> g, b;
  void init(int64_t c) {
    g = param_full<T>({c}, T(1));
    b = param_zeros<T>({c});
  }
  Var<T> operator()(const Var<T>& x) const { return layer_norm_channels(x, g, b, T(1e-6)); }
  void collect(const std::string& p, NamedParams<T>& out) {
    out.add(p + ".g", g);
    out.add(p + ".b", b);
  }
};

// depthwise 7x7 -> LN -> 1x1 expand x4 -> GELU -> 1x1 project, layer-scaled
// residual
template <class T>
struct ConvNeXtBlock {
  Var<T> dw_w, dw_b, pw1_w, pw1_b, pw2_w, pw2_b, gamma;
  LayerNormParams<T> ln;
  int64_t dim = 0;

  void init(int64_t c, Rng& rng) {
    dim = c;
    dw_w = param_trunc_normal<T>({c, 1, 7, 7}, rng, 0.02);
    dw_b = param_zeros<T>({c});
    ln.init(c);
    pw1_w = param_trunc_normal<T>({4 * c, c, 1, 1}, rng, 0.02);
    pw1_b = param_zeros<T>({4 * c});
    pw2_w = param_trunc_normal<T>({c, 4 * c, 1, 1}, rng, 0.02);
    pw2_b = param_zeros<T>({c});
    gamma = param_full<T>({1, c, 1, 1}, T(1e-6));
  }

  Var<T> operator()(const Var<T>& x) const {
    ConvSpec dw;
    dw.pad(3);
    dw.groups = static_cast<int>(dim);
    Var<T> y = conv2d(x, dw_w, dw_b, dw);
    y = ln(y);
    y = conv2d(y, pw1_w, pw1_b);
    y = gelu(y);
    y = conv2d(y, pw2_w, pw2_b);
    y = mul(y, gamma);
    return add(x, y);
  }

  void collect(const std::string& p, NamedParams<T>& out) {
    out.add(p + ".dw.w", dw_w);
    out.add(p + ".dw.b", dw_b);
    ln.collect(p + ".ln", out);
    out.add(p + ".pw1.w", pw1_w);
    out.add(p + ".pw1.b", pw1_b);
    out.add(p + ".pw2.w", pw2_w);
    out.add(p + ".pw2.b", pw2_b);
    out.add(p + ".gamma", gamma);
  }
};

// LN then 2x2 stride-2 conv; ceil-padded so spatial dims halve with ceil
template <class T>
struct DownsampleLayer {
  LayerNormParams<T> ln;
  Var<T> w, b;
  void init(int64_t cin, int64_t cout, Rng& rng) {
    ln.init(cin);
    w = param_trunc_normal<T>({cout, cin, 2, 2}, rng, 0.02);
    b = param_zeros<T>({cout});
  }
  Var<T> operator()(const Var<T>& x) const {
    Var<T> y = ln(x);
    return conv2d(y, w, b, ConvSpec::ceil_same(y.value().size(2), y.value().size(3), 2, 2));
  }
  void collect(const std::string& p, NamedParams<T>& out) {
    ln.collect(p + ".ln", out);
    out.add(p + ".w", w);
    out.add(p + ".b", b);
  }
};

}  // namespace backbone_detail

// ConvNeXt-shaped hierarchical backbone that runs twice per image: a plain
// first pass producing C2..C5 and a feedback-injected second pass producing
// C3..C5 from the selected feedback maps. All stage weights are shared
// between the passes; the three feedback point convolutions exist only on
// the second pass and start at zero so training begins at the
// zero-feedback fixed point.
template <class T>
class Backbone {
 public:
  Backbone() = default;

  Backbone(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    stem_w_ = param_trunc_normal<T>({cfg.stage_channels[0], 3, 4, 4}, rng, 0.02);
    stem_b_ = param_zeros<T>({cfg.stage_channels[0]});
    stem_ln_.init(cfg.stage_channels[0]);
    for (int s = 0; s < 4; ++s) {
      stages_[s].resize(cfg.stage_depths[s]);
      for (auto& blk : stages_[s]) blk.init(cfg.stage_channels[s], rng);
      if (s > 0) down_[s - 1].init(cfg.stage_channels[s - 1], cfg.stage_channels[s], rng);
    }
    for (int i = 0; i < 3; ++i) {
      inj_w_[i] = param_zeros<T>({cfg.stage_channels[i + 1], cfg.pyramid_channels, 1, 1});
      inj_b_[i] = param_zeros<T>({cfg.stage_channels[i + 1]});
    }
  }

  std::array<int, 4> stage_depths() const { return cfg_.stage_depths; }

  BackboneActs<T> forward_phase1(const Var<T>& image) const {
    const Tensor<T>& v = image.value();
    ECHODET_CHECK(v.rank() == 4 && v.size(1) == 3,
                  "expected [b,3,H,W] image, got " << shape_str(v.shape()));
    ECHODET_CHECK(v.size(2) >= 64 && v.size(3) >= 64,
                  "image " << v.size(2) << "x" << v.size(3) << " is below the 64px minimum");
    ECHODET_CHECK(v.all_finite(), "non-finite values in input image");
    BackboneActs<T> acts;
    acts.phase = 1;
    Var<T> x = conv2d(image, stem_w_, stem_b_,
                      ConvSpec::ceil_same(v.size(2), v.size(3), 4, 4));
    x = stem_ln_(x);
    acts.c2 = run_stage(0, x);
    acts.c3 = run_stage(1, down_[0](acts.c2));
    acts.c4 = run_stage(2, down_[1](acts.c3));
    acts.c5 = run_stage(3, down_[2](acts.c4));
    return acts;
  }

  // PointConv(R) + Downsample(LN(c_prev)); stage in {3,4,5}
  Var<T> inject_feedback(int stage, const Var<T>& feedback, const Var<T>& c_prev) const {
    ECHODET_CHECK(stage >= 3 && stage <= 5, "feedback enters stages 3..5 only");
    Var<T> lateral = conv2d(feedback, inj_w_[stage - 3], inj_b_[stage - 3]);
    Var<T> down = down_[stage - 3](c_prev);
    ECHODET_CHECK(lateral.value().shape() == down.value().shape(),
                  "feedback map " << shape_str(feedback.value().shape())
                                  << " does not align with downsampled "
                                  << shape_str(c_prev.value().shape()) << " at stage " << stage);
    return add(lateral, down);
  }

  BackboneActs<T> forward_phase2(const std::array<Var<T>, 3>& feedback,
                                 const BackboneActs<T>& cached) const {
    for (int i = 0; i < 3; ++i)
      ECHODET_CHECK(feedback[i].defined(), "missing feedback map for stage " << (i + 3));
    ECHODET_CHECK(cached.phase == 1 && cached.c2.defined(), "phase-1 activations required");
    BackboneActs<T> acts;
    acts.phase = 2;
    acts.c2 = cached.c2;  // no feedback enters before stage 3; weights shared
    acts.c3 = run_stage(1, inject_feedback(3, feedback[0], acts.c2));
    acts.c4 = run_stage(2, inject_feedback(4, feedback[1], acts.c3));
    acts.c5 = run_stage(3, inject_feedback(5, feedback[2], acts.c4));
    return acts;
  }

  void collect(const std::string& p, NamedParams<T>& out) {
    out.add(p + ".stem.w", stem_w_);
    out.add(p + ".stem.b", stem_b_);
    stem_ln_.collect(p + ".stem.ln", out);
    for (int s = 0; s < 4; ++s) {
      if (s > 0) down_[s - 1].collect(p + ".down" + std::to_string(s + 2), out);
      for (size_t i = 0; i < stages_[s].size(); ++i)
        stages_[s][i].collect(p + ".stage" + std::to_string(s + 2) + ".block" + std::to_string(i),
                              out);
    }
    for (int i = 0; i < 3; ++i) {
      out.add(p + ".inject" + std::to_string(i + 3) + ".w", inj_w_[i]);
      out.add(p + ".inject" + std::to_string(i + 3) + ".b", inj_b_[i]);
    }
  }

 private:
  Var<T> run_stage(int s, Var<T> x) const {
    for (auto& blk : stages_[s]) x = blk(x);
    return x;
  }

  ModelConfig cfg_;
  Var<T> stem_w_, stem_b_;
  backbone_detail::LayerNormParams<T> stem_ln_;
  std::array<std::vector<backbone_detail::ConvNeXtBlock<T>>, 4> stages_;
  std::array<backbone_detail::DownsampleLayer<T>, 3> down_;
  std::array<Var<T>, 3> inj_w_, inj_b_;
};

}  // namespace echodet
