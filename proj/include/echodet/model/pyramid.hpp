#pragma once

#include "echodet/model/backbone.hpp"
#include "echodet/model/selection.hpp"

namespace echodet {

template <class T>
struct PyramidLevels {
  std::array<Var<T>, 5> p;  // P3..P7 (or F3..F7 for the fused set)
};

template <class T>
struct TwoPhaseOut {
  PyramidLevels<T> fused, phase1, phase2;
  std::array<Var<T>, 3> feedback;  // R3..R5
};

// Convex gate: F = (1-w)*p1 + w*p2 with w = sigmoid(wlogit) broadcast over
// channels.  Evaluated as p1 + w*(p2-p1) and nudged back into
// [min(p1,p2), max(p1,p2)] so the convexity bound holds exactly in floating
// point (the nudge only ever trims sub-ulp rounding spill).
template <class T>
Var<T> convex_fuse(const Var<T>& p1, const Var<T>& p2, const Var<T>& wlogit) {
  const Tensor<T>&a = p1.value(), &b = p2.value(), &l = wlogit.value();
  ECHODET_CHECK(same_shape(a, b), "fuse operands differ: " << shape_str(a.shape()) << " vs "
                                                           << shape_str(b.shape()));
  int64_t bs = a.size(0), c = a.size(1), hw = a.size(2) * a.size(3);
  ECHODET_CHECK(l.shape() == Shape({bs, 1, a.size(2), a.size(3)}),
                "fuse weight must be single-channel, got " << shape_str(l.shape()));
  Tensor<T> w = Tensor<T>::empty(l.shape());
  for (int64_t i = 0; i < l.numel(); ++i) w[i] = sigmoid_scalar(l[i]);
  Tensor<T> out = Tensor<T>::empty(a.shape());
  for (int64_t bi = 0; bi < bs; ++bi) {
    const T* wp = w.data() + bi * hw;
    for (int64_t ci = 0; ci < c; ++ci) {
      int64_t off = (bi * c + ci) * hw;
      for (int64_t i = 0; i < hw; ++i) {
        T lo = std::min(a[off + i], b[off + i]);
        T hi = std::max(a[off + i], b[off + i]);
        T f = a[off + i] + wp[i] * (b[off + i] - a[off + i]);
        out[off + i] = std::min(std::max(f, lo), hi);
      }
    }
  }
  auto n1 = p1.node(), n2 = p2.node(), nl = wlogit.node();
  return make_op<T>(std::move(out), {n1, n2, nl}, [=](const Tensor<T>& g) {
    Tensor<T> g1 = n1 ? Tensor<T>::empty(a.shape()) : Tensor<T>();
    Tensor<T> g2 = n2 ? Tensor<T>::empty(a.shape()) : Tensor<T>();
    Tensor<T> gl = nl ? Tensor<T>(l.shape()) : Tensor<T>();
    for (int64_t bi = 0; bi < bs; ++bi) {
      const T* wp = w.data() + bi * hw;
      T* glp = nl ? gl.data() + bi * hw : nullptr;
      for (int64_t ci = 0; ci < c; ++ci) {
        int64_t off = (bi * c + ci) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          T gv = g[off + i], wv = wp[i];
          if (n1) g1[off + i] = gv * (T(1) - wv);
          if (n2) g2[off + i] = gv * wv;
          if (glp) glp[i] += gv * (b[off + i] - a[off + i]) * wv * (T(1) - wv);
        }
      }
    }
    if (n1) accumulate(n1, g1);
    if (n2) accumulate(n2, g2);
    if (nl) accumulate(nl, gl);
  });
}

// Two-phase feature pyramid. Lateral 1x1 convolutions are shared between the
// phases; the feedback selection modules sit at P3..P5 only, and P6/P7 are
// parameter-free stride-2 subsamplings of P5 in both phases.
template <class T>
class FeedbackPyramid {
 public:
  FeedbackPyramid() = default;

  FeedbackPyramid(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    const int64_t pc = cfg.pyramid_channels;
    for (int i = 0; i < 3; ++i) {
      lat_w_[i] = param_trunc_normal<T>({pc, cfg.stage_channels[i + 1], 1, 1}, rng, 0.01);
      lat_b_[i] = param_zeros<T>({pc});
      sel_[i] = SelectionModule<T>(cfg, rng);
    }
    for (int i = 0; i < 5; ++i) {
      fuse_w_[i] = param_zeros<T>({1, pc, 1, 1});
      fuse_b_[i] = param_zeros<T>({1});
    }
  }

  // P5 = Lateral5(C5); P4 = Lateral4(C4) + Up(P5); P3 = Lateral3(C3) + Up(P4);
  // P6 = Down2(P5); P7 = Down2(P6). Upsampling always matches the lateral
  // operand's exact size.
  PyramidLevels<T> build_phase(const BackboneActs<T>& acts) const {
    PyramidLevels<T> out;
    Var<T> p5 = conv2d(acts.c5, lat_w_[2], lat_b_[2]);
    Var<T> l4 = conv2d(acts.c4, lat_w_[1], lat_b_[1]);
    Var<T> p4 = add(l4, upsample_nearest(p5, l4.value().size(2), l4.value().size(3)));
    Var<T> l3 = conv2d(acts.c3, lat_w_[0], lat_b_[0]);
    Var<T> p3 = add(l3, upsample_nearest(p4, l3.value().size(2), l3.value().size(3)));
    out.p[0] = p3;
    out.p[1] = p4;
    out.p[2] = p5;
    out.p[3] = downsample_stride2(p5);
    out.p[4] = downsample_stride2(out.p[3]);
    return out;
  }

  // level in 0..4 for P3..P7
  Var<T> fuse(int level, const Var<T>& p1, const Var<T>& p2) const {
    Var<T> wl = conv2d(p2, fuse_w_[level], fuse_b_[level]);
    return convex_fuse(p1, p2, wl);
  }

  const SelectionModule<T>& selection(int level) const { return sel_[level]; }

  TwoPhaseOut<T> run_two_phase(const Backbone<T>& bb, const Var<T>& image,
                               bool force_zero_feedback) const {
    TwoPhaseOut<T> out;
    BackboneActs<T> a1 = bb.forward_phase1(image);
    out.phase1 = build_phase(a1);
    for (int i = 0; i < 3; ++i) {
      if (force_zero_feedback) {
        out.feedback[i] = Var<T>(Tensor<T>(out.phase1.p[i].value().shape()));
      } else {
        out.feedback[i] = sel_[i].select(out.phase1.p[i]);
      }
    }
    BackboneActs<T> a2 = bb.forward_phase2(out.feedback, a1);
    out.phase2 = build_phase(a2);
    for (int i = 0; i < 5; ++i) out.fused.p[i] = fuse(i, out.phase1.p[i], out.phase2.p[i]);
    return out;
  }

  void collect(const std::string& p, NamedParams<T>& out) {
    for (int i = 0; i < 3; ++i) {
      out.add(p + ".lateral" + std::to_string(i + 3) + ".w", lat_w_[i]);
      out.add(p + ".lateral" + std::to_string(i + 3) + ".b", lat_b_[i]);
      sel_[i].collect(p + ".select" + std::to_string(i + 3), out);
    }
    for (int i = 0; i < 5; ++i) {
      out.add(p + ".fuse" + std::to_string(i + 3) + ".w", fuse_w_[i]);
      out.add(p + ".fuse" + std::to_string(i + 3) + ".b", fuse_b_[i]);
    }
  }

 private:
  ModelConfig cfg_;
  std::array<Var<T>, 3> lat_w_, lat_b_;
  std::array<SelectionModule<T>, 3> sel_;
  std::array<Var<T>, 5> fuse_w_, fuse_b_;
};

}  // namespace echodet
