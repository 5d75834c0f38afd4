#pragma once

#include <json.hpp>

#include "echodet/det/eval.hpp"
#include "echodet/det/loss.hpp"
#include "echodet/model/detector.hpp"
#include "echodet/train/schedule.hpp"

namespace echodet {

// Executable form of the cross-module invariants: each property runs with
// randomized inputs and reports its worst deviation against the pinned
// tolerance. The suite is deterministic per seed.
struct PropertyReport {
  std::string id;
  int64_t trials = 0;
  double max_deviation = 0;
  double tolerance = 0;
  bool pass = false;
  uint64_t seed = 0;
  std::string note;

  nlohmann::json to_json() const {
    return {{"property", id},     {"trials", trials}, {"max_deviation", max_deviation},
            {"tolerance", tolerance}, {"pass", pass},  {"seed", seed},
            {"note", note}};
  }
};

namespace harness_detail {

inline Tensor<float> rand_tensor(Shape s, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<float> t = Tensor<float>::empty(std::move(s));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

template <class T>
Tensor<T> rand_tensor_t(Shape s, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<T> t = Tensor<T>::empty(std::move(s));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// independent direct-summation 3x3 pad-1 convolution used against the
// zero-offset surround operator
template <class T>
Tensor<T> naive_conv3x3(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  int64_t bs = x.size(0), cin = x.size(1), h = x.size(2), ww = x.size(3), cout = w.size(0);
  Tensor<T> out({bs, cout, h, ww});
  for (int64_t bi = 0; bi < bs; ++bi)
    for (int64_t o = 0; o < cout; ++o)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t xx = 0; xx < ww; ++xx) {
          T acc = b.defined() ? b[o] : T(0);
          for (int64_t c = 0; c < cin; ++c)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                int64_t iy = y + ky - 1, ix = xx + kx - 1;
                if (iy < 0 || iy >= h || ix < 0 || ix >= ww) continue;
                acc += w.at(o, c, ky, kx) * x.at(bi, c, iy, ix);
              }
          out.at(bi, o, y, xx) = acc;
        }
  return out;
}

// independent brute-force AP (quadratic ranking, explicit envelope scans)
inline double brute_force_ap(const std::vector<Scene>& scenes, int cls, double thr) {
  struct P {
    size_t scene;
    BoxF box;
    double score;
  };
  std::vector<P> preds;
  int64_t n_gt = 0;
  for (size_t si = 0; si < scenes.size(); ++si) {
    for (const auto& d : scenes[si].dets)
      if (d.label == cls) preds.push_back({si, d.box, d.score});
    for (const auto& g : scenes[si].gts)
      if (g.label == cls) ++n_gt;
  }
  if (n_gt == 0 || preds.empty()) return 0.0;
  auto before = [](const P& a, const P& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.scene != b.scene) return a.scene < b.scene;
    if (a.box.x1 != b.box.x1) return a.box.x1 < b.box.x1;
    if (a.box.y1 != b.box.y1) return a.box.y1 < b.box.y1;
    if (a.box.x2 != b.box.x2) return a.box.x2 < b.box.x2;
    return a.box.y2 < b.box.y2;
  };
  std::vector<P> ranked;
  while (!preds.empty()) {
    size_t best = 0;
    for (size_t i = 1; i < preds.size(); ++i)
      if (before(preds[i], preds[best])) best = i;
    ranked.push_back(preds[best]);
    preds.erase(preds.begin() + static_cast<int64_t>(best));
  }
  std::vector<std::vector<bool>> used(scenes.size());
  for (size_t si = 0; si < scenes.size(); ++si) used[si].assign(scenes[si].gts.size(), false);
  std::vector<int> tp(ranked.size(), 0);
  for (size_t k = 0; k < ranked.size(); ++k) {
    double best_v = 0;
    int best_g = -1;
    const auto& gts = scenes[ranked[k].scene].gts;
    for (size_t gi = 0; gi < gts.size(); ++gi) {
      if (gts[gi].label != cls || used[ranked[k].scene][gi]) continue;
      double v = iou(ranked[k].box, gts[gi].box);
      if (v >= thr && v > best_v) {
        best_v = v;
        best_g = static_cast<int>(gi);
      }
    }
    if (best_g >= 0) {
      used[ranked[k].scene][static_cast<size_t>(best_g)] = true;
      tp[k] = 1;
    }
  }
  double ap = 0, prev_r = 0;
  for (size_t k = 0; k < ranked.size(); ++k) {
    int64_t cum = 0;
    for (size_t j = 0; j <= k; ++j) cum += tp[j];
    double rec = static_cast<double>(cum) / static_cast<double>(n_gt);
    double env = 0;
    for (size_t j = k; j < ranked.size(); ++j) {
      int64_t c2 = 0;
      for (size_t i = 0; i <= j; ++i) c2 += tp[i];
      env = std::max(env, static_cast<double>(c2) / static_cast<double>(j + 1));
    }
    ap += env * (rec - prev_r);
    prev_r = rec;
  }
  return ap;
}

inline std::vector<Scene> random_scenes(uint64_t seed, int n) {
  Rng rng(hash_combine(seed, 0x5CE7E5));
  std::vector<Scene> scenes(static_cast<size_t>(n));
  for (auto& s : scenes) {
    int64_t ngt = rng.uniform_int(0, 5);
    for (int64_t i = 0; i < ngt; ++i) {
      double x1 = rng.uniform(0, 80), y1 = rng.uniform(0, 80);
      s.gts.push_back({{x1, y1, x1 + rng.uniform(4, 30), y1 + rng.uniform(4, 30)},
                       static_cast<int>(rng.uniform_int(1, 2))});
    }
    int64_t nd = rng.uniform_int(0, 8);
    for (int64_t i = 0; i < nd; ++i) {
      Detection d;
      if (!s.gts.empty() && rng.bernoulli(0.6)) {
        const auto& g =
            s.gts[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(s.gts.size()) - 1))];
        double jx = rng.uniform(-6, 6), jy = rng.uniform(-6, 6);
        d.box = {g.box.x1 + jx, g.box.y1 + jy, g.box.x2 + jx * 0.5, g.box.y2 + jy * 0.5};
        d.label = rng.bernoulli(0.85) ? g.label : 3 - g.label;
      } else {
        double x1 = rng.uniform(0, 90), y1 = rng.uniform(0, 90);
        d.box = {x1, y1, x1 + rng.uniform(3, 25), y1 + rng.uniform(3, 25)};
        d.label = static_cast<int>(rng.uniform_int(1, 2));
      }
      if (d.box.x1 > d.box.x2) std::swap(d.box.x1, d.box.x2);
      if (d.box.y1 > d.box.y2) std::swap(d.box.y1, d.box.y2);
      d.score = rng.u01();
      s.dets.push_back(d);
    }
  }
  return scenes;
}

template <class T>
double surround_fd_error(uint64_t seed, T eps) {
  Rng rng(hash_combine(seed, 0xF0));
  auto x = Var<T>::leaf(rand_tensor_t<T>({2, 4, 5, 5}, rng));
  auto w = Var<T>::leaf(rand_tensor_t<T>({3, 4, 3, 3}, rng, -0.5, 0.5));
  auto b = Var<T>::leaf(rand_tensor_t<T>({3}, rng, -0.2, 0.2));
  // interior magnitudes keep the FD step on one smooth bilinear piece
  auto raw = Var<T>::leaf(rand_tensor_t<T>({2, 8, 5, 5}, rng, 0.25, 0.45));
  auto run = [&] {
    auto y = surround_conv(x, w, b, raw, T(3));
    return sum_all(mul(y, sigmoid(scale(y, T(0.3)))));
  };
  backward(run());
  double worst = 0;
  for (Var<T>* leaf : {&x, &w, &b, &raw}) {
    Tensor<T>& v = leaf->value();
    double peak = 1e-30, diff = 0;
    const Tensor<T>& an = leaf->grad();
    for (int64_t i = 0; i < v.numel(); ++i) {
      T keep = v[i];
      v[i] = keep + eps;
      T fp = run().value()[0];
      v[i] = keep - eps;
      T fm = run().value()[0];
      v[i] = keep;
      double fd = (static_cast<double>(fp) - static_cast<double>(fm)) / (2.0 * eps);
      peak = std::max({peak, std::abs(fd), std::abs(static_cast<double>(an[i]))});
      diff = std::max(diff, std::abs(fd - static_cast<double>(an[i])));
    }
    worst = std::max(worst, diff / peak);
    leaf->zero_grad();
  }
  return worst;
}

}  // namespace harness_detail

inline PropertyReport check_zero_feedback_fixed_point(uint64_t seed, int images_per_seed = 10,
                                                      int seeds = 3) {
  using namespace harness_detail;
  PropertyReport r{"zero_feedback_fixed_point", images_per_seed * seeds, 0, 1e-5, false, seed};
  NoGradGuard ng;
  for (int si = 0; si < seeds; ++si) {
    ModelConfig cfg = ModelConfig::tiny();
    Detector<float> det(cfg, seed + static_cast<uint64_t>(si));
    Rng rng(hash_combine(seed, 0xF1F + static_cast<uint64_t>(si)));
    for (int i = 0; i < images_per_seed; ++i) {
      auto img = rand_tensor({1, 3, 256, 320}, rng);
      auto out = det.pyramid().run_two_phase(det.backbone(), Var<float>(img), true);
      for (int li = 0; li < 5; ++li)
        r.max_deviation = std::max(
            r.max_deviation, max_abs_diff(out.fused.p[li].value(), out.phase1.p[li].value()));
    }
  }
  r.pass = r.max_deviation <= r.tolerance;
  return r;
}

inline PropertyReport check_surround_zero_offset(uint64_t seed, int trials = 5) {
  using namespace harness_detail;
  PropertyReport r{"surround_zero_offset_dense", trials, 0, 1e-5, false, seed};
  Rng rng(hash_combine(seed, 0x50));
  for (int t = 0; t < trials; ++t) {
    auto x = rand_tensor({2, 3, 7, 6}, rng);
    auto w = rand_tensor({4, 3, 3, 3}, rng, -0.5, 0.5);
    auto b = rand_tensor({4}, rng, -0.2, 0.2);
    Tensor<float> raw({2, 8, 7, 6});
    NoGradGuard ng;
    auto y = surround_conv(Var<float>(x), Var<float>(w), Var<float>(b), Var<float>(raw), 3.f);
    auto ref = naive_conv3x3(x, w, b);
    r.max_deviation = std::max(r.max_deviation, max_abs_diff(y.value(), ref));
  }
  r.pass = r.max_deviation <= r.tolerance;
  return r;
}

inline PropertyReport check_surround_positions(uint64_t seed, int trials = 1000) {
  PropertyReport r{"surround_position_bounds", trials, 0, 1e-6, false, seed};
  Rng rng(hash_combine(seed, 0x51));
  const float tau = 3.f;
  for (int t = 0; t < trials; ++t) {
    float raw[8];
    for (auto& v : raw) v = static_cast<float>(rng.uniform(-100, 100));
    auto q = surround_sample_positions<float>(raw, tau, 0.f, 0.f);
    r.max_deviation = std::max(
        r.max_deviation, double(std::max(std::abs(q[4].first), std::abs(q[4].second))));  // center
    for (int k = 0; k < 9; ++k) {
      double excess = std::max(std::abs(q[k].first), std::abs(q[k].second)) - (1.0 + tau);
      r.max_deviation = std::max(r.max_deviation, excess);
    }
  }
  r.pass = r.max_deviation <= r.tolerance;
  r.note = "max of center drift and Chebyshev excess over 1+tau";
  return r;
}

inline PropertyReport check_surround_gradients_f32(uint64_t seed) {
  PropertyReport r{"surround_gradcheck_f32", 1, 0, 1e-3, false, seed};
  r.max_deviation = harness_detail::surround_fd_error<float>(seed, 1e-3f);
  r.pass = r.max_deviation <= r.tolerance;
  return r;
}

inline PropertyReport check_surround_gradients_f64(uint64_t seed) {
  PropertyReport r{"surround_gradcheck_f64", 1, 0, 1e-5, false, seed};
  r.max_deviation = harness_detail::surround_fd_error<double>(seed, 1e-3);
  r.pass = r.max_deviation <= r.tolerance;
  return r;
}

inline PropertyReport check_fusion_convexity(uint64_t seed, int64_t entries = 1000000) {
  using namespace harness_detail;
  PropertyReport r{"fusion_convexity", entries, 0, 0, false, seed};
  Rng rng(hash_combine(seed, 0x52));
  int64_t per = 16 * 50 * 50;  // entries per batch of tensors
  int64_t done = 0;
  double worst = -1e30;
  bool equal_ok = true;
  while (done < entries) {
    auto p1 = Var<float>(rand_tensor({1, 16, 50, 50}, rng, -10, 10));
    auto p2 = Var<float>(rand_tensor({1, 16, 50, 50}, rng, -10, 10));
    auto wl = Var<float>(rand_tensor({1, 1, 50, 50}, rng, -25, 25));
    auto f = convex_fuse(p1, p2, wl);
    for (int64_t i = 0; i < f.value().numel(); ++i) {
      float lo = std::min(p1.value()[i], p2.value()[i]);
      float hi = std::max(p1.value()[i], p2.value()[i]);
      worst = std::max({worst, double(lo - f.value()[i]), double(f.value()[i] - hi)});
    }
    // equal operands reproduce the first bitwise
    auto fe = convex_fuse(p1, Var<float>(p1.value().clone()), wl);
    for (int64_t i = 0; i < fe.value().numel(); ++i)
      if (fe.value()[i] != p1.value()[i]) equal_ok = false;
    done += per;
  }
  r.max_deviation = std::max(0.0, worst);
  r.pass = r.max_deviation <= 0 && equal_ok;
  r.note = equal_ok ? "includes bitwise equal-operand check" : "equal-operand check FAILED";
  return r;
}

inline PropertyReport check_attention_bounds(uint64_t seed, int seeds = 10) {
  using namespace harness_detail;
  PropertyReport r{"attention_bounds", seeds, 0, 0, false, seed};
  double min_margin = 1;
  NoGradGuard ng;
  for (int si = 0; si < seeds; ++si) {
    ModelConfig cfg = ModelConfig::tiny();
    Rng prng(hash_combine(seed, 0x53 + static_cast<uint64_t>(si)));
    SelectionModule<float> sel(cfg, prng);
    auto a = Var<float>(rand_tensor({2, cfg.pyramid_channels, 9, 11}, prng, -3, 3));
    auto s1 = sel.channel_attention(a);
    auto s2 = sel.spatial_attention(a);
    for (int64_t i = 0; i < s1.value().numel(); ++i)
      min_margin = std::min({min_margin, double(s1.value()[i]), 1.0 - double(s1.value()[i])});
    for (int64_t i = 0; i < s2.value().numel(); ++i)
      min_margin = std::min({min_margin, double(s2.value()[i]), 1.0 - double(s2.value()[i])});
  }
  r.pass = min_margin > 0;
  r.max_deviation = min_margin > 0 ? 0 : 1;
  r.note = "min distance of sigma1/sigma2 from {0,1}: " + std::to_string(min_margin);
  return r;
}

inline PropertyReport check_anchor_containment(uint64_t seed, int64_t locations = 10000) {
  using namespace harness_detail;
  PropertyReport r{"anchor_containment", locations, 0, 0, false, seed};
  Rng rng(hash_combine(seed, 0x54));
  int64_t checked = 0, violations = 0;
  while (checked < locations) {
    LevelGrid g{4, 16, 16, 20};
    auto cls = rand_tensor({1, 2, 16, 20}, rng, 0, 4);
    auto reg = rand_tensor({1, 4, 16, 20}, rng, -4, 4);
    auto ctn = rand_tensor({1, 1, 16, 20}, rng, 0, 4);
    auto dets = decode_level(cls, reg, ctn, 1.1f, g, 0, 0.01, 1 << 20, 320.0, 256.0);
    for (const auto& d : dets) {
      ++checked;
      if (!(d.ax >= d.box.x1 && d.ax <= d.box.x2 && d.ay >= d.box.y1 && d.ay <= d.box.y2))
        ++violations;
    }
  }
  r.trials = checked;
  r.max_deviation = static_cast<double>(violations);
  r.pass = violations == 0;
  return r;
}

inline PropertyReport check_loss_closed_forms(uint64_t seed) {
  PropertyReport r{"loss_closed_forms", 3, 0, 1e-6, false, seed};
  std::vector<LevelGrid> grids = {{3, 8, 1, 2}, {4, 16, 1, 1}, {5, 32, 1, 1}, {6, 64, 1, 1},
                                  {7, 128, 1, 1}};
  std::array<HeadLevelOut<float>, 5> head;
  std::array<Var<float>, 5> scales;
  for (int i = 0; i < 5; ++i) {
    head[i].cls = Var<float>(Tensor<float>::full({1, 2, grids[i].h, grids[i].w}, -40.f));
    head[i].reg = Var<float>(Tensor<float>({1, 4, grids[i].h, grids[i].w}));
    head[i].ctn = Var<float>(Tensor<float>::full({1, 1, grids[i].h, grids[i].w}, 40.f));
    scales[i] = Var<float>(Tensor<float>::full({1}, 1.f));
  }
  std::vector<GtBox> gts = {{{0, 0, 8, 8}, 1}};
  auto tgt = assign_targets(grids, gts);
  head[0].cls.value().at(0, 0, 0, 0) = static_cast<float>(std::log(9.0));  // p = 0.9
  for (int k = 0; k < 4; ++k)
    head[0].reg.value().at(0, k, 0, 0) =
        static_cast<float>(std::log(tgt.ltrb[0][static_cast<size_t>(k)] / 8.0));
  auto res = detection_loss(head, scales, grids, {tgt});
  const double want = -0.25 * 0.01 * std::log(0.9);
  r.max_deviation = std::max({std::abs(res.cls - want), std::abs(res.reg), std::abs(res.ctn)});
  r.pass = r.max_deviation <= r.tolerance;
  r.note = "focal@p=0.9 vs -0.25*0.1^2*ln(0.9), IoU=1 and centered-BCE terms at 0";
  return r;
}

inline PropertyReport check_loss_npos0(uint64_t seed) {
  using namespace harness_detail;
  PropertyReport r{"loss_npos_zero", 1, 0, 0, false, seed};
  std::vector<LevelGrid> grids = {{3, 8, 2, 2}, {4, 16, 1, 1}, {5, 32, 1, 1}, {6, 64, 1, 1},
                                  {7, 128, 1, 1}};
  Rng rng(hash_combine(seed, 0x55));
  std::array<HeadLevelOut<float>, 5> head;
  std::array<Var<float>, 5> scales;
  for (int i = 0; i < 5; ++i) {
    head[i].cls = Var<float>(rand_tensor({1, 2, grids[i].h, grids[i].w}, rng, -2, 2));
    head[i].reg = Var<float>(rand_tensor({1, 4, grids[i].h, grids[i].w}, rng, -2, 2));
    head[i].ctn = Var<float>(rand_tensor({1, 1, grids[i].h, grids[i].w}, rng, -2, 2));
    scales[i] = Var<float>(Tensor<float>::full({1}, 1.f));
  }
  auto tgt = assign_targets(grids, {});
  auto res = detection_loss(head, scales, grids, {tgt});
  bool ok = std::isfinite(res.value) && res.reg == 0.0 && res.ctn == 0.0 && res.n_pos == 0;
  r.pass = ok;
  r.max_deviation = ok ? 0 : 1;
  return r;
}

inline PropertyReport check_loss_gradcheck(uint64_t seed) {
  using namespace harness_detail;
  PropertyReport r{"loss_gradcheck_f32", 1, 0, 1e-3, false, seed};
  std::vector<LevelGrid> grids = {{3, 8, 1, 2}, {4, 16, 1, 1}, {5, 32, 1, 1}, {6, 64, 1, 1},
                                  {7, 128, 1, 1}};
  Rng rng(hash_combine(seed, 0x56));
  std::array<HeadLevelOut<float>, 5> head;
  std::array<Var<float>, 5> scales;
  for (int i = 0; i < 5; ++i) {
    head[i].cls = Var<float>::leaf(rand_tensor({1, 2, grids[i].h, grids[i].w}, rng, -2, 2));
    head[i].reg = Var<float>::leaf(rand_tensor({1, 4, grids[i].h, grids[i].w}, rng, -0.5, 0.5));
    head[i].ctn = Var<float>::leaf(rand_tensor({1, 1, grids[i].h, grids[i].w}, rng, -1, 1));
    scales[i] = Var<float>::leaf(Tensor<float>::full({1}, 1.f + 0.05f * static_cast<float>(i)));
  }
  std::vector<GtBox> gts = {{{0, 0, 8, 8}, 1}};
  std::vector<AssignedTargets> tgts = {assign_targets(grids, gts)};
  auto run = [&] { return detection_loss(head, scales, grids, tgts); };
  backward(run().total);
  double worst = 0;
  for (int li = 0; li < 5; ++li)
    for (Var<float>* leaf : {&head[li].cls, &head[li].reg, &head[li].ctn, &scales[li]}) {
      Tensor<float>& v = leaf->value();
      double peak = 1e-30, diff = 0;
      for (int64_t i = 0; i < v.numel(); ++i) {
        float keep = v[i];
        v[i] = keep + 1e-2f;
        double fp = run().value;
        v[i] = keep - 1e-2f;
        double fm = run().value;
        v[i] = keep;
        double fd = (fp - fm) / 2e-2;
        double an = leaf->has_grad() ? static_cast<double>(leaf->grad()[i]) : 0.0;
        peak = std::max({peak, std::abs(fd), std::abs(an)});
        diff = std::max(diff, std::abs(fd - an));
      }
      if (peak > 1e-12) worst = std::max(worst, diff / std::max(peak, 1e-6));
      leaf->zero_grad();
    }
  r.max_deviation = worst;
  r.pass = worst <= r.tolerance;
  return r;
}

inline PropertyReport check_evaluator_oracle(uint64_t seed, int scenes_n = 100) {
  using namespace harness_detail;
  PropertyReport r{"evaluator_oracle", scenes_n, 0, 1e-9, false, seed};
  auto scenes = random_scenes(seed, scenes_n);
  for (int cls : {1, 2})
    for (double thr : {0.5, 0.6, 0.75, 0.9})
      r.max_deviation = std::max(
          r.max_deviation,
          std::abs(average_precision(scenes, cls, thr) - brute_force_ap(scenes, cls, thr)));
  r.pass = r.max_deviation <= r.tolerance;
  return r;
}

inline PropertyReport check_evaluator_crafted(uint64_t seed) {
  PropertyReport r{"evaluator_crafted_iou06", 1, 0, 0, false, seed};
  Scene s;
  s.gts.push_back({{0, 0, 10, 10}, 1});
  s.dets.push_back({{2.5, 0, 12.5, 10}, 0.9, 1, 3});
  double a50 = average_precision({s}, 1, 0.50);
  double a75 = average_precision({s}, 1, 0.75);
  r.max_deviation = std::max(std::abs(a50 - 1.0), std::abs(a75 - 0.0));
  r.pass = r.max_deviation == 0;
  r.note = "single match at IoU 0.6: AP50=1, AP75=0";
  return r;
}

inline PropertyReport check_evaluator_101(uint64_t seed, int scenes_n = 120) {
  using namespace harness_detail;
  PropertyReport r{"evaluator_101_agreement", scenes_n, 0, 0.02, false, seed};
  auto scenes = random_scenes(hash_combine(seed, 0x57), scenes_n);
  auto lit = coco_ap(scenes, 2, false);
  auto p101 = coco_ap(scenes, 2, true);
  r.max_deviation = std::max(std::abs(lit.ap - p101.ap), std::abs(lit.ap50 - p101.ap50));
  r.pass = r.max_deviation <= r.tolerance;
  return r;
}

inline PropertyReport check_schedule(uint64_t seed) {
  PropertyReport r{"schedule_exact", 3, 0, 0, false, seed};
  TrainConfig tc;
  bool ok = lr_at(24999, tc) == 0.01 && lr_at(25000, tc) == 0.001 && lr_at(35000, tc) == 0.0001 &&
            lr_at(0, tc) == 0.01;
  bool err_ok = false;
  try {
    lr_at(50000, tc);
  } catch (const std::exception&) {
    err_ok = true;
  }
  r.pass = ok && err_ok;
  r.max_deviation = r.pass ? 0 : 1;
  return r;
}

inline PropertyReport check_forward_determinism(uint64_t seed) {
  using namespace harness_detail;
  PropertyReport r{"forward_determinism", 2, 0, 0, false, seed};
  ModelConfig cfg = ModelConfig::tiny();
  Detector<float> det(cfg, seed);
  Rng rng(hash_combine(seed, 0x58));
  auto img = rand_tensor({1, 3, 128, 160}, rng);
  NoGradGuard ng;
  auto a = det.forward(Var<float>(img));
  auto b = det.forward(Var<float>(img));
  for (int i = 0; i < 5; ++i) {
    r.max_deviation = std::max(r.max_deviation, max_abs_diff(a.head[i].cls.value(), b.head[i].cls.value()));
    r.max_deviation = std::max(r.max_deviation, max_abs_diff(a.head[i].reg.value(), b.head[i].reg.value()));
  }
  r.pass = r.max_deviation == 0;
  return r;
}

inline std::vector<PropertyReport> run_suite(uint64_t seed, int trials) {
  std::vector<PropertyReport> out;
  out.push_back(check_zero_feedback_fixed_point(seed, std::max(1, trials / 3)));
  out.push_back(check_surround_zero_offset(seed, std::max(1, trials / 2)));
  out.push_back(check_surround_positions(seed, 100 * trials));
  out.push_back(check_surround_gradients_f32(seed));
  out.push_back(check_surround_gradients_f64(seed));
  out.push_back(check_fusion_convexity(seed));
  out.push_back(check_attention_bounds(seed, trials));
  out.push_back(check_anchor_containment(seed));
  out.push_back(check_loss_closed_forms(seed));
  out.push_back(check_loss_npos0(seed));
  out.push_back(check_loss_gradcheck(seed));
  out.push_back(check_evaluator_oracle(seed, std::max(100, 10 * trials)));
  out.push_back(check_evaluator_crafted(seed));
  out.push_back(check_evaluator_101(seed));
  out.push_back(check_schedule(seed));
  out.push_back(check_forward_determinism(seed));
  return out;
}

}  // namespace echodet
