#pragma once

#include "echodet/det/targets.hpp"

namespace echodet {

struct FocalParams {
  double alpha = 0.25;
  double gamma = 2.0;
};

template <class T>
struct LossResult {
  Var<T> total;  // scalar, connected to the head outputs and scales
  double value = 0, cls = 0, reg = 0, ctn = 0;  // normalized components
  int n_pos = 0;

  void check_finite() const {
    ECHODET_CHECK(std::isfinite(value),
                  "non-finite training loss: cls=" << cls << " reg=" << reg << " ctn=" << ctn
                                                   << " n_pos=" << n_pos);
  }
};

namespace loss_detail {
inline double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }
inline double sigmoid_d(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
}  // namespace loss_detail

// Eq-style detection objective: sigmoid focal loss over every location and
// class, -ln(IoU) regression loss and center-ness BCE at positive locations,
// everything normalized by the positive count (clamped to 1 when there are
// no positives, in which case the other two terms are exactly zero).
//
// Analytic gradients for the head logits, raw regression outputs and the
// per-level regression scales are produced in the same pass and replayed by
// the tape on backward.
template <class T>
LossResult<T> detection_loss(const std::array<HeadLevelOut<T>, 5>& head,
                             const std::array<Var<T>, 5>& scales,
                             const std::vector<LevelGrid>& grids,
                             const std::vector<AssignedTargets>& targets,
                             FocalParams fp = {}) {
  using loss_detail::sigmoid_d;
  using loss_detail::softplus;
  ECHODET_CHECK(grids.size() == 5, "expected 5 pyramid levels");
  const int64_t batch = head[0].cls.value().size(0);
  ECHODET_CHECK(static_cast<int64_t>(targets.size()) == batch, "one target set per image");
  const int64_t m = head[0].cls.value().size(1);

  int n_pos = 0;
  for (const auto& t : targets) n_pos += t.n_pos;
  const double norm = std::max(1, n_pos);

  double cls_sum = 0, reg_sum = 0, ctn_sum = 0;
  std::array<Tensor<T>, 5> gcls, greg, gctn;
  std::array<double, 5> gscale{};
  // level-major offsets into the flattened target arrays
  std::array<int64_t, 5> level_off{};
  for (int i = 1; i < 5; ++i)
    level_off[i] = level_off[i - 1] + grids[i - 1].h * grids[i - 1].w;

  for (int li = 0; li < 5; ++li) {
    const Tensor<T>& cls = head[li].cls.value();
    const Tensor<T>& reg = head[li].reg.value();
    const Tensor<T>& ctn = head[li].ctn.value();
    const int64_t hw = grids[li].h * grids[li].w;
    ECHODET_CHECK(cls.size(2) == grids[li].h && cls.size(3) == grids[li].w,
                  "head/grid shape mismatch at level " << grids[li].level);
    gcls[li] = Tensor<T>(cls.shape());
    greg[li] = Tensor<T>(reg.shape());
    gctn[li] = Tensor<T>(ctn.shape());
    const double s = static_cast<double>(scales[li].value()[0]);
    const double stride = grids[li].stride;

    for (int64_t bi = 0; bi < batch; ++bi) {
      const AssignedTargets& tgt = targets[bi];
      for (int64_t p = 0; p < hw; ++p) {
        const size_t ti = static_cast<size_t>(level_off[li] + p);
        const int cstar = tgt.cls[ti];
        // focal over all classes
        for (int64_t c = 0; c < m; ++c) {
          const double z = cls.data()[(bi * m + c) * hw + p];
          const double prob = sigmoid_d(z);
          const double u = sigmoid_d(-z);
          const double logp = -softplus(-z), logu = -softplus(z);
          double pg, grad;
          if (cstar == c + 1) {
            pg = -fp.alpha * std::pow(u, fp.gamma) * logp;
            grad = fp.alpha * fp.gamma * prob * std::pow(u, fp.gamma) * logp -
                   fp.alpha * std::pow(u, fp.gamma + 1);
          } else {
            pg = -(1 - fp.alpha) * std::pow(prob, fp.gamma) * logu;
            grad = -(1 - fp.alpha) * fp.gamma * std::pow(prob, fp.gamma) * u * logu +
                   (1 - fp.alpha) * std::pow(prob, fp.gamma + 1);
          }
          cls_sum += pg;
          gcls[li].data()[(bi * m + c) * hw + p] = static_cast<T>(grad / norm);
        }
        if (cstar <= 0) continue;

        // -ln(IoU) on decoded distances; both boxes contain the anchor so the
        // intersection is always positive and the loss finite
        const auto& tl = tgt.ltrb[ti];
        double raw[4], d[4];
        for (int k = 0; k < 4; ++k) {
          raw[k] = reg.data()[(bi * 4 + k) * hw + p];
          d[k] = std::exp(s * raw[k]) * stride;
        }
        const double iw = std::min(d[0], tl[0]) + std::min(d[2], tl[2]);
        const double ih = std::min(d[1], tl[1]) + std::min(d[3], tl[3]);
        const double inter = iw * ih;
        const double a_pred = (d[0] + d[2]) * (d[1] + d[3]);
        const double a_gt = (tl[0] + tl[2]) * (tl[1] + tl[3]);
        const double uni = a_pred + a_gt - inter;
        reg_sum += std::log(uni) - std::log(inter);
        for (int k = 0; k < 4; ++k) {
          const double other = (k == 0 || k == 2) ? ih : iw;  // d(inter)/d(min side)
          const double di = (d[k] <= tl[k]) ? other : 0.0;
          const double da = (k == 0 || k == 2) ? (d[1] + d[3]) : (d[0] + d[2]);
          const double dl_dd = (da - di) / uni - di / inter;
          const double dd_draw = s * d[k];
          greg[li].data()[(bi * 4 + k) * hw + p] = static_cast<T>(dl_dd * dd_draw / norm);
          gscale[li] += dl_dd * raw[k] * d[k] / norm;
        }

        // center-ness BCE with logits
        const double zc = ctn.data()[bi * hw + p];
        const double ostar = tgt.ctn[ti];
        ctn_sum += softplus(zc) - ostar * zc;
        gctn[li].data()[bi * hw + p] = static_cast<T>((sigmoid_d(zc) - ostar) / norm);
      }
    }
  }

  LossResult<T> res;
  res.n_pos = n_pos;
  res.cls = cls_sum / norm;
  res.reg = reg_sum / norm;
  res.ctn = ctn_sum / norm;
  res.value = res.cls + res.reg + res.ctn;

  std::vector<std::shared_ptr<GradNode<T>>> parents;
  for (int li = 0; li < 5; ++li) {
    parents.push_back(head[li].cls.node());
    parents.push_back(head[li].reg.node());
    parents.push_back(head[li].ctn.node());
    parents.push_back(scales[li].node());
  }
  auto cls_nodes = parents;  // copied into the closure below
  res.total = make_op<T>(
      Tensor<T>::scalar(static_cast<T>(res.value)), parents,
      [=](const Tensor<T>& g) {
        const T up = g[0];
        for (int li = 0; li < 5; ++li) {
          auto scale_grad_tensor = Tensor<T>::scalar(static_cast<T>(gscale[li]) * up);
          auto mul_up = [&](const Tensor<T>& stored) {
            Tensor<T> out = Tensor<T>::empty(stored.shape());
            for (int64_t i = 0; i < stored.numel(); ++i) out[i] = stored[i] * up;
            return out;
          };
          if (cls_nodes[li * 4 + 0]) accumulate(cls_nodes[li * 4 + 0], mul_up(gcls[li]));
          if (cls_nodes[li * 4 + 1]) accumulate(cls_nodes[li * 4 + 1], mul_up(greg[li]));
          if (cls_nodes[li * 4 + 2]) accumulate(cls_nodes[li * 4 + 2], mul_up(gctn[li]));
          if (cls_nodes[li * 4 + 3]) accumulate(cls_nodes[li * 4 + 3], scale_grad_tensor);
        }
      });
  return res;
}

}  // namespace echodet
