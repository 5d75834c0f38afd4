#pragma once

#include <algorithm>

#include "echodet/det/loss.hpp"

namespace echodet {

struct DecodeParams {
  double score_floor = 0.05;
  int pre_nms_top = 1000;   // per level
  int post_nms_top = 100;   // per image
  double nms_iou = 0.6;
};

namespace decode_detail {
// stable ordering: score desc, original index asc
inline void sort_by_score(std::vector<Detection>& dets) {
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
}
}  // namespace decode_detail

// Raw per-location decode of one level / one sample. Distances are
// exp(s * raw) * stride, so every decoded box strictly contains its anchor
// point; boxes are clipped to the image afterwards.
template <class T>
std::vector<Detection> decode_level(const Tensor<T>& cls, const Tensor<T>& reg,
                                    const Tensor<T>& ctn, T scale_value, const LevelGrid& grid,
                                    int64_t sample, double score_floor, int pre_nms_top,
                                    double img_w, double img_h) {
  const int64_t m = cls.size(1), hw = grid.h * grid.w;
  std::vector<Detection> out;
  const double s = static_cast<double>(scale_value);
  for (int64_t p = 0; p < hw; ++p) {
    const double q = loss_detail::sigmoid_d(ctn.data()[sample * hw + p]);
    double px = (static_cast<double>(p % grid.w) + 0.5) * grid.stride;
    double py = (static_cast<double>(p / grid.w) + 0.5) * grid.stride;
    double d[4];
    for (int k = 0; k < 4; ++k)
      d[k] = std::exp(s * static_cast<double>(reg.data()[(sample * 4 + k) * hw + p])) * grid.stride;
    for (int64_t c = 0; c < m; ++c) {
      const double score = loss_detail::sigmoid_d(cls.data()[(sample * m + c) * hw + p]) * q;
      if (score <= score_floor) continue;
      Detection det;
      det.box = {std::clamp(px - d[0], 0.0, img_w), std::clamp(py - d[1], 0.0, img_h),
                 std::clamp(px + d[2], 0.0, img_w), std::clamp(py + d[3], 0.0, img_h)};
      det.score = score;
      det.label = static_cast<int>(c) + 1;
      det.level = grid.level;
      det.ax = px;
      det.ay = py;
      out.push_back(det);
    }
  }
  decode_detail::sort_by_score(out);
  if (static_cast<int>(out.size()) > pre_nms_top) out.resize(static_cast<size_t>(pre_nms_top));
  return out;
}

// class-wise greedy suppression by descending score, earlier index wins ties
inline std::vector<Detection> nms_classwise(std::vector<Detection> dets, double iou_thr = 0.6) {
  decode_detail::sort_by_score(dets);
  std::vector<Detection> kept;
  std::vector<bool> dead(dets.size(), false);
  for (size_t i = 0; i < dets.size(); ++i) {
    if (dead[i]) continue;
    kept.push_back(dets[i]);
    for (size_t j = i + 1; j < dets.size(); ++j) {
      if (dead[j] || dets[j].label != dets[i].label) continue;
      if (iou(dets[i].box, dets[j].box) > iou_thr) dead[j] = true;
    }
  }
  return kept;
}

// full post-processing of one sample: per-level decode with the score floor
// and per-level cap, class-wise NMS, then the per-image cap
template <class T>
std::vector<Detection> postprocess(const std::array<HeadLevelOut<T>, 5>& head,
                                   const std::array<Var<T>, 5>& scales,
                                   const std::vector<LevelGrid>& grids, int64_t sample,
                                   double img_w, double img_h, DecodeParams dp = {}) {
  std::vector<Detection> all;
  for (int li = 0; li < 5; ++li) {
    auto lvl = decode_level(head[li].cls.value(), head[li].reg.value(), head[li].ctn.value(),
                            scales[li].value()[0], grids[li], sample, dp.score_floor,
                            dp.pre_nms_top, img_w, img_h);
    all.insert(all.end(), lvl.begin(), lvl.end());
  }
  auto kept = nms_classwise(std::move(all), dp.nms_iou);
  if (static_cast<int>(kept.size()) > dp.post_nms_top)
    kept.resize(static_cast<size_t>(dp.post_nms_top));
  return kept;
}

}  // namespace echodet
