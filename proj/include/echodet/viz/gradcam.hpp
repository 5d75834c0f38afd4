#pragma once

#include "echodet/model/detector.hpp"
#include "echodet/data/transforms.hpp"

namespace echodet {

template <class T>
struct CamMap {
  Tensor<T> heatmap;  // [H, W] in [0, 1], max-normalized when any activation is positive
  int target_class = 0;
  int level = 0;
};

// Gradient-weighted class activation map against the fused feature of one
// pyramid level: channel weights are the spatially pooled gradients of the
// summed class logits, the map is ReLU of the weighted channel sum, bilinear
// upsampled to the input size.
template <class T>
CamMap<T> gradcam(const Detector<T>& det, const Tensor<T>& input, int target_class, int level) {
  ECHODET_CHECK(level >= 3 && level <= 7, "level must be 3..7");
  ECHODET_CHECK(target_class >= 1 && target_class <= det.config().num_classes,
                "class id " << target_class << " out of range");
  const int li = level - 3;
  auto out = det.forward(Var<T>(input));
  Var<T> fused = out.pyramid.fused.p[li];
  fused.retain_grad();

  // sum of the target-class logits at this level
  Tensor<T> mask({1, static_cast<int64_t>(det.config().num_classes), 1, 1});
  mask[target_class - 1] = T(1);
  Var<T> score = sum_all(mul(out.head[li].cls, Var<T>(mask)));
  backward(score);

  CamMap<T> cam;
  cam.target_class = target_class;
  cam.level = level;
  int64_t c = fused.value().size(1), h = fused.value().size(2), w = fused.value().size(3);
  Tensor<T> small({h, w});
  if (fused.has_grad()) {
    const Tensor<T>& g = fused.grad();
    for (int64_t ci = 0; ci < c; ++ci) {
      T wc = 0;
      const T* gp = g.data() + ci * h * w;
      for (int64_t i = 0; i < h * w; ++i) wc += gp[i];
      wc /= static_cast<T>(h * w);
      const T* fp = fused.value().data() + ci * h * w;
      for (int64_t i = 0; i < h * w; ++i) small[i] += wc * fp[i];
    }
    for (int64_t i = 0; i < h * w; ++i) small[i] = std::max(small[i], T(0));
  }
  cam.heatmap = transform_detail::resize_bilinear(small.template cast<float>(),
                                                  input.size(2), input.size(3))
                    .template cast<T>();
  T peak = 0;
  for (int64_t i = 0; i < cam.heatmap.numel(); ++i) peak = std::max(peak, cam.heatmap[i]);
  if (peak > 0)
    for (int64_t i = 0; i < cam.heatmap.numel(); ++i) cam.heatmap[i] /= peak;
  return cam;
}

// in-box vs out-of-box mass of a heatmap, boxes in heatmap coordinates
template <class T>
std::pair<double, double> cam_mass_split(const Tensor<T>& heat, const std::vector<GtBox>& boxes) {
  int64_t h = heat.size(0), w = heat.size(1);
  double inside = 0, outside = 0;
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      double cx = x + 0.5, cy = y + 0.5;
      bool in = false;
      for (const auto& b : boxes)
        if (cx >= b.box.x1 && cx <= b.box.x2 && cy >= b.box.y1 && cy <= b.box.y2) {
          in = true;
          break;
        }
      (in ? inside : outside) += heat[y * w + x];
    }
  return {inside, outside};
}

}  // namespace echodet
