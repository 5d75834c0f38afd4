#pragma once

#include "echodet/core/tensor.hpp"
#include "echodet/det/box.hpp"

namespace echodet {

// Geometry record of the resize+pad step; every sample carries one so that
// detections can be reported in original image coordinates.
struct TransformRecord {
  double sx = 1.0, sy = 1.0;  // original -> model scale (sx == sy unless stretched)
  int orig_w = 0, orig_h = 0;
  int target_w = 0, target_h = 0;
  int content_w = 0, content_h = 0;  // scaled image extent before padding

  BoxF to_model(const BoxF& b) const { return {b.x1 * sx, b.y1 * sy, b.x2 * sx, b.y2 * sy}; }
  BoxF to_original(const BoxF& b) const {
    return {b.x1 / sx, b.y1 / sy, b.x2 / sx, b.y2 / sy};
  }
  bool identity() const {
    return sx == 1.0 && sy == 1.0 && orig_w == target_w && orig_h == target_h;
  }
};

// a grayscale image as a plain [h, w] float tensor in [0, 1]
using GrayImage = Tensor<float>;

namespace transform_detail {
// bilinear resample of a [h,w] tensor to (oh, ow), pixel-center aligned
inline GrayImage resize_bilinear(const GrayImage& src, int64_t oh, int64_t ow) {
  int64_t ih = src.size(0), iw = src.size(1);
  GrayImage out = GrayImage::empty({oh, ow});
  double ry = static_cast<double>(ih) / static_cast<double>(oh);
  double rx = static_cast<double>(iw) / static_cast<double>(ow);
  for (int64_t y = 0; y < oh; ++y) {
    double fy = (static_cast<double>(y) + 0.5) * ry - 0.5;
    int64_t y0 = static_cast<int64_t>(std::floor(fy));
    double wy = fy - static_cast<double>(y0);
    int64_t ya = std::clamp<int64_t>(y0, 0, ih - 1), yb = std::clamp<int64_t>(y0 + 1, 0, ih - 1);
    for (int64_t x = 0; x < ow; ++x) {
      double fx = (static_cast<double>(x) + 0.5) * rx - 0.5;
      int64_t x0 = static_cast<int64_t>(std::floor(fx));
      double wx = fx - static_cast<double>(x0);
      int64_t xa = std::clamp<int64_t>(x0, 0, iw - 1), xb = std::clamp<int64_t>(x0 + 1, 0, iw - 1);
      double v = (1 - wy) * ((1 - wx) * src[ya * iw + xa] + wx * src[ya * iw + xb]) +
                 wy * ((1 - wx) * src[yb * iw + xa] + wx * src[yb * iw + xb]);
      out[y * ow + x] = static_cast<float>(v);
    }
  }
  return out;
}
}  // namespace transform_detail

// Aspect-preserving scale s = min(th/h, tw/w), then bottom/right zero padding
// to exactly (th, tw). With stretch = true the axes scale independently (no
// padding). Returns the padded image and the inverse-transform record.
inline std::pair<GrayImage, TransformRecord> resize_pad(const GrayImage& img, int th, int tw,
                                                        bool stretch = false) {
  ECHODET_CHECK(img.numel() > 0, "empty image");
  int64_t ih = img.size(0), iw = img.size(1);
  TransformRecord rec;
  rec.orig_w = static_cast<int>(iw);
  rec.orig_h = static_cast<int>(ih);
  rec.target_w = tw;
  rec.target_h = th;
  int64_t ch, cw;
  if (stretch) {
    rec.sy = static_cast<double>(th) / static_cast<double>(ih);
    rec.sx = static_cast<double>(tw) / static_cast<double>(iw);
    ch = th;
    cw = tw;
  } else {
    double s = std::min(static_cast<double>(th) / static_cast<double>(ih),
                        static_cast<double>(tw) / static_cast<double>(iw));
    rec.sy = rec.sx = s;
    ch = std::llround(static_cast<double>(ih) * s);
    cw = std::llround(static_cast<double>(iw) * s);
  }
  rec.content_h = static_cast<int>(ch);
  rec.content_w = static_cast<int>(cw);
  GrayImage content = (ch == ih && cw == iw)
                          ? img
                          : transform_detail::resize_bilinear(img, ch, cw);
  if (ch == th && cw == tw) return {content, rec};
  GrayImage out({th, tw});
  for (int64_t y = 0; y < ch; ++y)
    std::memcpy(out.data() + y * tw, content.data() + y * cw,
                sizeof(float) * static_cast<size_t>(cw));
  return {out, rec};
}

inline std::vector<GtBox> boxes_to_model(const std::vector<GtBox>& boxes,
                                         const TransformRecord& rec) {
  std::vector<GtBox> out;
  out.reserve(boxes.size());
  for (const auto& b : boxes) out.push_back({rec.to_model(b.box), b.label});
  return out;
}

// mirror the image and boxes: x1' = W - x2, x2' = W - x1
inline void hflip(GrayImage& img, std::vector<GtBox>& boxes) {
  int64_t h = img.size(0), w = img.size(1);
  for (int64_t y = 0; y < h; ++y) {
    float* row = img.data() + y * w;
    std::reverse(row, row + w);
  }
  for (auto& b : boxes) {
    double x1 = static_cast<double>(w) - b.box.x2;
    double x2 = static_cast<double>(w) - b.box.x1;
    b.box.x1 = x1;
    b.box.x2 = x2;
  }
}

// grayscale [h,w] in [0,1] -> normalized 3-channel model input [1,3,h,w]
template <class T>
Tensor<T> to_model_input(const GrayImage& img, const std::array<double, 3>& mean,
                         const std::array<double, 3>& stddev) {
  int64_t h = img.size(0), w = img.size(1);
  Tensor<T> out = Tensor<T>::empty({1, 3, h, w});
  for (int c = 0; c < 3; ++c) {
    T* dst = out.data() + c * h * w;
    const double m = mean[static_cast<size_t>(c)], s = stddev[static_cast<size_t>(c)];
    for (int64_t i = 0; i < h * w; ++i)
      dst[i] = static_cast<T>((static_cast<double>(img[i]) - m) / s);
  }
  return out;
}

}  // namespace echodet
