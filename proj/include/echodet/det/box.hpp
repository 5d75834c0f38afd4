#pragma once

#include <algorithm>

#include "echodet/core/common.hpp"

namespace echodet {

struct BoxF {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  double w() const { return x2 - x1; }
  double h() const { return y2 - y1; }
  double area() const { return std::max(0.0, w()) * std::max(0.0, h()); }
};

struct Detection {
  BoxF box;
  double score = 0;
  int label = 0;  // 1-based class id
  int level = 0;  // pyramid level the prediction came from
  double ax = 0, ay = 0;  // anchor point the box was decoded from
};

struct GtBox {
  BoxF box;
  int label = 0;
};

// intersection / union; 0 for disjoint or degenerate operands
inline double iou(const BoxF& a, const BoxF& b) {
  ECHODET_CHECK(a.x1 <= a.x2 && a.y1 <= a.y2, "inverted box (" << a.x1 << "," << a.y1 << ","
                                                               << a.x2 << "," << a.y2 << ")");
  ECHODET_CHECK(b.x1 <= b.x2 && b.y1 <= b.y2, "inverted box (" << b.x1 << "," << b.y1 << ","
                                                               << b.x2 << "," << b.y2 << ")");
  double ix = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  double iy = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (ix <= 0 || iy <= 0) return 0.0;
  double inter = ix * iy;
  double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

}  // namespace echodet
