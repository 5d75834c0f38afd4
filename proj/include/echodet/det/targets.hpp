#pragma once

#include <array>
#include <vector>

#include "echodet/det/box.hpp"
#include "echodet/model/detector.hpp"

namespace echodet {

// per-location training targets over all pyramid levels of one image,
// flattened level-major, row-major within a level
struct AssignedTargets {
  std::vector<int> cls;                      // 0 = background, else 1-based label
  std::vector<std::array<double, 4>> ltrb;   // distances in input pixels, valid where cls > 0
  std::vector<double> ctn;                   // valid where cls > 0
  int n_pos = 0;
};

// regression range per level: P3 (0,64], P4 (64,128], ... P7 (512, inf)
inline std::pair<double, double> level_range(int level) {
  switch (level) {
    case 3: return {0.0, 64.0};
    case 4: return {64.0, 128.0};
    case 5: return {128.0, 256.0};
    case 6: return {256.0, 512.0};
    default: return {512.0, std::numeric_limits<double>::infinity()};
  }
}

inline double centerness_target(double l, double t, double r, double b) {
  double lr = std::min(l, r) / std::max(l, r);
  double tb = std::min(t, b) / std::max(t, b);
  return std::sqrt(lr * tb);
}

// A location is positive iff it lies strictly inside a ground-truth box and
// max(l,t,r,b) falls in its level's range; overlaps resolve to the
// smallest-area box.
inline AssignedTargets assign_targets(const std::vector<LevelGrid>& grids,
                                      const std::vector<GtBox>& gts) {
  for (const auto& g : gts)
    ECHODET_CHECK(g.box.area() > 0, "degenerate ground-truth box ("
                                        << g.box.x1 << "," << g.box.y1 << "," << g.box.x2 << ","
                                        << g.box.y2 << ")");
  AssignedTargets out;
  int64_t total = 0;
  for (const auto& g : grids) total += g.h * g.w;
  out.cls.assign(static_cast<size_t>(total), 0);
  out.ltrb.assign(static_cast<size_t>(total), {0, 0, 0, 0});
  out.ctn.assign(static_cast<size_t>(total), 0.0);

  size_t idx = 0;
  for (const auto& g : grids) {
    auto [lo, hi] = level_range(g.level);
    for (int64_t y = 0; y < g.h; ++y) {
      for (int64_t x = 0; x < g.w; ++x, ++idx) {
        double px = (static_cast<double>(x) + 0.5) * g.stride;
        double py = (static_cast<double>(y) + 0.5) * g.stride;
        double best_area = std::numeric_limits<double>::infinity();
        for (const auto& gt : gts) {
          double l = px - gt.box.x1, t = py - gt.box.y1;
          double r = gt.box.x2 - px, b = gt.box.y2 - py;
          if (l <= 0 || t <= 0 || r <= 0 || b <= 0) continue;
          double maxd = std::max({l, t, r, b});
          if (maxd <= lo || maxd > hi) continue;
          double area = gt.box.area();
          if (area < best_area) {
            best_area = area;
            out.cls[idx] = gt.label;
            out.ltrb[idx] = {l, t, r, b};
            out.ctn[idx] = centerness_target(l, t, r, b);
          }
        }
        if (out.cls[idx] > 0) ++out.n_pos;
      }
    }
  }
  return out;
}

}  // namespace echodet
