#pragma once

#include "echodet/det/eval.hpp"

namespace echodet::testing {

// Brute-force average precision: quadratic selection-sort ranking, greedy
// matching by explicit scans, and the precision envelope recomputed with a
// fresh inner loop for every rank. Kept deliberately naive and separate from
// the library implementation.
inline double ap_oracle(const std::vector<Scene>& scenes, int cls, double thr) {
  struct P {
    size_t scene, orig;
    BoxF box;
    double score;
    bool taken = false;
  };
  std::vector<P> preds;
  int64_t n_gt = 0;
  for (size_t si = 0; si < scenes.size(); ++si) {
    for (size_t di = 0; di < scenes[si].dets.size(); ++di)
      if (scenes[si].dets[di].label == cls)
        preds.push_back({si, di, scenes[si].dets[di].box, scenes[si].dets[di].score});
    for (const auto& g : scenes[si].gts)
      if (g.label == cls) ++n_gt;
  }
  if (n_gt == 0 || preds.empty()) return 0.0;

  // selection sort by (score desc, scene asc, coords asc)
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
    double best_iou = 0;
    int best_gi = -1;
    const auto& gts = scenes[ranked[k].scene].gts;
    for (size_t gi = 0; gi < gts.size(); ++gi) {
      if (gts[gi].label != cls || used[ranked[k].scene][gi]) continue;
      double v = iou(ranked[k].box, gts[gi].box);
      if (v >= thr && v > best_iou) {
        best_iou = v;
        best_gi = static_cast<int>(gi);
      }
    }
    if (best_gi >= 0) {
      used[ranked[k].scene][static_cast<size_t>(best_gi)] = true;
      tp[k] = 1;
    }
  }

  double ap = 0, prev_recall = 0;
  for (size_t k = 0; k < ranked.size(); ++k) {
    int64_t cum = 0;
    for (size_t j = 0; j <= k; ++j) cum += tp[j];
    double recall = static_cast<double>(cum) / static_cast<double>(n_gt);
    // max precision over every rank at or after k
    double env = 0;
    for (size_t j = k; j < ranked.size(); ++j) {
      int64_t c2 = 0;
      for (size_t i = 0; i <= j; ++i) c2 += tp[i];
      env = std::max(env, static_cast<double>(c2) / static_cast<double>(j + 1));
    }
    ap += env * (recall - prev_recall);
    prev_recall = recall;
  }
  return ap;
}

inline double coco_ap_oracle(const std::vector<Scene>& scenes, int num_classes) {
  double sum = 0;
  int present = 0;
  for (int cls = 1; cls <= num_classes; ++cls) {
    int64_t g = 0;
    for (const auto& s : scenes)
      for (const auto& gt : s.gts)
        if (gt.label == cls) ++g;
    if (g == 0) continue;
    ++present;
    double acc = 0;
    for (int r = 0; r < 10; ++r) acc += ap_oracle(scenes, cls, 0.5 + 0.05 * r);
    sum += acc / 10.0;
  }
  return present ? sum / present : 0.0;
}

}  // namespace echodet::testing
