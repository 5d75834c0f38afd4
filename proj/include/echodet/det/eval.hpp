#pragma once

#include <fstream>
#include <optional>

#include <json.hpp>

#include "echodet/det/decode.hpp"

namespace echodet {

// one image's predictions and ground truth
struct Scene {
  std::vector<Detection> dets;
  std::vector<GtBox> gts;
};

struct EvalResult {
  double ap = 0, ap50 = 0, ap75 = 0;
  double ap_benign = 0, ap_malignant = 0;
  int64_t images = 0, gts = 0, dets = 0;
  std::optional<double> fps;
};

namespace eval_detail {

struct RankedPred {
  size_t scene;
  BoxF box;
  double score;
  size_t orig;  // index within the scene, for the match dump
};

// global ranking per class: score desc, then scene / coordinates ascending —
// deterministic and independent of input order
inline std::vector<RankedPred> ranked_preds(const std::vector<Scene>& scenes, int cls) {
  std::vector<RankedPred> out;
  for (size_t si = 0; si < scenes.size(); ++si)
    for (size_t di = 0; di < scenes[si].dets.size(); ++di) {
      const Detection& d = scenes[si].dets[di];
      if (d.label == cls) out.push_back({si, d.box, d.score, di});
    }
  std::sort(out.begin(), out.end(), [](const RankedPred& a, const RankedPred& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.scene != b.scene) return a.scene < b.scene;
    if (a.box.x1 != b.box.x1) return a.box.x1 < b.box.x1;
    if (a.box.y1 != b.box.y1) return a.box.y1 < b.box.y1;
    if (a.box.x2 != b.box.x2) return a.box.x2 < b.box.x2;
    return a.box.y2 < b.box.y2;
  });
  return out;
}

inline int64_t count_gts(const std::vector<Scene>& scenes, int cls) {
  int64_t n = 0;
  for (const auto& s : scenes)
    for (const auto& g : s.gts)
      if (g.label == cls) ++n;
  return n;
}

// greedy matching in rank order: each gt is used once; a prediction takes the
// unmatched gt with the best IoU >= threshold in its own image
inline std::vector<char> greedy_match(const std::vector<RankedPred>& ranked,
                                      const std::vector<Scene>& scenes, int cls, double thr) {
  std::vector<std::vector<char>> used(scenes.size());
  for (size_t si = 0; si < scenes.size(); ++si) used[si].assign(scenes[si].gts.size(), 0);
  std::vector<char> tp(ranked.size(), 0);
  for (size_t k = 0; k < ranked.size(); ++k) {
    const auto& pred = ranked[k];
    const auto& gts = scenes[pred.scene].gts;
    double best = 0;
    int64_t best_gt = -1;
    for (size_t gi = 0; gi < gts.size(); ++gi) {
      if (gts[gi].label != cls || used[pred.scene][gi]) continue;
      double v = iou(pred.box, gts[gi].box);
      if (v >= thr && v > best) {
        best = v;
        best_gt = static_cast<int64_t>(gi);
      }
    }
    if (best_gt >= 0) {
      used[pred.scene][static_cast<size_t>(best_gt)] = 1;
      tp[k] = 1;
    }
  }
  return tp;
}

// all-point interpolation: sum over ranks of max_{k'>=k} P(k') * delta r(k)
inline double ap_from_flags(const std::vector<char>& tp, int64_t n_gt) {
  if (n_gt <= 0 || tp.empty()) return 0.0;
  const size_t n = tp.size();
  std::vector<double> prec(n), rec(n);
  int64_t cum = 0;
  for (size_t k = 0; k < n; ++k) {
    cum += tp[k];
    prec[k] = static_cast<double>(cum) / static_cast<double>(k + 1);
    rec[k] = static_cast<double>(cum) / static_cast<double>(n_gt);
  }
  // precision envelope, non-increasing in recall
  for (size_t k = n - 1; k-- > 0;) prec[k] = std::max(prec[k], prec[k + 1]);
  double ap = 0, prev_r = 0;
  for (size_t k = 0; k < n; ++k) {
    ap += prec[k] * (rec[k] - prev_r);
    prev_r = rec[k];
  }
  return ap;
}

// pycocotools-style 101-recall-point interpolation, used as a cross-check
inline double ap_from_flags_101(const std::vector<char>& tp, int64_t n_gt) {
  if (n_gt <= 0) return 0.0;
  const size_t n = tp.size();
  std::vector<double> prec(n), rec(n);
  int64_t cum = 0;
  for (size_t k = 0; k < n; ++k) {
    cum += tp[k];
    prec[k] = static_cast<double>(cum) / static_cast<double>(k + 1);
    rec[k] = static_cast<double>(cum) / static_cast<double>(n_gt);
  }
  for (size_t k = n ? n - 1 : 0; k-- > 0;) prec[k] = std::max(prec[k], prec[k + 1]);
  double acc = 0;
  for (int i = 0; i <= 100; ++i) {
    double r = i / 100.0;
    // first rank with recall >= r
    size_t lo = 0, hi = n;
    while (lo < hi) {
      size_t mid = (lo + hi) / 2;
      if (rec[mid] >= r - 1e-12) hi = mid;
      else lo = mid + 1;
    }
    acc += (lo < n) ? prec[lo] : 0.0;
  }
  return acc / 101.0;
}

}  // namespace eval_detail

// AP of one class at one IoU threshold (equation-literal interpolation)
inline double average_precision(const std::vector<Scene>& scenes, int cls, double thr) {
  auto ranked = eval_detail::ranked_preds(scenes, cls);
  int64_t n_gt = eval_detail::count_gts(scenes, cls);
  auto tp = eval_detail::greedy_match(ranked, scenes, cls, thr);
  return eval_detail::ap_from_flags(tp, n_gt);
}

inline double average_precision_101(const std::vector<Scene>& scenes, int cls, double thr) {
  auto ranked = eval_detail::ranked_preds(scenes, cls);
  int64_t n_gt = eval_detail::count_gts(scenes, cls);
  auto tp = eval_detail::greedy_match(ranked, scenes, cls, thr);
  return eval_detail::ap_from_flags_101(tp, n_gt);
}

// AP over 10 IoU thresholds 0.50..0.95 and M classes, plus AP50/AP75 and the
// per-class APs. Classes with no ground-truth instances are excluded from
// the class mean; an entirely empty ground-truth set is an error.
inline EvalResult coco_ap(const std::vector<Scene>& scenes, int num_classes = 2,
                          bool use_101_point = false) {
  EvalResult res;
  res.images = static_cast<int64_t>(scenes.size());
  for (const auto& s : scenes) {
    res.gts += static_cast<int64_t>(s.gts.size());
    res.dets += static_cast<int64_t>(s.dets.size());
  }
  ECHODET_CHECK(res.gts > 0, "evaluation requires at least one ground-truth box");
  auto ap_fn = use_101_point ? average_precision_101 : average_precision;

  double sum_all = 0, sum50 = 0, sum75 = 0;
  int present = 0;
  std::vector<double> per_class(static_cast<size_t>(num_classes), 0.0);
  for (int cls = 1; cls <= num_classes; ++cls) {
    if (eval_detail::count_gts(scenes, cls) == 0) continue;  // skipped by convention
    ++present;
    double acc = 0;
    for (int r = 0; r < 10; ++r) acc += ap_fn(scenes, cls, 0.5 + 0.05 * r);
    acc /= 10.0;
    per_class[static_cast<size_t>(cls - 1)] = acc;
    sum_all += acc;
    sum50 += ap_fn(scenes, cls, 0.50);
    sum75 += ap_fn(scenes, cls, 0.75);
  }
  ECHODET_CHECK(present > 0, "no class has ground-truth instances");
  res.ap = sum_all / present;
  res.ap50 = sum50 / present;
  res.ap75 = sum75 / present;
  res.ap_benign = per_class.size() > 0 ? per_class[0] : 0.0;
  res.ap_malignant = per_class.size() > 1 ? per_class[1] : 0.0;
  return res;
}

inline nlohmann::json metrics_to_json(const EvalResult& r) {
  nlohmann::json j{{"AP", r.ap},
                   {"AP50", r.ap50},
                   {"AP75", r.ap75},
                   {"AP_benign", r.ap_benign},
                   {"AP_malignant", r.ap_malignant}};
  if (r.fps) j["fps"] = *r.fps;
  return j;
}

inline void write_metrics_json(const std::string& path, const EvalResult& r) {
  std::ofstream f(path);
  ECHODET_CHECK(f.good(), "cannot write " << path);
  f << metrics_to_json(r).dump(2) << "\n";
}

// per-image match dump at IoU 0.5 for debugging
inline void write_match_csv(const std::string& path, const std::vector<Scene>& scenes,
                            int num_classes = 2, double thr = 0.5) {
  std::ofstream f(path);
  ECHODET_CHECK(f.good(), "cannot write " << path);
  f << "image,label,score,x1,y1,x2,y2,matched\n";
  for (int cls = 1; cls <= num_classes; ++cls) {
    auto ranked = eval_detail::ranked_preds(scenes, cls);
    auto tp = eval_detail::greedy_match(ranked, scenes, cls, thr);
    for (size_t k = 0; k < ranked.size(); ++k) {
      const auto& p = ranked[k];
      f << p.scene << "," << cls << "," << p.score << "," << p.box.x1 << "," << p.box.y1 << ","
        << p.box.x2 << "," << p.box.y2 << "," << int(tp[k]) << "\n";
    }
  }
}

}  // namespace echodet
