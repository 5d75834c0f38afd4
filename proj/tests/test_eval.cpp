#include <catch2/catch_amalgamated.hpp>

#include "echodet/det/eval.hpp"
#include "helpers.hpp"
#include "oracles/ap_oracle.hpp"

using namespace echodet;
using echodet::testing::ap_oracle;
using echodet::testing::coco_ap_oracle;

TEST_CASE("iou: identical, disjoint, textbook third", "[eval]") {
  REQUIRE(iou({0, 0, 4, 4}, {0, 0, 4, 4}) == 1.0);
  REQUIRE(iou({0, 0, 1, 1}, {5, 5, 6, 6}) == 0.0);
  REQUIRE(iou({0, 0, 2, 2}, {1, 0, 3, 2}) == Catch::Approx(1.0 / 3.0));
  REQUIRE(iou({0, 0, 0, 5}, {0, 0, 2, 5}) == 0.0);  // degenerate -> 0
  REQUIRE_THROWS(iou({3, 0, 1, 5}, {0, 0, 2, 5}));  // inverted -> error
}

namespace {
Scene scene_one_pred_iou06() {
  // gt (0,0,10,10); pred shifted so IoU = 0.6: overlap must be 7.5x10 with
  // union 12.5*10: pred (2.5,0,12.5,10) -> inter 75, union 125 -> 0.6
  Scene s;
  s.gts.push_back({{0, 0, 10, 10}, 1});
  s.dets.push_back({{2.5, 0, 12.5, 10}, 0.9, 1, 3});
  return s;
}

std::vector<Scene> random_scenes(uint64_t seed, int n) {
  Rng rng(seed);
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
        const auto& g = s.gts[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(s.gts.size()) - 1))];
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
}  // namespace

TEST_CASE("crafted IoU-0.6 case: AP50 = 1, AP75 = 0", "[eval]") {
  std::vector<Scene> scenes = {scene_one_pred_iou06()};
  REQUIRE(average_precision(scenes, 1, 0.50) == 1.0);
  REQUIRE(average_precision(scenes, 1, 0.75) == 0.0);
}

TEST_CASE("degenerate inputs: empty preds, perfect preds", "[eval]") {
  Scene s;
  s.gts.push_back({{0, 0, 10, 10}, 1});
  s.gts.push_back({{20, 20, 40, 44}, 2});
  std::vector<Scene> scenes = {s};
  REQUIRE(average_precision(scenes, 1, 0.5) == 0.0);

  for (auto& g : scenes[0].gts) scenes[0].dets.push_back({g.box, 1.0, g.label, 3});
  auto res = coco_ap(scenes, 2);
  REQUIRE(res.ap == 1.0);
  REQUIRE(res.ap50 == 1.0);
  REQUIRE(res.ap75 == 1.0);
  REQUIRE(res.ap_benign == 1.0);
  REQUIRE(res.ap_malignant == 1.0);

  std::vector<Scene> empty_gts(3);
  for (auto& sc : empty_gts) sc.dets.push_back({{0, 0, 5, 5}, 0.5, 1, 3});
  REQUIRE_THROWS(coco_ap(empty_gts, 2));
}

TEST_CASE("class with no ground truth is skipped from the mean", "[eval]") {
  Scene s;
  s.gts.push_back({{0, 0, 10, 10}, 1});  // only class 1 present
  s.dets.push_back({{0, 0, 10, 10}, 0.9, 1, 3});
  s.dets.push_back({{30, 30, 50, 50}, 0.8, 2, 3});  // spurious class-2 pred
  auto res = coco_ap({s}, 2);
  REQUIRE(res.ap == 1.0);  // the class-2 slot does not drag the mean down
  REQUIRE(res.ap_malignant == 0.0);
}

TEST_CASE("equation-literal AP equals the brute-force oracle on random scenes", "[eval]") {
  for (uint64_t seed : {11u, 22u, 33u}) {
    auto scenes = random_scenes(seed, 40);
    int64_t total_gts = 0;
    for (auto& s : scenes) total_gts += static_cast<int64_t>(s.gts.size());
    if (total_gts == 0) continue;
    for (int cls : {1, 2})
      for (double thr : {0.5, 0.55, 0.7, 0.75, 0.9}) {
        double mine = average_precision(scenes, cls, thr);
        double oracle = ap_oracle(scenes, cls, thr);
        REQUIRE(std::abs(mine - oracle) <= 1e-9);
      }
    double mine_mean = coco_ap(scenes, 2).ap;
    REQUIRE(std::abs(mine_mean - coco_ap_oracle(scenes, 2)) <= 1e-9);
  }
}

TEST_CASE("101-point interpolation agrees within 0.02 on random scenes", "[eval]") {
  for (uint64_t seed : {5u, 6u, 7u, 8u}) {
    auto scenes = random_scenes(seed, 60);
    auto lit = coco_ap(scenes, 2, false);
    auto p101 = coco_ap(scenes, 2, true);
    REQUIRE(std::abs(lit.ap - p101.ap) <= 0.02);
    REQUIRE(std::abs(lit.ap50 - p101.ap50) <= 0.02);
  }
}

TEST_CASE("adding a top-scored true positive never lowers AP", "[eval]") {
  for (uint64_t seed : {41u, 42u, 43u, 44u, 45u}) {
    auto scenes = random_scenes(seed, 25);
    // locate a scene with a class-1 gt
    size_t si = scenes.size();
    for (size_t i = 0; i < scenes.size(); ++i)
      for (auto& g : scenes[i].gts)
        if (g.label == 1) si = std::min(si, i);
    if (si == scenes.size()) continue;
    for (double thr : {0.5, 0.75}) {
      double before = average_precision(scenes, 1, thr);
      auto bumped = scenes;
      const GtBox* target = nullptr;
      for (auto& g : bumped[si].gts)
        if (g.label == 1) target = &g;
      bumped[si].dets.push_back({target->box, 2.0, 1, 3});  // top rank, IoU 1
      double after = average_precision(bumped, 1, thr);
      REQUIRE(after >= before - 1e-12);
    }
  }
}

TEST_CASE("precision envelope is non-increasing in recall", "[eval]") {
  auto scenes = random_scenes(77, 50);
  auto ranked = eval_detail::ranked_preds(scenes, 1);
  auto tp = eval_detail::greedy_match(ranked, scenes, 1, 0.5);
  size_t n = tp.size();
  if (n == 0) return;
  std::vector<double> prec(n);
  int64_t cum = 0;
  for (size_t k = 0; k < n; ++k) {
    cum += tp[k];
    prec[k] = double(cum) / double(k + 1);
  }
  for (size_t k = n - 1; k-- > 0;) prec[k] = std::max(prec[k], prec[k + 1]);
  for (size_t k = 1; k < n; ++k) REQUIRE(prec[k - 1] >= prec[k]);
}

TEST_CASE("matching is invariant to input order", "[eval]") {
  auto scenes = random_scenes(99, 30);
  auto shuffled = scenes;
  Rng rng(123);
  for (auto& s : shuffled)
    for (size_t i = s.dets.size(); i > 1; --i)
      std::swap(s.dets[i - 1], s.dets[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);
  for (int cls : {1, 2})
    for (double thr : {0.5, 0.75})
      REQUIRE(average_precision(scenes, cls, thr) == average_precision(shuffled, cls, thr));
}

TEST_CASE("metrics json carries the five keys plus optional fps", "[eval]") {
  EvalResult r;
  r.ap = 0.5;
  r.ap50 = 0.9;
  r.ap75 = 0.6;
  r.ap_benign = 0.4;
  r.ap_malignant = 0.6;
  auto j = metrics_to_json(r);
  for (const char* k : {"AP", "AP50", "AP75", "AP_benign", "AP_malignant"})
    REQUIRE(j.contains(k));
  REQUIRE(!j.contains("fps"));
  r.fps = 39.0;
  REQUIRE(metrics_to_json(r)["fps"] == 39.0);
}
