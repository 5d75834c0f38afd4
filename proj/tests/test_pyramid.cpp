#include <catch2/catch_amalgamated.hpp>

#include "echodet/model/pyramid.hpp"
#include "helpers.hpp"

using namespace echodet;
using echodet::testing::random_tensor;

TEST_CASE("level sizes follow the ceil chain at 800x1024", "[pyramid]") {
  ModelConfig cfg = ModelConfig::full();
  Rng rng(1);
  Backbone<float> bb(cfg, rng);
  FeedbackPyramid<float> fpn(cfg, rng);
  NoGradGuard ng;
  Rng ir(2);
  auto img = Var<float>(random_tensor<float>({1, 3, 800, 1024}, ir));
  auto acts = bb.forward_phase1(img);
  auto lv = fpn.build_phase(acts);
  REQUIRE(lv.p[0].value().shape() == Shape({1, 256, 100, 128}));
  REQUIRE(lv.p[1].value().shape() == Shape({1, 256, 50, 64}));
  REQUIRE(lv.p[2].value().shape() == Shape({1, 256, 25, 32}));
  REQUIRE(lv.p[3].value().shape() == Shape({1, 256, 13, 16}));
  REQUIRE(lv.p[4].value().shape() == Shape({1, 256, 7, 8}));
}

TEST_CASE("zeroed activations with zero-bias laterals give zero pyramid", "[pyramid]") {
  ModelConfig cfg = ModelConfig::tiny();
  Rng rng(3);
  FeedbackPyramid<float> fpn(cfg, rng);
  NoGradGuard ng;
  BackboneActs<float> acts;
  acts.phase = 1;
  acts.c2 = Var<float>(Tensor<float>({1, 24, 64, 80}));
  acts.c3 = Var<float>(Tensor<float>({1, 48, 32, 40}));
  acts.c4 = Var<float>(Tensor<float>({1, 96, 16, 20}));
  acts.c5 = Var<float>(Tensor<float>({1, 192, 8, 10}));
  auto lv = fpn.build_phase(acts);
  for (int i = 0; i < 5; ++i)
    for (int64_t j = 0; j < lv.p[i].value().numel(); ++j) REQUIRE(lv.p[i].value()[j] == 0.f);
}

TEST_CASE("lateral convolutions are shared between phases", "[pyramid]") {
  ModelConfig cfg = ModelConfig::tiny();
  Rng rng(5);
  FeedbackPyramid<float> fpn(cfg, rng);
  NoGradGuard ng;
  Rng ir(6);
  BackboneActs<float> acts;
  acts.phase = 1;
  acts.c3 = Var<float>(random_tensor<float>({1, 48, 8, 8}, ir));
  acts.c4 = Var<float>(random_tensor<float>({1, 96, 4, 4}, ir));
  acts.c5 = Var<float>(random_tensor<float>({1, 192, 2, 2}, ir));
  auto before1 = fpn.build_phase(acts);
  BackboneActs<float> acts2 = acts;
  acts2.phase = 2;
  auto before2 = fpn.build_phase(acts2);

  NamedParams<float> ps;
  fpn.collect("fpn", ps);
  for (auto& [n, p] : ps.items)
    if (n == "fpn.lateral5.w") p->value().fill(0.123f);
  auto after1 = fpn.build_phase(acts);
  auto after2 = fpn.build_phase(acts2);
  REQUIRE(max_abs_diff(before1.p[2].value(), after1.p[2].value()) > 0);
  REQUIRE(max_abs_diff(before2.p[2].value(), after2.p[2].value()) > 0);
  // and both phases see the identical mutated parameters
  REQUIRE(max_abs_diff(after1.p[2].value(), after2.p[2].value()) == 0.0);
}

TEST_CASE("fuse: equal inputs return the first operand bitwise", "[pyramid]") {
  ModelConfig cfg = ModelConfig::tiny();
  Rng rng(7);
  FeedbackPyramid<float> fpn(cfg, rng);
  NoGradGuard ng;
  Rng ir(8);
  auto p = Var<float>(random_tensor<float>({2, 64, 6, 7}, ir));
  auto f = fpn.fuse(0, p, Var<float>(p.value().clone()));
  for (int64_t i = 0; i < p.value().numel(); ++i) REQUIRE(f.value()[i] == p.value()[i]);
}

TEST_CASE("fuse matches direct (1-w)p1 + w p2 arithmetic", "[pyramid]") {
  Rng ir(9);
  auto p1 = Var<float>(random_tensor<float>({1, 64, 5, 4}, ir));
  auto p2 = Var<float>(random_tensor<float>({1, 64, 5, 4}, ir));
  auto wl = Var<float>(random_tensor<float>({1, 1, 5, 4}, ir, -2, 2));
  auto f = convex_fuse(p1, p2, wl);
  for (int64_t c = 0; c < 64; ++c)
    for (int64_t i = 0; i < 20; ++i) {
      float w = 1.f / (1.f + std::exp(-wl.value()[i]));
      float want = (1.f - w) * p1.value()[c * 20 + i] + w * p2.value()[c * 20 + i];
      REQUIRE(f.value()[c * 20 + i] == Catch::Approx(want).margin(1e-6));
    }
}

TEST_CASE("zero fusion conv gives the midpoint", "[pyramid]") {
  ModelConfig cfg = ModelConfig::tiny();
  Rng rng(11);
  FeedbackPyramid<float> fpn(cfg, rng);  // fusion convs are zero-initialized
  NoGradGuard ng;
  Rng ir(12);
  auto p1 = Var<float>(random_tensor<float>({1, 64, 3, 3}, ir));
  auto p2 = Var<float>(random_tensor<float>({1, 64, 3, 3}, ir));
  auto f = fpn.fuse(2, p1, p2);
  for (int64_t i = 0; i < f.value().numel(); ++i)
    REQUIRE(f.value()[i] == Catch::Approx(0.5f * (p1.value()[i] + p2.value()[i])).margin(1e-6));
}

TEST_CASE("fusion stays inside the elementwise min/max envelope", "[pyramid]") {
  Rng ir(13);
  auto p1 = Var<float>(random_tensor<float>({4, 64, 20, 20}, ir, -10, 10));
  auto p2 = Var<float>(random_tensor<float>({4, 64, 20, 20}, ir, -10, 10));
  auto wl = Var<float>(random_tensor<float>({4, 1, 20, 20}, ir, -20, 20));
  auto f = convex_fuse(p1, p2, wl);
  for (int64_t i = 0; i < f.value().numel(); ++i) {
    REQUIRE(f.value()[i] >= std::min(p1.value()[i], p2.value()[i]));
    REQUIRE(f.value()[i] <= std::max(p1.value()[i], p2.value()[i]));
  }
  REQUIRE_THROWS(convex_fuse(p1, Var<float>(Tensor<float>({4, 64, 19, 20})), wl));
}

TEST_CASE("convex_fuse gradients match finite differences", "[pyramid]") {
  Rng ir(14);
  auto p1 = Var<double>::leaf(echodet::testing::random_tensor<double>({1, 4, 3, 3}, ir));
  auto p2 = Var<double>::leaf(echodet::testing::random_tensor<double>({1, 4, 3, 3}, ir));
  auto wl = Var<double>::leaf(echodet::testing::random_tensor<double>({1, 1, 3, 3}, ir, -1, 1));
  auto run = [&] {
    auto f = convex_fuse(p1, p2, wl);
    return sum_all(mul(f, sigmoid(f)));
  };
  backward(run());
  for (auto* leaf : {&p1, &p2, &wl}) {
    auto fd = echodet::testing::finite_diff_grad<double>(
        *leaf, [&] { return run().value()[0]; }, 1e-6);
    REQUIRE(echodet::testing::max_rel_err(leaf->grad(), fd) < 1e-6);
    leaf->zero_grad();
  }
}

TEST_CASE("run_two_phase: zero-feedback fixed point and bookkeeping", "[pyramid]") {
  ModelConfig cfg = ModelConfig::tiny();
  Rng rng(15);
  Backbone<float> bb(cfg, rng);
  FeedbackPyramid<float> fpn(cfg, rng);
  NoGradGuard ng;
  Rng ir(16);
  auto img = Var<float>(random_tensor<float>({1, 3, 256, 320}, ir, -1, 1));

  auto out = fpn.run_two_phase(bb, img, /*force_zero_feedback=*/true);
  for (int i = 0; i < 5; ++i) {
    REQUIRE(max_abs_diff(out.phase2.p[i].value(), out.phase1.p[i].value()) <= 1e-5);
    REQUIRE(max_abs_diff(out.fused.p[i].value(), out.phase1.p[i].value()) <= 1e-5);
  }
  // five levels at strides 8..128
  for (int i = 0; i < 5; ++i) {
    REQUIRE(out.fused.p[i].value().size(2) ==
            (256 + kPyramidStrides[i] - 1) / kPyramidStrides[i]);
    REQUIRE(out.fused.p[i].value().size(3) ==
            (320 + kPyramidStrides[i] - 1) / kPyramidStrides[i]);
  }
  // feedback maps mirror P3..P5 sizes
  for (int i = 0; i < 3; ++i)
    REQUIRE(out.feedback[i].value().shape() == out.phase1.p[i].value().shape());

  // with live selection the phases genuinely differ somewhere once the
  // injection convs are non-zero
  NamedParams<float> ps;
  bb.collect("bb", ps);
  Rng wr(17);
  for (auto& [n, p] : ps.items)
    if (n.find("inject") != std::string::npos)
      for (int64_t i = 0; i < p->value().numel(); ++i)
        p->value()[i] = static_cast<float>(wr.uniform(-0.05, 0.05));
  auto live = fpn.run_two_phase(bb, img, false);
  double d = 0;
  for (int i = 0; i < 3; ++i)
    d = std::max(d, max_abs_diff(live.phase2.p[i].value(), live.phase1.p[i].value()));
  REQUIRE(d > 1e-4);
}
