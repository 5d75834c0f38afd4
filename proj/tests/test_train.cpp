#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>

#include "echodet/bench/fps.hpp"
#include "echodet/data/synth.hpp"
#include "echodet/train/trainer.hpp"
#include "echodet/viz/gradcam.hpp"
#include "helpers.hpp"

using namespace echodet;

namespace {
std::vector<TrainSample> tiny_set(uint64_t seed, int n) {
  auto synth = synth_ultrasound(seed, n);
  std::vector<TrainSample> out;
  for (auto& s : synth) out.push_back({s.image, s.boxes, s.id, {}});
  return out;
}

TrainConfig probe_config(const std::string& out_dir) {
  TrainConfig tc;
  tc.batch = 1;
  tc.total_steps = 2000;
  tc.decay_steps = {1200, 1700};
  tc.seed = 5;
  tc.warmup_steps = 100;
  tc.ckpt_every = 0;
  tc.out_dir = out_dir;
  return tc;
}
}  // namespace

TEST_CASE("lr schedule: paper values and warmup/resume purity", "[train]") {
  TrainConfig tc;
  REQUIRE(lr_at(0, tc) == 0.01);
  REQUIRE(lr_at(24999, tc) == 0.01);
  REQUIRE(lr_at(25000, tc) == 0.001);
  REQUIRE(lr_at(34999, tc) == 0.001);
  REQUIRE(lr_at(35000, tc) == 0.0001);
  REQUIRE(lr_at(49999, tc) == 0.0001);
  REQUIRE_THROWS(lr_at(-1, tc));
  REQUIRE_THROWS(lr_at(50000, tc));

  tc.warmup_steps = 10;
  REQUIRE(lr_at(0, tc) == Catch::Approx(0.001));
  REQUIRE(lr_at(9, tc) == 0.01);
  // purity: same inputs, same output, no history involved
  REQUIRE(lr_at(25000, tc) == lr_at(25000, tc));

  TrainConfig bad;
  bad.decay_steps = {30000, 20000};
  REQUIRE_THROWS(bad.validate());
}

TEST_CASE("config file round trip", "[train]") {
  auto f = FlatConfig::parse(
      "# comment\n"
      "model.preset = tiny\n"
      "train.lr0 = 0.02\n"
      "train.decay_steps = 100, 200\n"
      "train.total_steps = 300\n"
      "selection.enable_sigma1 = false\n"
      "selection.dilations = [3,6]\n"
      "head.preprocess = identity\n"
      "pyramid.force_zero_feedback = true\n");
  auto [tc, mc] = configs_from_flat(f);
  REQUIRE(tc.lr0 == 0.02);
  REQUIRE(tc.decay_steps[0] == 100);
  REQUIRE(mc.preset == "tiny");
  REQUIRE(!mc.selection_sigma1);
  REQUIRE(!mc.head_preprocess_surround);
  REQUIRE(mc.force_zero_feedback);
  REQUIRE_THROWS(FlatConfig::parse("key value without equals\n"));
}

TEST_CASE("seed-fixed runs produce identical first losses", "[train]") {
  auto set = tiny_set(3, 6);
  std::vector<double> first, second;
  for (int run = 0; run < 2; ++run) {
    ModelConfig mc = ModelConfig::tiny();
    Trainer<float> tr(probe_config("/tmp/echodet_det_run"), mc, set);
    auto& dst = run == 0 ? first : second;
    for (int s = 0; s < 3; ++s) dst.push_back(tr.train_step().value);
  }
  REQUIRE(first == second);
}

TEST_CASE("checkpoint round trip restores parameters and schedule state", "[train]") {
  auto set = tiny_set(4, 6);
  ModelConfig mc = ModelConfig::tiny();
  Trainer<float> tr(probe_config("/tmp/echodet_ckpt_rt"), mc, set);
  for (int s = 0; s < 3; ++s) tr.train_step();
  auto ck = tr.make_checkpoint();
  ck.save("/tmp/echodet_ckpt_rt/test.edc");
  auto loaded = Checkpoint::load("/tmp/echodet_ckpt_rt/test.edc");
  REQUIRE(loaded.meta.at("step") == "3");
  REQUIRE(loaded.meta.at("model.preset") == "tiny");

  // a fresh trainer restored from the checkpoint continues identically
  Trainer<float> tr2(probe_config("/tmp/echodet_ckpt_rt2"), mc, set);
  tr2.restore(loaded);
  REQUIRE(tr2.step() == 3);
  double a = tr.train_step().value;
  double b = tr2.train_step().value;
  REQUIRE(a == b);

  // evaluation reproduces exactly after the round trip
  auto r1 = evaluate_model(tr.detector(), set, tr.mean(), tr.stddev());
  auto r2 = evaluate_model(tr2.detector(), set, tr2.mean(), tr2.stddev());
  REQUIRE(r1.ap50 == r2.ap50);
  REQUIRE(r1.ap == r2.ap);
}

TEST_CASE("a few optimization steps reduce the loss on a tiny set", "[train]") {
  auto set = tiny_set(6, 4);
  ModelConfig mc = ModelConfig::tiny();
  Trainer<float> tr(probe_config("/tmp/echodet_smoke"), mc, set);
  double first3 = 0, last3 = 0;
  const int n = 24;
  for (int s = 0; s < n; ++s) {
    double v = tr.train_step().value;
    if (s < 3) first3 += v;
    if (s >= n - 3) last3 += v;
  }
  REQUIRE(last3 < first3);
}

TEST_CASE("gradcam: range, shape, zero-gradient behaviour", "[train]") {
  ModelConfig mc = ModelConfig::tiny();
  Detector<float> det(mc, 9);
  Rng rng(10);
  Tensor<float> img = echodet::testing::random_tensor<float>({1, 3, 256, 320}, rng);
  auto cam = gradcam(det, img, kLabelMalignant, 3);
  REQUIRE(cam.heatmap.shape() == Shape({256, 320}));
  double peak = 0;
  for (int64_t i = 0; i < cam.heatmap.numel(); ++i) {
    REQUIRE(cam.heatmap[i] >= 0.f);
    REQUIRE(cam.heatmap[i] <= 1.f);
    peak = std::max(peak, double(cam.heatmap[i]));
  }
  REQUIRE(peak == Catch::Approx(1.0));  // max-normalized when positive
  REQUIRE(cam.level == 3);
  REQUIRE_THROWS(gradcam(det, img, 5, 3));
  REQUIRE_THROWS(gradcam(det, img, 1, 9));
}

TEST_CASE("cam_mass_split separates inside and outside", "[train]") {
  Tensor<float> heat({10, 10});
  heat[2 * 10 + 2] = 1.f;
  heat[9 * 10 + 9] = 0.25f;
  std::vector<GtBox> boxes = {{{0, 0, 5, 5}, 1}};
  auto [in, out] = cam_mass_split(heat, boxes);
  REQUIRE(in == Catch::Approx(1.0));
  REQUIRE(out == Catch::Approx(0.25));
}

TEST_CASE("parameter registry: unique names, feedback convs phase-2-only", "[train]") {
  ModelConfig mc = ModelConfig::tiny();
  Detector<float> det(mc, 3);
  auto params = det.params();
  std::set<std::string> names;
  int64_t total = 0, inject = 0;
  for (auto& [n, p] : params.items) {
    REQUIRE(names.insert(n).second);  // no duplicates
    total += p->value().numel();
    if (n.find("inject") != std::string::npos) {
      inject += p->value().numel();
      for (int64_t i = 0; i < p->value().numel(); ++i)
        REQUIRE(p->value()[i] == 0.f);  // zero-feedback fixed point at init
    }
  }
  REQUIRE(total > 0);
  REQUIRE(inject > 0);
  // per-level scales present
  REQUIRE(names.count("head.scale3"));
  REQUIRE(names.count("head.scale7"));
}

TEST_CASE("fps harness: known-latency stub within 10 percent", "[fps]") {
  auto r = fps_benchmark([] { std::this_thread::sleep_for(std::chrono::milliseconds(25)); }, 3, 20);
  REQUIRE(r.fps > 40.0 * 0.9);
  REQUIRE(r.fps < 40.0 * 1.1);
  REQUIRE(!r.hardware.empty());
  REQUIRE_THROWS(fps_benchmark([] {}, 0, 5));  // too few iterations
}
