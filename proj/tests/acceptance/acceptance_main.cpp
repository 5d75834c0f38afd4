// Acceptance gate: every criterion runs at its pinned tolerance and prints
// one PASS/FAIL line. Exit code is the number of failed criteria.
//
//   acceptance            runs the fast criteria (everything but 8 and 10)
//   acceptance --training runs the two training-backed criteria (8 and 10)
//   acceptance --all      runs everything
//   acceptance --only N   runs a single criterion

#include <chrono>
#include <cstring>
#include <iostream>

#include "echodet/data/synth.hpp"
#include "echodet/train/trainer.hpp"
#include "echodet/verify/harness.hpp"
#include "echodet/viz/gradcam.hpp"
#include "echodet/bench/fps.hpp"

using namespace echodet;

namespace {

int failures = 0;

void report(int criterion, bool pass, const std::string& what, const std::string& detail) {
  std::cout << (pass ? "[PASS]" : "[FAIL]") << " criterion " << criterion << ": " << what << " — "
            << detail << "\n"
            << std::flush;
  if (!pass) ++failures;
}

std::string devstr(const PropertyReport& r) {
  std::ostringstream os;
  os << "max deviation " << r.max_deviation << " vs tolerance " << r.tolerance << " over "
     << r.trials << " trials (seed " << r.seed << ")";
  return os.str();
}

void criterion1(uint64_t seed) {
  auto t0 = std::chrono::steady_clock::now();
  auto r = check_zero_feedback_fixed_point(seed, 10, 3);
  double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report(1, r.pass && el < 120,
         "zero-feedback fixed point |F_i - P_i^1| <= 1e-5, 10 images x 3 seeds",
         devstr(r) + ", " + std::to_string(el) + " s");
}

void criterion2(uint64_t seed) {
  auto t0 = std::chrono::steady_clock::now();
  auto a = check_surround_zero_offset(seed, 5);
  auto b = check_surround_positions(seed, 2000);
  auto c32 = check_surround_gradients_f32(seed);
  auto c64 = check_surround_gradients_f64(seed);
  double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report(2, a.pass && b.pass && c32.pass && c64.pass && el < 300,
         "surround conv: dense-equivalence, position bounds, gradients",
         "zero-offset dev " + std::to_string(a.max_deviation) + ", bound excess " +
             std::to_string(b.max_deviation) + ", grad rel err f32 " +
             std::to_string(c32.max_deviation) + " / f64 " + std::to_string(c64.max_deviation) +
             ", " + std::to_string(el) + " s");
}

void criterion3(uint64_t seed) {
  auto r = check_fusion_convexity(seed, 1000000);
  report(3, r.pass, "fusion convexity on 1e6 randomized entries + bitwise equal-operand case",
         devstr(r));
}

void criterion4(uint64_t seed) {
  auto r = check_attention_bounds(seed, 10);
  report(4, r.pass, "sigma1/sigma2 strictly inside (0,1) over 10 seeds", r.note);
}

void criterion5(uint64_t seed) {
  auto r = check_anchor_containment(seed, 10000);
  report(5, r.pass, "anchor containment of decoded boxes over 1e4 locations",
         std::to_string(static_cast<int64_t>(r.max_deviation)) + " violations in " +
             std::to_string(r.trials) + " boxes");
}

void criterion6(uint64_t seed) {
  auto a = check_loss_closed_forms(seed);
  auto b = check_loss_npos0(seed);
  auto c = check_loss_gradcheck(seed);
  report(6, a.pass && b.pass && c.pass,
         "loss closed forms <= 1e-6, N_pos=0 path, gradient check <= 1e-3",
         "closed-form dev " + std::to_string(a.max_deviation) + ", grad rel err " +
             std::to_string(c.max_deviation));
}

void criterion7(uint64_t seed) {
  auto a = check_evaluator_oracle(seed, 120);
  auto b = check_evaluator_crafted(seed);
  auto c = check_evaluator_101(seed, 150);
  report(7, a.pass && b.pass && c.pass,
         "evaluator: oracle equality on 120 scenes, IoU-0.6 case, 101-point agreement",
         "oracle dev " + std::to_string(a.max_deviation) + ", 101-pt dev " +
             std::to_string(c.max_deviation));
}

void criterion9(uint64_t seed) {
  auto r = check_schedule(seed);
  report(9, r.pass, "lr schedule 0.01/0.001/0.0001 at 24999/25000/35000 exactly",
         r.pass ? "exact" : "mismatch");
}

void criterion11(uint64_t seed) {
  auto stub = fps_benchmark([] { std::this_thread::sleep_for(std::chrono::milliseconds(25)); },
                            5, 40);
  bool stub_ok = stub.fps > 36.0 && stub.fps < 44.0;  // 40 fps +- 10%

  ModelConfig mc = ModelConfig::tiny();
  Detector<float> det(mc, seed);
  Rng rng(seed);
  Tensor<float> img = Tensor<float>::empty({1, 3, mc.input_h, mc.input_w});
  for (int64_t i = 0; i < img.numel(); ++i) img[i] = static_cast<float>(rng.uniform(-1, 1));
  auto real = fps_benchmark(
      [&] {
        NoGradGuard ng;
        auto out = det.forward(Var<float>(img));
        (void)out;
      },
      3, 12);
  report(11, stub_ok && real.fps > 0,
         "fps harness: 25 ms stub within +-10%, real model reported with hardware",
         "stub " + std::to_string(stub.fps) + " fps; tiny model " + std::to_string(real.fps) +
             " fps at " + std::to_string(mc.input_h) + "x" + std::to_string(mc.input_w) + " on " +
             real.hardware);
}

struct TrainedArm {
  std::unique_ptr<Trainer<float>> trainer;
  double ap50 = 0;
  double minutes = 0;
  double med_first = 0, med_last = 0;  // loss medians, first/last 100 steps
};

double median_of(std::vector<double> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void loss_medians(const std::string& csv_path, TrainedArm& arm) {
  std::ifstream f(csv_path);
  std::string line;
  std::getline(f, line);  // header
  std::vector<double> totals;
  while (std::getline(f, line)) {
    auto c1 = line.find(',');
    auto c2 = line.find(',', c1 + 1);
    totals.push_back(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
  }
  if (totals.size() < 200) return;
  arm.med_first = median_of({totals.begin(), totals.begin() + 100});
  arm.med_last = median_of({totals.end() - 100, totals.end()});
}

TrainedArm train_arm(uint64_t seed, bool force_zero_feedback,
                     const std::vector<TrainSample>& set, const std::string& out_dir) {
  ModelConfig mc = ModelConfig::tiny();
  mc.force_zero_feedback = force_zero_feedback;
  TrainConfig tc;
  tc.batch = 1;
  tc.total_steps = 2000;
  tc.decay_steps = {1200, 1700};
  tc.seed = seed;
  tc.warmup_steps = 200;
  tc.ckpt_every = 0;
  tc.out_dir = out_dir;
  TrainedArm arm;
  arm.trainer = std::make_unique<Trainer<float>>(tc, mc, set);
  auto t0 = std::chrono::steady_clock::now();
  arm.trainer->run(2000);
  arm.minutes =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  auto res = evaluate_model(arm.trainer->detector(), set, arm.trainer->mean(),
                            arm.trainer->stddev());
  arm.ap50 = res.ap50;
  loss_medians(out_dir + "/loss_log.csv", arm);
  return arm;
}

void criteria_8_and_10(uint64_t seed, bool run8, bool run10) {
  auto synth = synth_ultrasound(123, 50);
  std::vector<TrainSample> set;
  for (auto& s : synth) set.push_back({s.image, s.boxes, s.id, {}});

  std::cout << "training feedback-on arm (2000 steps, tiny preset, 50 synthetic images)...\n"
            << std::flush;
  TrainedArm on = train_arm(seed, false, set, "/tmp/echodet_accept_on");
  std::cout << "feedback-on: AP50 " << on.ap50 << " in " << on.minutes << " min\n" << std::flush;

  if (run8) {
    std::cout << "training force_zero_feedback arm...\n" << std::flush;
    TrainedArm zero = train_arm(seed, true, set, "/tmp/echodet_accept_zero");
    std::cout << "force_zero_feedback: AP50 " << zero.ap50 << " in " << zero.minutes << " min\n"
              << std::flush;
    bool pass = on.ap50 >= 0.85 && on.ap50 >= zero.ap50 - 0.02 && on.minutes < 30 &&
                zero.minutes < 30 && on.med_last < on.med_first;
    std::ostringstream os;
    os << "AP50(on) " << on.ap50 << " >= 0.85; AP50(zero) " << zero.ap50 << "; delta "
       << (on.ap50 - zero.ap50) << " >= -0.02; loss medians " << on.med_first << " -> "
       << on.med_last << "; runtimes " << on.minutes << " / " << zero.minutes << " min < 30";
    report(8, pass, "desk-scale learning signal with feedback direction-of-effect", os.str());
  }

  if (run10) {
    // Grad-CAM mass on the overfit feedback-on model, one map per train image
    // at the level that owns most of its positive locations
    auto& det = on.trainer->detector();
    auto grids = make_level_grids(det.config().input_h, det.config().input_w);
    int good = 0;
    for (const auto& s : set) {
      auto tgt = assign_targets(grids, s.boxes);
      std::array<int, 5> pos_per_level{};
      size_t idx = 0;
      for (int li = 0; li < 5; ++li) {
        int64_t hw = grids[static_cast<size_t>(li)].h * grids[static_cast<size_t>(li)].w;
        for (int64_t p = 0; p < hw; ++p, ++idx)
          if (tgt.cls[idx] > 0) ++pos_per_level[static_cast<size_t>(li)];
      }
      int best_level = 0;
      for (int li = 1; li < 5; ++li)
        if (pos_per_level[static_cast<size_t>(li)] > pos_per_level[static_cast<size_t>(best_level)])
          best_level = li;
      int cls = s.boxes.empty() ? kLabelBenign : s.boxes[0].label;
      auto input = to_model_input<float>(s.image, on.trainer->mean(), on.trainer->stddev());
      auto cam = gradcam(det, input, cls, best_level + 3);
      auto [inside, outside] = cam_mass_split(cam.heatmap, s.boxes);
      if (inside > outside) ++good;
    }
    double frac = static_cast<double>(good) / static_cast<double>(set.size());
    report(10, frac >= 0.70, "Grad-CAM in-box mass exceeds out-of-box mass on >= 70% of train set",
           std::to_string(good) + "/" + std::to_string(set.size()) + " images (" +
               std::to_string(100 * frac) + "%)");
  }
}

}  // namespace

int main(int argc, char** argv) {
  bool fast = true, training = false;
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (!std::strcmp(argv[i], "--training")) {
      fast = false;
      training = true;
    } else if (!std::strcmp(argv[i], "--all")) {
      fast = training = true;
    } else if (!std::strcmp(argv[i], "--only") && i + 1 < argc) {
      only = std::atoi(argv[++i]);
      fast = training = false;
    }
  }
  const uint64_t seed = 20240817;
  auto want = [&](int n) {
    if (only) return only == n;
    bool is_training = n == 8 || n == 10;
    return is_training ? training : fast;
  };

  try {
    if (want(1)) criterion1(seed);
    if (want(2)) criterion2(seed);
    if (want(3)) criterion3(seed);
    if (want(4)) criterion4(seed);
    if (want(5)) criterion5(seed);
    if (want(6)) criterion6(seed);
    if (want(7)) criterion7(seed);
    if (want(9)) criterion9(seed);
    if (want(11)) criterion11(seed);
    if (want(8) || want(10)) criteria_8_and_10(seed, want(8), want(10));
  } catch (const std::exception& e) {
    std::cerr << "acceptance run aborted: " << e.what() << "\n";
    return 99;
  }
  std::cout << (failures == 0 ? "ACCEPTANCE: all run criteria passed"
                              : "ACCEPTANCE: " + std::to_string(failures) + " criteria FAILED")
            << "\n";
  return failures;
}
