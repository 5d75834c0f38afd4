// echodet command-line interface: training, evaluation, inference, Grad-CAM
// visualization, synthetic dataset generation, FPS measurement and the
// invariant verification suite.

#include <CLI11.hpp>

#include <iostream>

#include "echodet/bench/fps.hpp"
#include "echodet/data/image_io.hpp"
#include "echodet/verify/harness.hpp"
#include "echodet/viz/gradcam.hpp"

using namespace echodet;

namespace {

struct LoadedModel {
  ModelConfig mc;
  std::unique_ptr<Detector<float>> det;
  std::array<double, 3> mean{0.5, 0.5, 0.5}, stddev{0.25, 0.25, 0.25};
  uint64_t seed = 0;
  std::string data_path;
};

LoadedModel load_model(const std::string& ckpt_path) {
  Checkpoint ck = Checkpoint::load(ckpt_path);
  LoadedModel lm;
  lm.mc = model_config_from_meta(ck.meta);
  lm.det = std::make_unique<Detector<float>>(lm.mc, 0);
  auto params = lm.det->params();
  ck.get_params(params);
  if (ck.meta.count("data.mean")) {
    double m = std::stod(ck.meta.at("data.mean"));
    lm.mean = {m, m, m};
  }
  if (ck.meta.count("data.std")) {
    double s = std::stod(ck.meta.at("data.std"));
    lm.stddev = {s, s, s};
  }
  if (ck.meta.count("seed")) lm.seed = std::stoull(ck.meta.at("seed"));
  if (ck.meta.count("data.path")) lm.data_path = ck.meta.at("data.path");
  return lm;
}

std::vector<TrainSample> load_split(const std::string& data_path, uint64_t seed,
                                    const std::string& split, int ih, int iw, bool stretch) {
  Dataset ds = load_dataset(data_path);
  auto idx = split_by_name(ds.samples.size(), seed, split);
  return load_split_samples(ds, idx, ih, iw, stretch);
}

int cmd_train(const std::string& config_path, int64_t warmup_override,
              const std::string& resume_path, const std::string& pretrained_backbone) {
  FlatConfig f = FlatConfig::parse_file(config_path);
  auto [tc, mc] = configs_from_flat(f);
  if (warmup_override >= 0) tc.warmup_steps = warmup_override;
  ECHODET_CHECK(!tc.data_path.empty(), "config needs data.path");

  std::cout << "loading dataset " << tc.data_path << "\n";
  auto train_set = load_split(tc.data_path, tc.seed, "train", mc.input_h, mc.input_w,
                              tc.stretch_resize);
  std::cout << "train split: " << train_set.size() << " samples at " << mc.input_h << "x"
            << mc.input_w << "\n";

  Trainer<float> trainer(tc, mc, std::move(train_set));
  if (!pretrained_backbone.empty()) {
    Checkpoint pb = Checkpoint::load(pretrained_backbone);
    auto params = trainer.detector().params();
    int loaded = pb.get_params(params, "", /*strict=*/false);
    std::cout << "loaded " << loaded << " pretrained tensors from " << pretrained_backbone << "\n";
  }
  if (!resume_path.empty()) {
    trainer.restore(Checkpoint::load(resume_path));
    std::cout << "resumed from " << resume_path << " at step " << trainer.step() << "\n";
  }
  trainer.run(-1, &std::cout);
  std::cout << "final checkpoint: " << tc.out_dir << "/ckpt_final.edc\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& split, std::string data,
             std::string out_json, const std::string& match_csv, const std::string& interp) {
  LoadedModel lm = load_model(ckpt);
  if (data.empty()) data = lm.data_path;
  ECHODET_CHECK(!data.empty(), "no dataset path: pass --data or train with data.path set");
  auto samples = load_split(data, lm.seed, split, lm.mc.input_h, lm.mc.input_w, false);
  std::cout << "evaluating " << samples.size() << " '" << split << "' samples\n";
  EvalResult res =
      evaluate_model(*lm.det, samples, lm.mean, lm.stddev, interp == "101", match_csv);
  if (out_json.empty()) out_json = "metrics_" + split + ".json";
  write_metrics_json(out_json, res);
  std::cout << metrics_to_json(res).dump(2) << "\nwritten to " << out_json << "\n";
  return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& image_path, const std::string& out_path) {
  LoadedModel lm = load_model(ckpt);
  GrayImage original = load_image_gray(image_path);
  auto [resized, rec] = resize_pad(original, lm.mc.input_h, lm.mc.input_w);
  auto input = to_model_input<float>(resized, lm.mean, lm.stddev);
  NoGradGuard ng;
  auto out = lm.det->forward(Var<float>(input));
  std::array<Var<float>, 5> scales;
  for (int i = 0; i < 5; ++i) scales[i] = lm.det->head().scale(i);
  auto dets = postprocess(out.head, scales, out.grids, 0, lm.mc.input_w, lm.mc.input_h);
  // back to original coordinates
  for (auto& d : dets) {
    d.box = rec.to_original(d.box);
    d.box.x1 = std::clamp(d.box.x1, 0.0, double(rec.orig_w));
    d.box.x2 = std::clamp(d.box.x2, 0.0, double(rec.orig_w));
    d.box.y1 = std::clamp(d.box.y1, 0.0, double(rec.orig_h));
    d.box.y2 = std::clamp(d.box.y2, 0.0, double(rec.orig_h));
  }
  save_detections_png(out_path, original, dets);
  for (const auto& d : dets)
    std::cout << label_name(d.label) << " " << d.score << " " << d.box.x1 << " " << d.box.y1
              << " " << d.box.x2 << " " << d.box.y2 << "\n";
  std::cout << dets.size() << " detections; overlay written to " << out_path << "\n";
  return 0;
}

int cmd_gradcam(const std::string& ckpt, const std::string& image_path,
                const std::string& cls_name, int level, const std::string& out_path) {
  int cls = label_from_name(cls_name);
  ECHODET_CHECK(cls != 0, "--class wants benign or malignant");
  LoadedModel lm = load_model(ckpt);
  GrayImage original = load_image_gray(image_path);
  auto [resized, rec] = resize_pad(original, lm.mc.input_h, lm.mc.input_w);
  auto input = to_model_input<float>(resized, lm.mean, lm.stddev);
  auto cam = gradcam(*lm.det, input, cls, level);
  save_cam_overlay_png(out_path, resized, cam.heatmap);
  double mass = 0, peak = 0;
  for (int64_t i = 0; i < cam.heatmap.numel(); ++i) {
    mass += cam.heatmap[i];
    peak = std::max(peak, double(cam.heatmap[i]));
  }
  std::cout << "class " << cls_name << " level P" << level << " cam peak " << peak << " mass "
            << mass << "; overlay written to " << out_path << "\n";
  return 0;
}

int cmd_synth(uint64_t seed, int n, const std::string& out_dir, int height, int width) {
  SynthConfig cfg;
  cfg.height = height;
  cfg.width = width;
  auto samples = synth_ultrasound(seed, n, cfg);
  write_synth_dataset(out_dir, samples);
  int64_t boxes = 0;
  for (auto& s : samples) boxes += static_cast<int64_t>(s.boxes.size());
  std::cout << "wrote " << samples.size() << " images (" << boxes << " lesions) to " << out_dir
            << "\n";
  return 0;
}

int cmd_bench_fps(const std::string& ckpt, int iters, int warmup, int height, int width) {
  LoadedModel lm = load_model(ckpt);
  int ih = height > 0 ? height : lm.mc.input_h;
  int iw = width > 0 ? width : lm.mc.input_w;
  Rng rng(1);
  Tensor<float> img = Tensor<float>::empty({1, 3, ih, iw});
  for (int64_t i = 0; i < img.numel(); ++i) img[i] = static_cast<float>(rng.uniform(-1, 1));
  std::array<Var<float>, 5> scales;
  for (int i = 0; i < 5; ++i) scales[i] = lm.det->head().scale(i);
  auto run_once = [&] {
    NoGradGuard ng;
    auto out = lm.det->forward(Var<float>(img));
    auto dets = postprocess(out.head, scales, out.grids, 0, iw, ih);
    (void)dets;
  };
  auto r = fps_benchmark(run_once, warmup, iters);
  nlohmann::json j{{"fps", r.fps},
                   {"median_latency_ms", r.median_latency_ms},
                   {"iters", r.iters},
                   {"warmup", r.warmup},
                   {"input", std::to_string(ih) + "x" + std::to_string(iw)},
                   {"hardware", r.hardware}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_verify(uint64_t seed, int trials, const std::string& out_path) {
  auto reports = run_suite(seed, trials);
  std::ofstream out;
  if (!out_path.empty()) out.open(out_path);
  bool all = true;
  for (const auto& r : reports) {
    std::string line = r.to_json().dump();
    std::cout << line << "\n";
    if (out.is_open()) out << line << "\n";
    all = all && r.pass;
  }
  std::cout << (all ? "ALL PROPERTIES PASS" : "PROPERTY FAILURES PRESENT") << " (seed " << seed
            << ")\n";
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-phase feedback lesion detector"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "train a model from a flat key=value config");
  std::string config_path, resume_path, pretrained;
  int64_t warmup_override = -1;
  train->add_option("--config", config_path, "config file")->required();
  train->add_option("--warmup-steps", warmup_override, "override train.warmup_steps");
  train->add_option("--resume", resume_path, "checkpoint to resume from");
  train->add_option("--pretrained-backbone", pretrained,
                    "flat checkpoint with backbone.* weights to start from");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  std::string e_ckpt, e_split = "val", e_data, e_out, e_match, e_interp = "allpoint";
  eval->add_option("--ckpt", e_ckpt)->required();
  eval->add_option("--split", e_split)->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--data", e_data, "annotation JSON (defaults to the one stored in the ckpt)");
  eval->add_option("--out", e_out, "metrics JSON path");
  eval->add_option("--match-csv", e_match, "per-image match dump CSV");
  eval->add_option("--interp", e_interp)->check(CLI::IsMember({"allpoint", "101"}));

  auto* infer = app.add_subcommand("infer", "run detection on one image");
  std::string i_ckpt, i_image, i_out = "detections.png";
  infer->add_option("--ckpt", i_ckpt)->required();
  infer->add_option("--image", i_image)->required();
  infer->add_option("--out", i_out);

  auto* gc = app.add_subcommand("gradcam", "class activation heatmap for one image");
  std::string g_ckpt, g_image, g_class = "malignant", g_out = "gradcam.png";
  int g_level = 3;
  gc->add_option("--ckpt", g_ckpt)->required();
  gc->add_option("--image", g_image)->required();
  gc->add_option("--class", g_class)->check(CLI::IsMember({"benign", "malignant"}));
  gc->add_option("--level", g_level)->check(CLI::Range(3, 7));
  gc->add_option("--out", g_out);

  auto* synth = app.add_subcommand("synth", "generate a synthetic ultrasound dataset");
  uint64_t s_seed = 0;
  int s_n = 50, s_h = 256, s_w = 320;
  std::string s_out = "synth_data";
  synth->add_option("--seed", s_seed)->required();
  synth->add_option("--n", s_n)->required();
  synth->add_option("--out", s_out)->required();
  synth->add_option("--height", s_h);
  synth->add_option("--width", s_w);

  auto* bench = app.add_subcommand("bench-fps", "median-latency FPS of a checkpointed model");
  std::string b_ckpt;
  int b_iters = 100, b_warmup = 10, b_h = 0, b_w = 0;
  bench->add_option("--ckpt", b_ckpt)->required();
  bench->add_option("--iters", b_iters);
  bench->add_option("--warmup", b_warmup);
  bench->add_option("--height", b_h, "override input height");
  bench->add_option("--width", b_w, "override input width");

  auto* verify = app.add_subcommand("verify", "run the invariant property suite");
  uint64_t v_seed = 0;
  int v_trials = 10;
  std::string v_out;
  verify->add_option("--seed", v_seed);
  verify->add_option("--trials", v_trials);
  verify->add_option("--out", v_out, "JSON-lines report path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(config_path, warmup_override, resume_path, pretrained);
    if (*eval) return cmd_eval(e_ckpt, e_split, e_data, e_out, e_match, e_interp);
    if (*infer) return cmd_infer(i_ckpt, i_image, i_out);
    if (*gc) return cmd_gradcam(g_ckpt, g_image, g_class, g_level, g_out);
    if (*synth) return cmd_synth(s_seed, s_n, s_out, s_h, s_w);
    if (*bench) return cmd_bench_fps(b_ckpt, b_iters, b_warmup, b_h, b_w);
    if (*verify) return cmd_verify(v_seed, v_trials, v_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
