#pragma once

#include <filesystem>

#include "echodet/data/transforms.hpp"
#include "echodet/det/eval.hpp"
#include "echodet/det/loss.hpp"
#include "echodet/train/checkpoint.hpp"
#include "echodet/train/schedule.hpp"
#include "echodet/train/sgd.hpp"

namespace echodet {

// one training/eval sample already at model input size, boxes in model pixels
struct TrainSample {
  GrayImage image;
  std::vector<GtBox> boxes;
  std::string id;
  TransformRecord transform;  // identity for native-size samples
};

inline std::vector<LevelGrid> make_level_grids(int h, int w) {
  int64_t ch = h, cw = w;
  for (int d = 0; d < 3; ++d) {
    ch = (ch + 1) / 2;
    cw = (cw + 1) / 2;
  }
  std::vector<LevelGrid> out;
  for (int i = 0; i < 5; ++i) {
    out.push_back({i + 3, kPyramidStrides[static_cast<size_t>(i)], ch, cw});
    ch = (ch + 1) / 2;
    cw = (cw + 1) / 2;
  }
  return out;
}

inline std::string dbl_str(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline void model_config_to_meta(const ModelConfig& mc, std::map<std::string, std::string>& meta) {
  meta["model.preset"] = mc.preset;
  meta["model.classes"] = std::to_string(mc.num_classes);
  meta["model.input_h"] = std::to_string(mc.input_h);
  meta["model.input_w"] = std::to_string(mc.input_w);
  meta["selection.enable_sigma1"] = mc.selection_sigma1 ? "true" : "false";
  meta["selection.enable_sigma2"] = mc.selection_sigma2 ? "true" : "false";
  meta["selection.dilations"] =
      std::to_string(mc.selection_dilations[0]) + "," + std::to_string(mc.selection_dilations[1]);
  meta["head.tower_depth"] = std::to_string(mc.head_tower_depth);
  meta["head.preprocess"] = mc.head_preprocess_surround ? "surround" : "identity";
  meta["head.surround_tau"] = dbl_str(mc.surround_tau);
  meta["pyramid.force_zero_feedback"] = mc.force_zero_feedback ? "true" : "false";
}

inline ModelConfig model_config_from_meta(const std::map<std::string, std::string>& meta) {
  FlatConfig f;
  for (const auto& [k, v] : meta) f.set(k, v);
  ModelConfig mc = ModelConfig::by_preset(f.str("model.preset", "full"));
  mc.num_classes = static_cast<int>(f.integer("model.classes", mc.num_classes));
  mc.input_h = static_cast<int>(f.integer("model.input_h", mc.input_h));
  mc.input_w = static_cast<int>(f.integer("model.input_w", mc.input_w));
  mc.selection_sigma1 = f.flag("selection.enable_sigma1", true);
  mc.selection_sigma2 = f.flag("selection.enable_sigma2", true);
  auto dil = f.int_list("selection.dilations", {3, 6});
  mc.selection_dilations = {static_cast<int>(dil[0]), static_cast<int>(dil[1])};
  mc.head_tower_depth = static_cast<int>(f.integer("head.tower_depth", 4));
  mc.head_preprocess_surround = f.str("head.preprocess", "surround") == "surround";
  mc.surround_tau = f.num("head.surround_tau", 3.0);
  mc.force_zero_feedback = f.flag("pyramid.force_zero_feedback", false);
  return mc;
}

// normalization constants: configured values, or the train split's gray
// statistics when left unset
inline std::pair<std::array<double, 3>, std::array<double, 3>> data_stats(
    const std::vector<TrainSample>& samples, const TrainConfig& tc) {
  if (tc.mean && tc.stddev) return {*tc.mean, *tc.stddev};
  double sum = 0, sq = 0;
  int64_t n = 0;
  for (const auto& s : samples) {
    for (int64_t i = 0; i < s.image.numel(); ++i) {
      sum += s.image[i];
      sq += static_cast<double>(s.image[i]) * s.image[i];
    }
    n += s.image.numel();
  }
  double mean = n ? sum / static_cast<double>(n) : 0.5;
  double var = n ? std::max(1e-6, sq / static_cast<double>(n) - mean * mean) : 0.0625;
  double sd = std::sqrt(var);
  return {{mean, mean, mean}, {sd, sd, sd}};
}

template <class T = float>
class Trainer {
 public:
  Trainer(TrainConfig tc, ModelConfig mc, std::vector<TrainSample> train_set)
      : tc_(std::move(tc)), det_(mc, tc_.seed), train_(std::move(train_set)) {
    tc_.validate();
    ECHODET_CHECK(!train_.empty(), "empty training set");
    for (const auto& s : train_)
      ECHODET_CHECK(s.image.size(0) == mc.input_h && s.image.size(1) == mc.input_w,
                    "sample " << s.id << " is " << s.image.size(0) << "x" << s.image.size(1)
                              << ", model wants " << mc.input_h << "x" << mc.input_w);
    grids_ = make_level_grids(mc.input_h, mc.input_w);
    std::tie(mean_, std_) = data_stats(train_, tc_);
    opt_ = SgdOptimizer<T>(det_.params(), tc_.momentum, tc_.weight_decay);
    std::filesystem::create_directories(tc_.out_dir);
  }

  Detector<T>& detector() { return det_; }
  const std::vector<LevelGrid>& grids() const { return grids_; }
  std::array<double, 3> mean() const { return mean_; }
  std::array<double, 3> stddev() const { return std_; }
  int64_t step() const { return step_; }

  Checkpoint make_checkpoint() {
    Checkpoint ck;
    auto params = det_.params();
    ck.put_params(params);
    for (size_t i = 0; i < params.items.size(); ++i)
      ck.tensors["opt." + params.items[i].first] = to_float(opt_.velocity()[i]);
    ck.meta["step"] = std::to_string(step_);
    ck.meta["seed"] = std::to_string(tc_.seed);
    ck.meta["data.path"] = tc_.data_path;
    ck.meta["data.mean"] = dbl_str(mean_[0]);
    ck.meta["data.std"] = dbl_str(std_[0]);
    model_config_to_meta(det_.config(), ck.meta);
    return ck;
  }

  void restore(const Checkpoint& ck) {
    auto params = det_.params();
    ck.get_params(params);
    for (size_t i = 0; i < params.items.size(); ++i) {
      auto it = ck.tensors.find("opt." + params.items[i].first);
      if (it != ck.tensors.end()) opt_.velocity()[i] = from_float(it->second);
    }
    auto s = ck.meta.find("step");
    if (s != ck.meta.end()) step_ = std::stoll(s->second);
    auto m = ck.meta.find("data.mean");
    if (m != ck.meta.end()) mean_ = {std::stod(m->second), std::stod(m->second), std::stod(m->second)};
    auto sd = ck.meta.find("data.std");
    if (sd != ck.meta.end()) std_ = {std::stod(sd->second), std::stod(sd->second), std::stod(sd->second)};
  }

  // one optimization step; returns the loss record
  LossResult<T> train_step() {
    ECHODET_CHECK(step_ < tc_.total_steps, "training already finished");
    const int bsz = tc_.batch;
    const int64_t ih = det_.config().input_h, iw = det_.config().input_w;
    Tensor<T> batch = Tensor<T>::empty({bsz, 3, ih, iw});
    std::vector<AssignedTargets> targets;
    Rng srng = Rng(tc_.seed).fork(0xBA7C4).fork(static_cast<uint64_t>(step_));
    for (int bi = 0; bi < bsz; ++bi) {
      size_t idx = static_cast<size_t>(srng.uniform_int(0, static_cast<int64_t>(train_.size()) - 1));
      GrayImage img = train_[idx].image;
      std::vector<GtBox> boxes = train_[idx].boxes;
      if (srng.bernoulli(0.5)) {  // random horizontal flip
        img = img.clone();
        hflip(img, boxes);
      }
      Tensor<T> one = to_model_input<T>(img, mean_, std_);
      std::memcpy(batch.data() + bi * 3 * ih * iw, one.data(),
                  sizeof(T) * static_cast<size_t>(3 * ih * iw));
      targets.push_back(assign_targets(grids_, boxes));
    }

    auto out = det_.forward(Var<T>(batch));
    std::array<Var<T>, 5> scales;
    for (int i = 0; i < 5; ++i) scales[i] = det_.head().scale(i);
    auto loss = detection_loss(out.head, scales, grids_, targets);
    if (!std::isfinite(loss.value)) {
      make_checkpoint().save(tc_.out_dir + "/ckpt_abort.edc");
      loss.check_finite();  // throws with the component breakdown
    }
    opt_.zero_grad();
    backward(loss.total);
    opt_.step(lr_at(step_, tc_));
    ++step_;
    return loss;
  }

  // full loop with CSV logging and periodic checkpoints
  void run(int64_t until_step = -1, std::ostream* progress = nullptr) {
    if (until_step < 0) until_step = tc_.total_steps;
    std::ofstream csv(tc_.out_dir + "/loss_log.csv", step_ == 0 ? std::ios::trunc : std::ios::app);
    if (step_ == 0) csv << "step,total,cls,reg,ctn,n_pos\n";
    while (step_ < until_step) {
      int64_t s = step_;
      auto loss = train_step();
      csv << s << "," << loss.value << "," << loss.cls << "," << loss.reg << "," << loss.ctn
          << "," << loss.n_pos << "\n";
      if (progress && (s % 100 == 0 || s + 1 == until_step))
        (*progress) << "step " << s << " lr " << lr_at(s, tc_) << " loss " << loss.value
                    << " (cls " << loss.cls << " reg " << loss.reg << " ctn " << loss.ctn
                    << " npos " << loss.n_pos << ")\n"
                    << std::flush;
      if (tc_.ckpt_every > 0 && step_ % tc_.ckpt_every == 0 && step_ < until_step)
        make_checkpoint().save(tc_.out_dir + "/ckpt_" + std::to_string(step_) + ".edc");
    }
    csv.flush();
    make_checkpoint().save(tc_.out_dir + "/ckpt_final.edc");
  }

 private:
  static Tensor<float> to_float(const Tensor<T>& t) {
    if constexpr (std::is_same_v<T, float>) return t.clone();
    else return t.template cast<float>();
  }
  static Tensor<T> from_float(const Tensor<float>& t) {
    if constexpr (std::is_same_v<T, float>) return t.clone();
    else return t.template cast<T>();
  }

  TrainConfig tc_;
  Detector<T> det_;
  std::vector<TrainSample> train_;
  std::vector<LevelGrid> grids_;
  SgdOptimizer<T> opt_;
  std::array<double, 3> mean_{0.5, 0.5, 0.5}, std_{0.25, 0.25, 0.25};
  int64_t step_ = 0;
};

// run the detector over samples and score with the reimplemented evaluator;
// all geometry in model space (IoU is invariant to the uniform rescale)
template <class T>
EvalResult evaluate_model(const Detector<T>& det, const std::vector<TrainSample>& samples,
                          const std::array<double, 3>& mean, const std::array<double, 3>& stddev,
                          bool use_101 = false, const std::string& match_csv = "") {
  NoGradGuard ng;
  std::vector<Scene> scenes;
  std::array<Var<T>, 5> scales;
  for (int i = 0; i < 5; ++i) scales[i] = const_cast<Detector<T>&>(det).head().scale(i);
  const double iw = det.config().input_w, ih = det.config().input_h;
  for (const auto& s : samples) {
    auto input = to_model_input<T>(s.image, mean, stddev);
    auto out = det.forward(Var<T>(input));
    Scene sc;
    sc.dets = postprocess(out.head, scales, out.grids, 0, iw, ih);
    sc.gts = s.boxes;
    scenes.push_back(std::move(sc));
  }
  if (!match_csv.empty()) write_match_csv(match_csv, scenes, det.config().num_classes);
  return coco_ap(scenes, det.config().num_classes, use_101);
}

}  // namespace echodet
