#pragma once

#include <optional>

#include "echodet/model/config.hpp"
#include "echodet/util/config.hpp"

namespace echodet {

struct TrainConfig {
  double lr0 = 0.01, momentum = 0.9, weight_decay = 1e-4;
  int batch = 4;
  int64_t total_steps = 50000;
  std::array<int64_t, 2> decay_steps{25000, 35000};
  double decay_factor = 0.1;
  uint64_t seed = 0;
  int64_t warmup_steps = 0;
  int64_t ckpt_every = 5000;
  std::string out_dir = "out";
  std::string data_path;
  bool stretch_resize = false;
  bool eval_101 = false;
  std::optional<std::array<double, 3>> mean, stddev;

  void validate() const {
    ECHODET_CHECK(decay_steps[0] < decay_steps[1] && decay_steps[1] < total_steps,
                  "decay steps must be strictly increasing and below total_steps");
    ECHODET_CHECK(batch >= 1 && total_steps >= 1, "batch and total_steps must be positive");
    ECHODET_CHECK(lr0 > 0 && decay_factor > 0, "learning rates must be positive");
  }
};

// piecewise-constant schedule with optional linear warmup; pure in (step, cfg)
inline double lr_at(int64_t step, const TrainConfig& cfg) {
  ECHODET_CHECK(step >= 0 && step < cfg.total_steps,
                "step " << step << " outside [0, " << cfg.total_steps << ")");
  double lr = cfg.lr0;
  if (step >= cfg.decay_steps[0]) lr *= cfg.decay_factor;
  if (step >= cfg.decay_steps[1]) lr *= cfg.decay_factor;
  if (cfg.warmup_steps > 0 && step < cfg.warmup_steps)
    lr *= static_cast<double>(step + 1) / static_cast<double>(cfg.warmup_steps);
  return lr;
}

// maps the flat config file onto (TrainConfig, ModelConfig)
inline std::pair<TrainConfig, ModelConfig> configs_from_flat(const FlatConfig& f) {
  TrainConfig tc;
  tc.lr0 = f.num("train.lr0", tc.lr0);
  tc.momentum = f.num("train.momentum", tc.momentum);
  tc.weight_decay = f.num("train.weight_decay", tc.weight_decay);
  tc.batch = static_cast<int>(f.integer("train.batch", tc.batch));
  tc.total_steps = f.integer("train.total_steps", tc.total_steps);
  auto ds = f.int_list("train.decay_steps", {tc.decay_steps[0], tc.decay_steps[1]});
  ECHODET_CHECK(ds.size() == 2, "train.decay_steps wants two entries");
  tc.decay_steps = {ds[0], ds[1]};
  tc.decay_factor = f.num("train.decay_factor", tc.decay_factor);
  tc.seed = static_cast<uint64_t>(f.integer("train.seed", 0));
  tc.warmup_steps = f.integer("train.warmup_steps", 0);
  tc.ckpt_every = f.integer("train.ckpt_every", tc.ckpt_every);
  tc.out_dir = f.str("train.out_dir", tc.out_dir);
  tc.data_path = f.str("data.path", "");
  tc.stretch_resize = f.flag("data.stretch_resize", false);
  tc.eval_101 = f.str("eval.interpolation", "allpoint") == "101";
  if (f.has("data.mean")) {
    double m = f.num("data.mean", 0.5);
    tc.mean = {m, m, m};
  }
  if (f.has("data.std")) {
    double s = f.num("data.std", 0.25);
    tc.stddev = {s, s, s};
  }

  ModelConfig mc = ModelConfig::by_preset(f.str("model.preset", "full"));
  mc.num_classes = static_cast<int>(f.integer("model.classes", mc.num_classes));
  mc.selection_sigma1 = f.flag("selection.enable_sigma1", mc.selection_sigma1);
  mc.selection_sigma2 = f.flag("selection.enable_sigma2", mc.selection_sigma2);
  auto dil = f.int_list("selection.dilations", {3, 6});
  ECHODET_CHECK(dil.size() == 2, "selection.dilations wants two entries");
  mc.selection_dilations = {static_cast<int>(dil[0]), static_cast<int>(dil[1])};
  mc.head_tower_depth = static_cast<int>(f.integer("head.tower_depth", mc.head_tower_depth));
  std::string prep = f.str("head.preprocess", "surround");
  ECHODET_CHECK(prep == "surround" || prep == "identity",
                "head.preprocess must be surround or identity");
  mc.head_preprocess_surround = prep == "surround";
  mc.surround_tau = f.num("head.surround_tau", mc.surround_tau);
  mc.force_zero_feedback = f.flag("pyramid.force_zero_feedback", false);
  mc.input_h = static_cast<int>(f.integer("model.input_h", mc.input_h));
  mc.input_w = static_cast<int>(f.integer("model.input_w", mc.input_w));
  tc.validate();
  mc.validate();
  return {tc, mc};
}

}  // namespace echodet
