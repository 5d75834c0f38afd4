#pragma once

#include "echodet/model/head.hpp"
#include "echodet/model/pyramid.hpp"

namespace echodet {

struct LevelGrid {
  int level;    // 3..7
  int stride;   // 8..128
  int64_t h, w;
};

template <class T>
struct DetectorOut {
  TwoPhaseOut<T> pyramid;
  std::array<HeadLevelOut<T>, 5> head;
  std::vector<LevelGrid> grids;
};

// The full two-phase detector: backbone -> phase-1 pyramid -> feedback
// selection -> phase-2 backbone/pyramid -> convex fusion -> adaptive head.
template <class T>
class Detector {
 public:
  Detector() = default;

  explicit Detector(const ModelConfig& cfg, uint64_t seed = 0) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(hash_combine(seed, 0xEC0DE7));
    backbone_ = Backbone<T>(cfg_, rng);
    pyramid_ = FeedbackPyramid<T>(cfg_, rng);
    head_ = AdaptiveHead<T>(cfg_, rng);
  }

  const ModelConfig& config() const { return cfg_; }
  ModelConfig& config() { return cfg_; }
  Backbone<T>& backbone() { return backbone_; }
  const Backbone<T>& backbone() const { return backbone_; }
  FeedbackPyramid<T>& pyramid() { return pyramid_; }
  const FeedbackPyramid<T>& pyramid() const { return pyramid_; }
  AdaptiveHead<T>& head() { return head_; }
  const AdaptiveHead<T>& head() const { return head_; }

  DetectorOut<T> forward(const Var<T>& image) const {
    DetectorOut<T> out;
    out.pyramid = pyramid_.run_two_phase(backbone_, image, cfg_.force_zero_feedback);
    out.head = head_.forward(out.pyramid.fused.p);
    for (int i = 0; i < 5; ++i) {
      const auto& f = out.pyramid.fused.p[i].value();
      out.grids.push_back({i + 3, kPyramidStrides[static_cast<size_t>(i)], f.size(2), f.size(3)});
    }
    return out;
  }

  NamedParams<T> params() {
    NamedParams<T> out;
    backbone_.collect("backbone", out);
    pyramid_.collect("pyramid", out);
    head_.collect("head", out);
    return out;
  }

 private:
  ModelConfig cfg_;
  Backbone<T> backbone_;
  FeedbackPyramid<T> pyramid_;
  AdaptiveHead<T> head_;
};

}  // namespace echodet
