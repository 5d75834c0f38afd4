#pragma once

#include <array>
#include <string>

#include "echodet/core/common.hpp"

namespace echodet {

// Architecture switches. The ablation rows (feedback on/off, sigma factors,
// head preprocessing) are all configuration, not code forks.
struct ModelConfig {
  int num_classes = 2;
  std::array<int, 4> stage_channels{96, 192, 384, 768};  // C2..C5
  std::array<int, 4> stage_depths{3, 3, 9, 3};
  int pyramid_channels = 256;
  int head_tower_depth = 4;
  bool head_preprocess_surround = true;  // head.preprocess={surround,identity}
  bool selection_sigma1 = true;
  bool selection_sigma2 = true;
  std::array<int, 2> selection_dilations{3, 6};
  double surround_tau = 3.0;
  bool force_zero_feedback = false;  // pyramid.force_zero_feedback test hook
  int input_h = 800, input_w = 1024;
  std::string preset = "full";

  static ModelConfig full() { return {}; }

  // desk-scale preset: channel widths / 4, smaller input, strides unchanged
  static ModelConfig tiny() {
    ModelConfig c;
    c.stage_channels = {24, 48, 96, 192};
    c.pyramid_channels = 64;
    c.input_h = 256;
    c.input_w = 320;
    c.preset = "tiny";
    return c;
  }

  static ModelConfig by_preset(const std::string& name) {
    if (name == "full") return full();
    if (name == "tiny") return tiny();
    ECHODET_CHECK(false, "unknown model preset '" << name << "'");
    return {};
  }

  void validate() const {
    ECHODET_CHECK(pyramid_channels % 4 == 0,
                  "pyramid channel width " << pyramid_channels << " must be divisible by 4");
    ECHODET_CHECK(num_classes >= 1, "need at least one class");
    ECHODET_CHECK(head_tower_depth >= 1, "tower depth must be positive");
    ECHODET_CHECK(surround_tau > 0, "surround threshold must be positive");
  }
};

inline constexpr std::array<int, 5> kPyramidStrides{8, 16, 32, 64, 128};

// largest group count <= 32 that divides the channel width
inline int norm_groups(int channels) {
  for (int g : {32, 16, 8, 4, 2})
    if (channels % g == 0) return g;
  return 1;
}

}  // namespace echodet
