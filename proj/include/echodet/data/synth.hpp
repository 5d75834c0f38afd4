#pragma once

#include "echodet/data/dataset.hpp"
#include "echodet/data/transforms.hpp"

namespace echodet {

// Synthetic ultrasound scenes: speckled multiplicative noise over a smooth
// depth-attenuated background, with 1..3 elliptical lesions per image.
// "benign" lesions are bright with a smooth rim; "malignant" lesions are
// dark with an irregular, angularly modulated rim. Ground truth is the tight
// bounding box of the rendered boundary. Fully deterministic per seed, and
// per image index, so any prefix of a dataset is stable.

struct SynthConfig {
  int height = 256, width = 320;
  int min_lesions = 1, max_lesions = 3;
};

struct SynthSample {
  GrayImage image;  // [h, w] in [0, 1]
  std::vector<GtBox> boxes;
  std::string id;
};

namespace synth_detail {

struct Lesion {
  double cx, cy, a, b, theta;
  int label;
  std::array<double, 4> rim_amp{};    // harmonics 2..5
  std::array<double, 4> rim_phase{};
  double edge;  // soft edge width in normalized radius units

  double rim(double phi) const {
    double r = 1.0;
    for (int k = 0; k < 4; ++k) r += rim_amp[static_cast<size_t>(k)] * std::sin((k + 2) * phi + rim_phase[static_cast<size_t>(k)]);
    return r;
  }

  // normalized radius of an image point (1.0 = boundary)
  double norm_radius(double x, double y) const {
    double dx = x - cx, dy = y - cy;
    double ct = std::cos(theta), st = std::sin(theta);
    double u = (dx * ct + dy * st) / a;
    double v = (-dx * st + dy * ct) / b;
    double r = std::sqrt(u * u + v * v);
    if (r < 1e-12) return 0.0;
    double phi = std::atan2(v, u);
    return r / rim(phi);
  }

  BoxF bbox() const {
    double x1 = 1e30, y1 = 1e30, x2 = -1e30, y2 = -1e30;
    double ct = std::cos(theta), st = std::sin(theta);
    for (int i = 0; i < 720; ++i) {
      double phi = i * (2.0 * M_PI / 720.0);
      double r = rim(phi);
      double u = a * r * std::cos(phi), v = b * r * std::sin(phi);
      double x = cx + u * ct - v * st;
      double y = cy + u * st + v * ct;
      x1 = std::min(x1, x);
      y1 = std::min(y1, y);
      x2 = std::max(x2, x);
      y2 = std::max(y2, y);
    }
    return {x1, y1, x2, y2};
  }
};

inline double smoothstep(double e0, double e1, double x) {
  double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3 - 2 * t);
}

}  // namespace synth_detail

inline SynthSample synth_one(uint64_t seed, int index, const SynthConfig& cfg = {}) {
  using namespace synth_detail;
  const int h = cfg.height, w = cfg.width;
  Rng rng = Rng(hash_combine(seed, 0x5E37)).fork(static_cast<uint64_t>(index));

  // smooth background: bilinear-upsampled coarse grid plus depth attenuation
  const int gh = 5, gw = 6;
  GrayImage coarse = GrayImage::empty({gh, gw});
  for (int64_t i = 0; i < coarse.numel(); ++i)
    coarse[i] = static_cast<float>(rng.uniform(0.28, 0.55));
  GrayImage base = transform_detail::resize_bilinear(coarse, h, w);
  for (int y = 0; y < h; ++y) {
    double att = 1.05 - 0.35 * (static_cast<double>(y) / h);
    for (int x = 0; x < w; ++x) base[y * static_cast<int64_t>(w) + x] *= static_cast<float>(att);
  }

  // place lesions with overlap rejection
  std::vector<Lesion> lesions;
  std::vector<BoxF> boxes;
  int want = static_cast<int>(rng.uniform_int(cfg.min_lesions, cfg.max_lesions));
  double unit = std::min(h, w);
  for (int li = 0; li < want; ++li) {
    for (int attempt = 0; attempt < 40; ++attempt) {
      Lesion L;
      L.a = rng.uniform(0.09, 0.17) * unit;
      L.b = rng.uniform(0.09, 0.17) * unit;
      L.theta = rng.uniform(0, M_PI);
      double margin = 1.25 * std::max(L.a, L.b);
      L.cx = rng.uniform(margin, w - margin);
      L.cy = rng.uniform(margin, h - margin);
      L.label = rng.bernoulli(0.5) ? kLabelBenign : kLabelMalignant;
      if (L.label == kLabelMalignant) {
        for (int k = 0; k < 4; ++k) {
          L.rim_amp[static_cast<size_t>(k)] = rng.uniform(0.02, 0.07);
          L.rim_phase[static_cast<size_t>(k)] = rng.uniform(0, 2 * M_PI);
        }
        L.edge = 0.06;
      } else {
        L.edge = 0.14;
      }
      BoxF bb = L.bbox();
      bool ok = bb.x1 >= 1 && bb.y1 >= 1 && bb.x2 <= w - 1 && bb.y2 <= h - 1;
      for (const auto& other : boxes)
        if (iou(bb, other) > 0.10) ok = false;
      if (!ok) continue;
      lesions.push_back(L);
      boxes.push_back(bb);
      break;
    }
  }

  // render lesions: benign brightens with a highlighted rim, malignant darkens
  for (const auto& L : lesions) {
    BoxF bb = L.bbox();
    int x0 = std::max(0, static_cast<int>(std::floor(bb.x1 - 2)));
    int x1 = std::min(w - 1, static_cast<int>(std::ceil(bb.x2 + 2)));
    int y0 = std::max(0, static_cast<int>(std::floor(bb.y1 - 2)));
    int y1 = std::min(h - 1, static_cast<int>(std::ceil(bb.y2 + 2)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        double r = L.norm_radius(x + 0.5, y + 0.5);
        double inside = 1.0 - smoothstep(1.0 - L.edge, 1.0, r);
        if (inside <= 0) continue;
        float& px = base[y * static_cast<int64_t>(w) + x];
        if (L.label == kLabelBenign) {
          px += static_cast<float>(0.30 * inside);
          // bright rim band
          if (r > 0.78 && r < 1.0) px += static_cast<float>(0.10 * inside);
        } else {
          px -= static_cast<float>(0.26 * inside);
        }
      }
  }

  // multiplicative speckle (exponential-intensity), lightly smoothed
  GrayImage speck = GrayImage::empty({h, w});
  for (int64_t i = 0; i < speck.numel(); ++i) {
    double g1 = rng.normal(), g2 = rng.normal();
    speck[i] = static_cast<float>(0.5 * (g1 * g1 + g2 * g2));
  }
  GrayImage sm = GrayImage::empty({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0, cnt = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          int xx = x + dx;
          if (xx < 0 || xx >= w) continue;
          acc += speck[yy * static_cast<int64_t>(w) + xx];
          ++cnt;
        }
      }
      sm[y * static_cast<int64_t>(w) + x] = static_cast<float>(acc / cnt);
    }

  SynthSample out;
  out.image = GrayImage::empty({h, w});
  for (int64_t i = 0; i < out.image.numel(); ++i) {
    double v = base[i] * (0.55 + 0.65 * sm[i]);
    out.image[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  for (size_t i = 0; i < lesions.size(); ++i) out.boxes.push_back({boxes[i], lesions[i].label});
  char buf[32];
  std::snprintf(buf, sizeof(buf), "synth_%06d", index);
  out.id = buf;
  return out;
}

inline std::vector<SynthSample> synth_ultrasound(uint64_t seed, int n, SynthConfig cfg = {}) {
  ECHODET_CHECK(n >= 1, "need n >= 1");
  std::vector<SynthSample> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(synth_one(seed, i, cfg));
  return out;
}

}  // namespace echodet
