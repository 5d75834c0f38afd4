#pragma once

#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

#include "echodet/core/rng.hpp"
#include "echodet/det/box.hpp"

namespace echodet {

inline constexpr int kLabelBenign = 1;
inline constexpr int kLabelMalignant = 2;

inline int label_from_name(const std::string& s) {
  if (s == "benign") return kLabelBenign;
  if (s == "malignant") return kLabelMalignant;
  return 0;
}

inline const char* label_name(int label) {
  switch (label) {
    case kLabelBenign: return "benign";
    case kLabelMalignant: return "malignant";
    default: return "background";
  }
}

struct Sample {
  std::string id;
  std::string image_path;  // resolved against the annotation file's directory
  int width = 0, height = 0;
  std::vector<GtBox> boxes;
};

struct Dataset {
  std::vector<Sample> samples;
  std::string root;
};

// Annotation format (single JSON file):
//   { "images":      [{"id", "file", "width", "height"}, ...],
//     "annotations": [{"image_id", "bbox": [x1,y1,x2,y2], "label"}, ...] }
// Boxes are clipped to the image; anything degenerate after clipping, an
// unknown label, or a missing image file is collected into one itemized
// error report.
inline Dataset load_dataset(const std::string& path) {
  namespace fs = std::filesystem;
  std::ifstream f(path);
  ECHODET_CHECK(f.good(), "cannot open annotation file " << path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    ECHODET_CHECK(false, "malformed JSON in " << path << ": " << e.what());
  }

  Dataset ds;
  ds.root = fs::path(path).parent_path().string();
  std::vector<std::string> errors;
  std::map<std::string, size_t> by_id;

  for (const auto& im : j.value("images", nlohmann::json::array())) {
    Sample s;
    try {
      s.id = im.at("id").is_string() ? im.at("id").get<std::string>()
                                     : std::to_string(im.at("id").get<int64_t>());
      s.image_path = (fs::path(ds.root) / im.at("file").get<std::string>()).string();
      s.width = im.at("width").get<int>();
      s.height = im.at("height").get<int>();
    } catch (const std::exception& e) {
      errors.push_back(std::string("images entry: ") + e.what());
      continue;
    }
    if (!fs::exists(s.image_path))
      errors.push_back("image file missing: " + s.image_path + " (id " + s.id + ")");
    if (s.width <= 0 || s.height <= 0)
      errors.push_back("non-positive image size for id " + s.id);
    by_id[s.id] = ds.samples.size();
    ds.samples.push_back(std::move(s));
  }

  size_t ann_index = 0;
  for (const auto& an : j.value("annotations", nlohmann::json::array())) {
    ++ann_index;
    std::string where = "annotation #" + std::to_string(ann_index);
    try {
      std::string id = an.at("image_id").is_string()
                           ? an.at("image_id").get<std::string>()
                           : std::to_string(an.at("image_id").get<int64_t>());
      auto it = by_id.find(id);
      if (it == by_id.end()) {
        errors.push_back(where + ": unknown image_id " + id);
        continue;
      }
      Sample& s = ds.samples[it->second];
      auto bb = an.at("bbox");
      if (!bb.is_array() || bb.size() != 4) {
        errors.push_back(where + ": bbox must be [x1,y1,x2,y2]");
        continue;
      }
      BoxF box{bb[0].get<double>(), bb[1].get<double>(), bb[2].get<double>(),
               bb[3].get<double>()};
      if (box.x1 >= box.x2 || box.y1 >= box.y2) {
        errors.push_back(where + " (image " + id + "): inverted or empty box (" +
                         std::to_string(box.x1) + "," + std::to_string(box.y1) + "," +
                         std::to_string(box.x2) + "," + std::to_string(box.y2) + ")");
        continue;
      }
      BoxF clipped{std::clamp(box.x1, 0.0, double(s.width)),
                   std::clamp(box.y1, 0.0, double(s.height)),
                   std::clamp(box.x2, 0.0, double(s.width)),
                   std::clamp(box.y2, 0.0, double(s.height))};
      if (clipped.area() <= 0) {
        errors.push_back(where + " (image " + id + "): box lies outside the image");
        continue;
      }
      int label = label_from_name(an.at("label").get<std::string>());
      if (label == 0) {
        errors.push_back(where + " (image " + id + "): unknown label '" +
                         an.at("label").get<std::string>() + "'");
        continue;
      }
      s.boxes.push_back({clipped, label});
    } catch (const std::exception& e) {
      errors.push_back(where + ": " + e.what());
    }
  }

  if (!errors.empty()) {
    std::string all = "dataset validation failed (" + std::to_string(errors.size()) + " issues):";
    for (const auto& e : errors) all += "\n  - " + e;
    throw std::runtime_error(all);
  }
  return ds;
}

// deterministic 60/20/20 split: sizes floor(0.6n), floor(0.2n), remainder
inline std::array<std::vector<size_t>, 3> split_indices(size_t n, uint64_t seed) {
  ECHODET_CHECK(n >= 5, "need at least 5 samples to split, got " << n);
  std::vector<size_t> perm(n);
  for (size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(hash_combine(seed, 0x5B717));
  for (size_t i = n - 1; i > 0; --i) {
    size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i)));
    std::swap(perm[i], perm[j]);
  }
  size_t n_train = n * 6 / 10;  // floor(0.6 n)
  size_t n_val = n * 2 / 10;    // floor(0.2 n)
  std::array<std::vector<size_t>, 3> out;
  out[0].assign(perm.begin(), perm.begin() + n_train);
  out[1].assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
  out[2].assign(perm.begin() + n_train + n_val, perm.end());
  return out;
}

inline std::vector<size_t> split_by_name(size_t n, uint64_t seed, const std::string& name) {
  auto parts = split_indices(n, seed);
  if (name == "train") return parts[0];
  if (name == "val") return parts[1];
  if (name == "test") return parts[2];
  ECHODET_CHECK(false, "unknown split '" << name << "' (want train/val/test)");
  return {};
}

}  // namespace echodet
