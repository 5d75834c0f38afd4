#pragma once

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <filesystem>
#include <iomanip>

#include "echodet/data/dataset.hpp"
#include "echodet/data/synth.hpp"
#include "echodet/det/box.hpp"
#include "echodet/train/trainer.hpp"

namespace echodet {

// 8-bit PNG/JPEG, grayscale or color (color is reduced to luminance)
inline GrayImage load_image_gray(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
  ECHODET_CHECK(!m.empty(), "cannot read image " << path);
  GrayImage img = GrayImage::empty({m.rows, m.cols});
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x)
      img[y * static_cast<int64_t>(m.cols) + x] = static_cast<float>(m.at<uint8_t>(y, x)) / 255.f;
  return img;
}

inline cv::Mat gray_to_mat(const GrayImage& img) {
  cv::Mat m(static_cast<int>(img.size(0)), static_cast<int>(img.size(1)), CV_8UC1);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x)
      m.at<uint8_t>(y, x) = static_cast<uint8_t>(
          std::clamp(img[y * img.size(1) + x] * 255.f + 0.5f, 0.f, 255.f));
  return m;
}

inline void save_gray_png(const std::string& path, const GrayImage& img) {
  ECHODET_CHECK(cv::imwrite(path, gray_to_mat(img)), "cannot write " << path);
}

// class-colored boxes with scores on top of the (grayscale) image
inline void save_detections_png(const std::string& path, const GrayImage& img,
                                const std::vector<Detection>& dets) {
  cv::Mat bgr;
  cv::cvtColor(gray_to_mat(img), bgr, cv::COLOR_GRAY2BGR);
  for (const auto& d : dets) {
    cv::Scalar color = d.label == kLabelBenign ? cv::Scalar(80, 220, 80) : cv::Scalar(60, 60, 230);
    cv::rectangle(bgr,
                  cv::Rect(cv::Point(static_cast<int>(d.box.x1), static_cast<int>(d.box.y1)),
                           cv::Point(static_cast<int>(d.box.x2), static_cast<int>(d.box.y2))),
                  color, 2);
    std::ostringstream label;
    label << label_name(d.label) << " " << std::fixed << std::setprecision(2) << d.score;
    cv::putText(bgr, label.str(),
                cv::Point(static_cast<int>(d.box.x1), std::max(12, static_cast<int>(d.box.y1) - 4)),
                cv::FONT_HERSHEY_SIMPLEX, 0.45, color, 1, cv::LINE_AA);
  }
  ECHODET_CHECK(cv::imwrite(path, bgr), "cannot write " << path);
}

inline void save_cam_overlay_png(const std::string& path, const GrayImage& img,
                                 const Tensor<float>& heat) {
  ECHODET_CHECK(heat.size(0) == img.size(0) && heat.size(1) == img.size(1),
                "heatmap/image size mismatch");
  cv::Mat h8(static_cast<int>(heat.size(0)), static_cast<int>(heat.size(1)), CV_8UC1);
  for (int y = 0; y < h8.rows; ++y)
    for (int x = 0; x < h8.cols; ++x)
      h8.at<uint8_t>(y, x) =
          static_cast<uint8_t>(std::clamp(heat[y * heat.size(1) + x] * 255.f, 0.f, 255.f));
  cv::Mat jet, bgr;
  cv::applyColorMap(h8, jet, cv::COLORMAP_JET);
  cv::cvtColor(gray_to_mat(img), bgr, cv::COLOR_GRAY2BGR);
  cv::Mat blend;
  cv::addWeighted(bgr, 0.55, jet, 0.45, 0, blend);
  ECHODET_CHECK(cv::imwrite(path, blend), "cannot write " << path);
}

// dataset directory writer: images/ + annotations.json in the documented format
inline void write_synth_dataset(const std::string& dir, const std::vector<SynthSample>& samples) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  nlohmann::json j;
  j["images"] = nlohmann::json::array();
  j["annotations"] = nlohmann::json::array();
  for (const auto& s : samples) {
    std::string file = "images/" + s.id + ".png";
    save_gray_png((fs::path(dir) / file).string(), s.image);
    j["images"].push_back({{"id", s.id},
                           {"file", file},
                           {"width", s.image.size(1)},
                           {"height", s.image.size(0)}});
    for (const auto& b : s.boxes)
      j["annotations"].push_back(
          {{"image_id", s.id},
           {"bbox", {b.box.x1, b.box.y1, b.box.x2, b.box.y2}},
           {"label", label_name(b.label)}});
  }
  std::ofstream f((fs::path(dir) / "annotations.json").string());
  ECHODET_CHECK(f.good(), "cannot write annotations in " << dir);
  f << j.dump(2) << "\n";
}

// load + geometry pipeline for one split: read gray, resize+pad to the model
// input, carry boxes into model space with the inverse transform recorded
inline std::vector<TrainSample> load_split_samples(const Dataset& ds,
                                                   const std::vector<size_t>& idx, int th, int tw,
                                                   bool stretch = false) {
  std::vector<TrainSample> out;
  out.reserve(idx.size());
  for (size_t i : idx) {
    const Sample& s = ds.samples[i];
    GrayImage img = load_image_gray(s.image_path);
    auto [resized, rec] = resize_pad(img, th, tw, stretch);
    TrainSample ts;
    ts.image = std::move(resized);
    ts.boxes = boxes_to_model(s.boxes, rec);
    ts.id = s.id;
    ts.transform = rec;
    out.push_back(std::move(ts));
  }
  return out;
}

}  // namespace echodet
