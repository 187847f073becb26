#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "cyseg/data.hpp"
#include "cyseg/domain.hpp"

namespace cyseg {

// Standard Cityscapes train-ID mapping: 19 evaluation classes, everything
// else is void. Void pixels land in the background channel (train id 19)
// and are recorded in the ignore mask.
inline constexpr int kCityscapesClasses = 20;
inline constexpr int kCityscapesVoid = 19;

inline int cityscapes_train_id(int label_id) {
  static const std::array<int, 34> table = [] {
    std::array<int, 34> t{};
    t.fill(kCityscapesVoid);
    t[7] = 0;   // road
    t[8] = 1;   // sidewalk
    t[11] = 2;  // building
    t[12] = 3;  // wall
    t[13] = 4;  // fence
    t[17] = 5;  // pole
    t[19] = 6;  // traffic light
    t[20] = 7;  // traffic sign
    t[21] = 8;  // vegetation
    t[22] = 9;  // terrain
    t[23] = 10; // sky
    t[24] = 11; // person
    t[25] = 12; // rider
    t[26] = 13; // car
    t[27] = 14; // truck
    t[28] = 15; // bus
    t[31] = 16; // train
    t[32] = 17; // motorcycle
    t[33] = 18; // bicycle
    return t;
  }();
  if (label_id < 0 || label_id >= static_cast<int>(table.size())) return -1;
  return table[label_id];
}

// leftImg8bit/gtFine directory pair loader. Images are resized bilinearly
// and normalized to [-1,1]; labels use nearest-neighbor resizing.
class CityscapesDataset : public Dataset {
 public:
  CityscapesDataset(const std::string& root, DatasetSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    if (spec_.class_count != kCityscapesClasses)
      throw std::invalid_argument("CityscapesDataset: class count must be 20");
    namespace fs = std::filesystem;
    const std::string split = to_string(spec_.split);
    fs::path img_root = fs::path(root) / "leftImg8bit" / split;
    fs::path gt_root = fs::path(root) / "gtFine" / split;
    if (!fs::is_directory(img_root))
      throw std::runtime_error("CityscapesDataset: missing directory " + img_root.string());
    std::vector<fs::path> images;
    for (const auto& city : fs::directory_iterator(img_root)) {
      if (!city.is_directory()) continue;
      for (const auto& e : fs::directory_iterator(city.path())) {
        const std::string name = e.path().filename().string();
        if (name.size() > 16 && name.ends_with("_leftImg8bit.png")) images.push_back(e.path());
      }
    }
    std::sort(images.begin(), images.end());
    for (const auto& img : images) {
      std::string base = img.filename().string();
      base = base.substr(0, base.size() - std::string("_leftImg8bit.png").size());
      fs::path gt = gt_root / img.parent_path().filename() / (base + "_gtFine_labelIds.png");
      if (!fs::exists(gt))
        throw std::runtime_error("CityscapesDataset: missing label file " + gt.string());
      pairs_.emplace_back(img.string(), gt.string());
    }
  }

  int size() const override { return static_cast<int>(pairs_.size()); }

  Sample get(int index) const override {
    const auto& [img_path, gt_path] = pairs_.at(index);
    cv::Mat img = cv::imread(img_path, cv::IMREAD_COLOR);
    if (img.empty())
      throw std::runtime_error("CityscapesDataset: cannot read " + img_path);
    cv::Mat gt = cv::imread(gt_path, cv::IMREAD_GRAYSCALE);
    if (gt.empty())
      throw std::runtime_error("CityscapesDataset: cannot read " + gt_path);

    cv::Mat img_r, gt_r;
    cv::resize(img, img_r, cv::Size(spec_.width, spec_.height), 0, 0, cv::INTER_LINEAR);
    cv::resize(gt, gt_r, cv::Size(spec_.width, spec_.height), 0, 0, cv::INTER_NEAREST);

    Tensor raw({3, spec_.height, spec_.width});
    for (int y = 0; y < spec_.height; ++y) {
      for (int x = 0; x < spec_.width; ++x) {
        const cv::Vec3b& bgr = img_r.at<cv::Vec3b>(y, x);
        raw.at(0, y, x) = bgr[2];
        raw.at(1, y, x) = bgr[1];
        raw.at(2, y, x) = bgr[0];
      }
    }
    Tensor labels({spec_.height, spec_.width});
    Tensor ignore({spec_.height, spec_.width});
    for (int y = 0; y < spec_.height; ++y) {
      for (int x = 0; x < spec_.width; ++x) {
        int tid = cityscapes_train_id(gt_r.at<unsigned char>(y, x));
        if (tid < 0)
          throw std::runtime_error("CityscapesDataset: unknown label id " +
                                   std::to_string(gt_r.at<unsigned char>(y, x)) + " in " +
                                   gt_path);
        labels.at(y, x) = tid;
        if (tid == kCityscapesVoid) ignore.at(y, x) = 1.0;
      }
    }

    Sample out;
    out.image = normalize_image(raw);
    out.mask = one_hot_encode(labels, spec_.class_count);
    out.labels = std::move(labels);
    out.ignore_mask = std::move(ignore);
    return out;
  }

  const DatasetSpec& spec() const { return spec_; }

 private:
  DatasetSpec spec_;
  std::vector<std::pair<std::string, std::string>> pairs_;
};

// Prediction label map as an 8-bit single-channel PNG (one class index per
// pixel) plus a colorized twin for quick viewing.
inline void export_prediction_png(const Tensor& labels, const std::string& path) {
  cv::Mat m(labels.dim(0), labels.dim(1), CV_8UC1);
  for (int y = 0; y < labels.dim(0); ++y)
    for (int x = 0; x < labels.dim(1); ++x)
      m.at<unsigned char>(y, x) = static_cast<unsigned char>(labels.at(y, x));
  if (!cv::imwrite(path, m))
    throw std::runtime_error("export_prediction_png: cannot write " + path);
}

// Export a [-1,1] image tensor, clamped, as an 8-bit PNG.
inline void export_image_png(const Tensor& img, const std::string& path) {
  cv::Mat m(img.dim(1), img.dim(2), CV_8UC3);
  for (int y = 0; y < img.dim(1); ++y) {
    for (int x = 0; x < img.dim(2); ++x) {
      auto to8 = [&](int c) {
        double v = std::clamp(img.at(c, y, x), -1.0, 1.0);
        return static_cast<unsigned char>(std::lround((v + 1.0) * 127.5));
      };
      m.at<cv::Vec3b>(y, x) = cv::Vec3b(to8(2), to8(1), to8(0));
    }
  }
  if (!cv::imwrite(path, m))
    throw std::runtime_error("export_image_png: cannot write " + path);
}

}  // namespace cyseg
