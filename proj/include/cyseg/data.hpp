#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cyseg/domain.hpp"
#include "cyseg/rng.hpp"

namespace cyseg {

enum class DataSplit { kTrain, kVal };

inline std::string to_string(DataSplit s) { return s == DataSplit::kTrain ? "train" : "val"; }

struct DatasetSpec {
  std::string source = "synthetic";  // "synthetic" or a cityscapes directory
  int height = 64;
  int width = 64;
  int class_count = 4;
  DataSplit split = DataSplit::kTrain;
  int sample_count = 32;  // synthetic only
  std::uint64_t seed = 0;

  void validate() const {
    if (height % 8 || width % 8)
      throw std::invalid_argument("DatasetSpec: resolution must be multiples of 8");
    if (class_count < 2)
      throw std::invalid_argument("DatasetSpec: class count must be >= 2");
  }
};

struct Sample {
  Image image;
  OneHotMask mask;
  Tensor labels;       // (H,W)
  Tensor ignore_mask;  // (H,W), nonzero = excluded from metrics; may be empty
};

class Dataset {
 public:
  virtual ~Dataset() = default;
  virtual int size() const = 0;
  virtual Sample get(int index) const = 0;
};

namespace detail {

inline bool in_triangle(double px, double py, double x0, double y0, double x1,
                        double y1, double x2, double y2) {
  auto side = [](double ax, double ay, double bx, double by, double cx, double cy) {
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
  };
  double d0 = side(x0, y0, x1, y1, px, py);
  double d1 = side(x1, y1, x2, y2, px, py);
  double d2 = side(x2, y2, x0, y0, px, py);
  bool neg = (d0 < 0) || (d1 < 0) || (d2 < 0);
  bool pos = (d0 > 0) || (d1 > 0) || (d2 > 0);
  return !(neg && pos);
}

}  // namespace detail

// Geometry of one synthetic scene; exposed so tests can recount pixel
// areas with an independent rasterizer.
struct SceneShape {
  int kind;        // 0 rectangle, 1 disc, 2 triangle (apex up)
  int class_id;    // 1 + kind
  double cx, cy;   // center, pixel units
  double rx, ry;   // half extents
  double color[3];
  double jitter;
  std::uint64_t texture_seed;

  bool contains(double x, double y) const {
    switch (kind) {
      case 0:
        return std::abs(x - cx) <= rx && std::abs(y - cy) <= ry;
      case 1: {
        double dx = (x - cx) / rx, dy = (y - cy) / ry;
        return dx * dx + dy * dy <= 1.0;
      }
      default:
        return detail::in_triangle(x, y, cx, cy - ry, cx - rx, cy + ry, cx + rx, cy + ry);
    }
  }
};

struct SceneDesc {
  double bg0[3], bg1[3];  // gradient endpoints
  std::vector<SceneShape> shapes;
};

// Deterministic scene generator: gradient background plus 2..6 colored
// shapes, each shape kind (rectangle/disc/triangle) being its own class.
// Each class has a distinct base tint so short training runs can learn the
// class from color before they learn it from geometry; per-shape offsets
// and per-pixel jitter keep reconstruction from being a lookup table.
class SyntheticDataset : public Dataset {
 public:
  explicit SyntheticDataset(DatasetSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
  }

  int size() const override { return spec_.sample_count; }

  SceneDesc describe(int index) const {
    if (index < 0 || index >= spec_.sample_count)
      throw std::out_of_range("SyntheticDataset: index out of range");
    // val indices live in a partition disjoint from train indices
    std::uint64_t global = (spec_.split == DataSplit::kVal ? (1ull << 30) : 0ull) +
                           static_cast<std::uint64_t>(index);
    Rng rng(spec_.seed * 0x9e3779b97f4a7c15ull + global + 1);

    SceneDesc d;
    for (int k = 0; k < 3; ++k) {
      d.bg0[k] = rng.uniform(-0.9, 0.3);
      d.bg1[k] = rng.uniform(-0.3, 0.9);
    }
    const int kinds = std::min(3, spec_.class_count - 1);
    const int n_shapes = static_cast<int>(rng.uniform_int(3, 6));
    for (int sh = 0; sh < n_shapes; ++sh) {
      SceneShape s;
      s.kind = static_cast<int>(rng.uniform_int(0, kinds - 1));
      s.class_id = 1 + s.kind;
      s.cx = rng.uniform(0.15, 0.85) * spec_.width;
      s.cy = rng.uniform(0.15, 0.85) * spec_.height;
      s.rx = rng.uniform(0.10, 0.28) * spec_.width;
      s.ry = rng.uniform(0.10, 0.28) * spec_.height;
      static constexpr double kClassTint[3][3] = {
          {0.8, -0.7, -0.7}, {-0.7, 0.8, -0.7}, {-0.7, -0.7, 0.8}};
      for (int k = 0; k < 3; ++k)
        s.color[k] = std::clamp(kClassTint[s.kind][k] + rng.uniform(-0.15, 0.15), -1.0, 1.0);
      s.jitter = rng.uniform(0.02, 0.12);
      s.texture_seed = rng.engine()();
      d.shapes.push_back(s);
    }
    return d;
  }

  Sample get(int index) const override {
    const SceneDesc d = describe(index);
    const int h = spec_.height, w = spec_.width, s = spec_.class_count;
    Tensor img({3, h, w});
    Tensor labels({h, w});

    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double t = 0.5 * (static_cast<double>(x) / (w - 1) + static_cast<double>(y) / (h - 1));
        for (int k = 0; k < 3; ++k)
          img.at(k, y, x) = d.bg0[k] + t * (d.bg1[k] - d.bg0[k]);
      }
    }

    for (const SceneShape& shape : d.shapes) {
      Rng jrng(shape.texture_seed);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          if (!shape.contains(x, y)) continue;
          labels.at(y, x) = shape.class_id;
          for (int k = 0; k < 3; ++k) {
            double v = shape.color[k] + jrng.uniform(-shape.jitter, shape.jitter);
            img.at(k, y, x) = std::clamp(v, -1.0, 1.0);
          }
        }
      }
    }

    Sample out;
    out.image = Image(std::move(img));
    out.mask = one_hot_encode(labels, s);
    out.labels = std::move(labels);
    return out;
  }

  const DatasetSpec& spec() const { return spec_; }

 private:
  DatasetSpec spec_;
};

}  // namespace cyseg
