#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "cyseg/tensor.hpp"

namespace cyseg {

// Domain wrappers around Tensor. They are thin on purpose: networks and
// gradients operate on raw tensors, the wrappers mark which space a signal
// lives in and carry the validation helpers.

// (3,H,W) image in [-1,1] when dataset-origin; generator outputs are
// unclamped until export.
struct Image {
  Tensor t;
  Image() = default;
  explicit Image(Tensor tensor) : t(std::move(tensor)) {
    if (t.rank() != 3 || t.dim(0) != 3)
      throw std::invalid_argument("Image: expected (3,H,W), got " + t.shape_str());
  }
  int height() const { return t.dim(1); }
  int width() const { return t.dim(2); }
};

// (S,H,W) pre-softmax class scores.
struct SegLogits {
  Tensor t;
  SegLogits() = default;
  explicit SegLogits(Tensor tensor) : t(std::move(tensor)) {
    if (t.rank() != 3)
      throw std::invalid_argument("SegLogits: expected (S,H,W), got " + t.shape_str());
  }
  int classes() const { return t.dim(0); }
  int height() const { return t.dim(1); }
  int width() const { return t.dim(2); }
};

// (S,H,W), per-pixel simplex.
struct SegProbs {
  Tensor t;
  SegProbs() = default;
  explicit SegProbs(Tensor tensor) : t(std::move(tensor)) {
    if (t.rank() != 3)
      throw std::invalid_argument("SegProbs: expected (S,H,W), got " + t.shape_str());
  }
  int classes() const { return t.dim(0); }
};

// (S,H,W), exactly one 1 per pixel along the class axis.
struct OneHotMask {
  Tensor t;
  OneHotMask() = default;
  explicit OneHotMask(Tensor tensor) : t(std::move(tensor)) {
    if (t.rank() != 3)
      throw std::invalid_argument("OneHotMask: expected (S,H,W), got " + t.shape_str());
  }
  int classes() const { return t.dim(0); }
};

// (H_D,W_D) patch discriminator output in [0,1].
struct RealismMap {
  Tensor t;
  RealismMap() = default;
  explicit RealismMap(Tensor tensor) : t(std::move(tensor)) {
    if (t.rank() != 2)
      throw std::invalid_argument("RealismMap: expected (H_D,W_D), got " + t.shape_str());
  }
};

// Per-pixel softmax along the class axis, max-subtracted for stability.
inline SegProbs softmax(const SegLogits& logits) {
  if (!logits.t.all_finite())
    throw std::invalid_argument("softmax: non-finite logits");
  const int s = logits.classes(), h = logits.height(), w = logits.width();
  Tensor out(logits.t.shape());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double mx = logits.t.at(0, y, x);
      for (int c = 1; c < s; ++c) mx = std::max(mx, logits.t.at(c, y, x));
      double z = 0.0;
      for (int c = 0; c < s; ++c) {
        double e = std::exp(logits.t.at(c, y, x) - mx);
        out.at(c, y, x) = e;
        z += e;
      }
      for (int c = 0; c < s; ++c) out.at(c, y, x) /= z;
    }
  }
  return SegProbs(std::move(out));
}

// Jacobian-vector product of softmax: maps dL/dprobs to dL/dlogits.
// Needed by every cross-entropy training path.
inline Tensor softmax_backward(const SegProbs& probs, const Tensor& grad_probs) {
  if (!probs.t.same_shape(grad_probs))
    throw std::invalid_argument("softmax_backward: shape mismatch");
  const int s = probs.t.dim(0), h = probs.t.dim(1), w = probs.t.dim(2);
  Tensor out(probs.t.shape());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double dot = 0.0;
      for (int c = 0; c < s; ++c) dot += grad_probs.at(c, y, x) * probs.t.at(c, y, x);
      for (int c = 0; c < s; ++c)
        out.at(c, y, x) = probs.t.at(c, y, x) * (grad_probs.at(c, y, x) - dot);
    }
  }
  return out;
}

// labels: (H,W) integer-valued tensor with entries in {0,..,S-1}.
inline OneHotMask one_hot_encode(const Tensor& labels, int s) {
  if (labels.rank() != 2)
    throw std::invalid_argument("one_hot_encode: labels must be (H,W)");
  const int h = labels.dim(0), w = labels.dim(1);
  Tensor out({s, h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double lv = labels.at(y, x);
      int l = static_cast<int>(lv);
      if (lv != l || l < 0 || l >= s)
        throw std::invalid_argument("one_hot_encode: label " + std::to_string(lv) +
                                    " out of range at pixel (" + std::to_string(y) +
                                    "," + std::to_string(x) + ")");
      out.at(l, y, x) = 1.0;
    }
  }
  return OneHotMask(std::move(out));
}

// Per-pixel index of the maximal class; ties go to the lowest index.
inline Tensor argmax_mask(const Tensor& scores) {
  if (scores.rank() != 3)
    throw std::invalid_argument("argmax_mask: expected (S,H,W)");
  if (!scores.all_finite())
    throw std::invalid_argument("argmax_mask: non-finite input");
  const int s = scores.dim(0), h = scores.dim(1), w = scores.dim(2);
  Tensor out({h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int best = 0;
      double bv = scores.at(0, y, x);
      for (int c = 1; c < s; ++c) {
        if (scores.at(c, y, x) > bv) {
          bv = scores.at(c, y, x);
          best = c;
        }
      }
      out.at(y, x) = best;
    }
  }
  return out;
}

inline Tensor argmax_mask(const SegProbs& p) { return argmax_mask(p.t); }
inline Tensor argmax_mask(const SegLogits& l) { return argmax_mask(l.t); }

// 8-bit pixel values to [-1,1]: v/127.5 - 1.
inline Image normalize_image(const Tensor& raw) {
  if (raw.rank() != 3 || raw.dim(0) != 3)
    throw std::invalid_argument("normalize_image: expected (3,H,W)");
  Tensor out(raw.shape());
  for (std::int64_t i = 0; i < raw.size(); ++i) {
    double v = raw[i];
    if (v < 0.0 || v > 255.0)
      throw std::invalid_argument("normalize_image: value out of [0,255]");
    out[i] = v / 127.5 - 1.0;
  }
  return Image(std::move(out));
}

}  // namespace cyseg
