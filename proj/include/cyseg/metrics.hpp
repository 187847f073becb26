#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "cyseg/domain.hpp"
#include "cyseg/tensor.hpp"

namespace cyseg {

inline constexpr double kInfDb = std::numeric_limits<double>::infinity();

// Latent-space SNR in dB: signal energy over noise energy, both summed
// across all pixels and class channels.
inline double measure_snr(const SegLogits& clean, const SegLogits& noisy) {
  if (!clean.t.same_shape(noisy.t))
    throw std::invalid_argument("measure_snr: shape mismatch");
  double sig = clean.t.sum_sq();
  if (sig <= 0.0) throw std::invalid_argument("measure_snr: zero signal energy");
  double noise = 0.0;
  for (std::int64_t i = 0; i < clean.t.size(); ++i) {
    double d = noisy.t[i] - clean.t[i];
    noise += d * d;
  }
  if (noise == 0.0) return kInfDb;
  return 10.0 * std::log10(sig / noise);
}

// Standard deviation that makes |I|*sigma^2 hit the requested SNR against
// this tensor's signal energy, with |I| = H*W.
inline double sigma_for_snr(const SegLogits& clean, double target_snr_db) {
  double sig = clean.t.sum_sq();
  if (sig <= 0.0) throw std::invalid_argument("sigma_for_snr: zero signal energy");
  double npix = static_cast<double>(clean.height()) * clean.width();
  return (1.0 / std::sqrt(npix)) *
         std::pow(10.0, (10.0 * std::log10(sig) - target_snr_db) / 20.0);
}

// PSNR with peak fluctuation 2 (images live in [-1,1]); MSE averages over
// all C*H*W elements.
inline double compute_psnr(const Image& x_bar, const Image& x_rec) {
  if (!x_bar.t.same_shape(x_rec.t))
    throw std::invalid_argument("compute_psnr: shape mismatch");
  double mse = 0.0;
  for (std::int64_t i = 0; i < x_bar.t.size(); ++i) {
    double d = x_bar.t[i] - x_rec.t[i];
    mse += d * d;
  }
  mse /= static_cast<double>(x_bar.t.size());
  if (mse == 0.0) return kInfDb;
  return 10.0 * std::log10(4.0 / mse);
}

// Running per-class TP/FP/FN counts over a dataset. Merge of shards is
// plain addition, so accumulation order never matters.
class ConfusionAccumulator {
 public:
  explicit ConfusionAccumulator(int class_count)
      : tp_(class_count, 0), fp_(class_count, 0), fn_(class_count, 0) {}

  int class_count() const { return static_cast<int>(tp_.size()); }

  // pred/truth: (H,W) integer label maps; ignore (optional, same shape):
  // nonzero entries are excluded entirely.
  void accumulate(const Tensor& pred, const Tensor& truth, const Tensor* ignore = nullptr) {
    if (!pred.same_shape(truth))
      throw std::invalid_argument("accumulate: label map shape mismatch");
    if (ignore && !ignore->same_shape(pred))
      throw std::invalid_argument("accumulate: ignore mask shape mismatch");
    const int s = class_count();
    for (std::int64_t i = 0; i < pred.size(); ++i) {
      if (ignore && (*ignore)[i] != 0.0) continue;
      int p = static_cast<int>(pred[i]);
      int t = static_cast<int>(truth[i]);
      if (p < 0 || p >= s || t < 0 || t >= s)
        throw std::invalid_argument("accumulate: label out of range and not ignored");
      if (p == t) {
        ++tp_[p];
      } else {
        ++fp_[p];
        ++fn_[t];
      }
    }
  }

  void merge(const ConfusionAccumulator& o) {
    if (o.class_count() != class_count())
      throw std::invalid_argument("merge: class count mismatch");
    for (int s = 0; s < class_count(); ++s) {
      tp_[s] += o.tp_[s];
      fp_[s] += o.fp_[s];
      fn_[s] += o.fn_[s];
    }
  }

  std::int64_t tp(int s) const { return tp_.at(s); }
  std::int64_t fp(int s) const { return fp_.at(s); }
  std::int64_t fn(int s) const { return fn_.at(s); }

  // TP/(TP+FP+FN); nullopt when the class never occurs and is never
  // predicted (denominator zero).
  std::optional<double> iou(int s) const {
    std::int64_t denom = tp_.at(s) + fp_.at(s) + fn_.at(s);
    if (denom == 0) return std::nullopt;
    return static_cast<double>(tp_[s]) / static_cast<double>(denom);
  }

  enum class MiouMode { kStrict, kSkipUndefined };

  // Strict counts undefined classes as zero over the full class set; skip
  // averages only the defined classes.
  double miou(MiouMode mode = MiouMode::kStrict) const {
    double sum = 0.0;
    int defined = 0;
    for (int s = 0; s < class_count(); ++s) {
      auto v = iou(s);
      if (v) {
        sum += *v;
        ++defined;
      }
    }
    if (defined == 0) throw std::runtime_error("miou: all class IoUs undefined");
    if (mode == MiouMode::kStrict) return sum / class_count();
    return sum / defined;
  }

 private:
  std::vector<std::int64_t> tp_, fp_, fn_;
};

}  // namespace cyseg
