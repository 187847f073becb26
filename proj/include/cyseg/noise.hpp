#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "cyseg/domain.hpp"
#include "cyseg/metrics.hpp"
#include "cyseg/rng.hpp"

namespace cyseg {

enum class NoiseKind { kNone, kMaxOnly, kQuantize, kGaussian };

// Gaussian targets above this behave as "no noise" (sigma underflows the
// useful range anyway).
inline constexpr double kMaxTargetSnrDb = 300.0;

struct NoiseSpec {
  NoiseKind kind = NoiseKind::kNone;
  int bits = 2;               // quantize only
  double target_snr_db = 0.0; // gaussian only
  std::uint64_t seed = 0;     // gaussian only

  void validate() const {
    if (kind == NoiseKind::kQuantize && (bits < 1 || bits > 16))
      throw std::invalid_argument("NoiseSpec: quantize bits must be in [1,16]");
    if (kind == NoiseKind::kGaussian && !std::isfinite(target_snr_db))
      throw std::invalid_argument("NoiseSpec: gaussian target SNR must be finite");
  }

  // "none" | "max-only" | "quant:<n>" | "gauss:<snr_db>"
  static NoiseSpec parse(const std::string& s) {
    NoiseSpec spec;
    if (s == "none") {
      spec.kind = NoiseKind::kNone;
    } else if (s == "max-only") {
      spec.kind = NoiseKind::kMaxOnly;
    } else if (s.rfind("quant:", 0) == 0) {
      spec.kind = NoiseKind::kQuantize;
      spec.bits = std::stoi(s.substr(6));
    } else if (s.rfind("gauss:", 0) == 0) {
      spec.kind = NoiseKind::kGaussian;
      spec.target_snr_db = std::stod(s.substr(6));
    } else {
      throw std::invalid_argument("NoiseSpec: cannot parse '" + s + "'");
    }
    spec.validate();
    return spec;
  }

  std::string to_string() const {
    switch (kind) {
      case NoiseKind::kNone: return "none";
      case NoiseKind::kMaxOnly: return "max-only";
      case NoiseKind::kQuantize: return "quant:" + std::to_string(bits);
      case NoiseKind::kGaussian: {
        std::string v = std::to_string(target_snr_db);
        return "gauss:" + v;
      }
    }
    return "none";
  }
};

// 2^n reconstruction levels uniformly spaced on [-1,1], both endpoints
// included: level k = -1 + 2k/(2^n - 1).
inline std::vector<double> build_codebook(int bits) {
  if (bits < 1) throw std::invalid_argument("build_codebook: bits must be >= 1");
  if (bits > 16) throw std::invalid_argument("build_codebook: bits must be <= 16");
  const int n_levels = 1 << bits;
  std::vector<double> cb(n_levels);
  for (int k = 0; k < n_levels; ++k)
    cb[k] = -1.0 + 2.0 * k / (n_levels - 1);
  return cb;
}

// Nearest codebook level under the squared-error criterion; exact ties go
// to the lower level. The index guess from the closed form is corrected by
// comparing neighbours so the result is a true argmin.
inline double quantize_scalar(double v, const std::vector<double>& cb) {
  const int n = static_cast<int>(cb.size());
  const double step = 2.0 / (n - 1);
  int guess = static_cast<int>(std::ceil((v + 1.0) / step - 0.5));
  if (guess < 0) guess = 0;
  if (guess >= n) guess = n - 1;
  int best = guess;
  double bd = (v - cb[best]) * (v - cb[best]);
  for (int k = std::max(0, guess - 1); k <= std::min(n - 1, guess + 1); ++k) {
    double d = (v - cb[k]) * (v - cb[k]);
    if (d < bd || (d == bd && k < best)) {
      bd = d;
      best = k;
    }
  }
  return cb[best];
}

// Backward pass is the identity (straight-through): callers propagate the
// output gradient to the input unchanged.
inline SegLogits quantize(const SegLogits& logits, int bits) {
  if (!logits.t.all_finite())
    throw std::invalid_argument("quantize: non-finite logits");
  auto cb = build_codebook(bits);
  Tensor out(logits.t.shape());
  for (std::int64_t i = 0; i < logits.t.size(); ++i)
    out[i] = quantize_scalar(logits.t[i], cb);
  return SegLogits(std::move(out));
}

// Keeps each pixel's maximal class value, zeroes the rest (lowest index
// wins ties). If grad_mask is given it receives 1 at kept positions and 0
// elsewhere: the backward pass multiplies by it.
inline SegLogits max_only(const SegLogits& logits, Tensor* grad_mask = nullptr) {
  if (!logits.t.all_finite())
    throw std::invalid_argument("max_only: non-finite logits");
  const int s = logits.classes(), h = logits.height(), w = logits.width();
  Tensor out({s, h, w});
  if (grad_mask) *grad_mask = Tensor({s, h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int best = 0;
      double bv = logits.t.at(0, y, x);
      for (int c = 1; c < s; ++c) {
        if (logits.t.at(c, y, x) > bv) {
          bv = logits.t.at(c, y, x);
          best = c;
        }
      }
      out.at(best, y, x) = bv;
      if (grad_mask) grad_mask->at(best, y, x) = 1.0;
    }
  }
  return SegLogits(std::move(out));
}

// Adds i.i.d. zero-mean Gaussian noise per element, sigma chosen from the
// tensor's own energy to hit target_snr_db. Identity backward.
inline SegLogits gaussian_inject(const SegLogits& logits, double target_snr_db, Rng& rng) {
  if (!logits.t.all_finite())
    throw std::invalid_argument("gaussian_inject: non-finite logits");
  double snr = std::min(target_snr_db, kMaxTargetSnrDb);
  double sigma = sigma_for_snr(logits, snr);  // throws on zero energy
  Tensor out(logits.t.shape());
  for (std::int64_t i = 0; i < logits.t.size(); ++i)
    out[i] = logits.t[i] + rng.normal(0.0, sigma);
  return SegLogits(std::move(out));
}

struct InjectResult {
  SegLogits noisy;
  // Empty for the identity-backward kinds; (S,H,W) 0/1 mask for max-only.
  Tensor grad_mask;

  Tensor backward(const Tensor& grad_noisy) const {
    if (grad_mask.empty()) return grad_noisy;
    Tensor g = grad_noisy;
    for (std::int64_t i = 0; i < g.size(); ++i) g[i] *= grad_mask[i];
    return g;
  }
};

inline InjectResult inject(const SegLogits& logits, const NoiseSpec& spec, Rng& rng) {
  spec.validate();
  InjectResult r;
  switch (spec.kind) {
    case NoiseKind::kNone:
      r.noisy = logits;
      break;
    case NoiseKind::kMaxOnly:
      r.noisy = max_only(logits, &r.grad_mask);
      break;
    case NoiseKind::kQuantize:
      r.noisy = quantize(logits, spec.bits);
      break;
    case NoiseKind::kGaussian:
      r.noisy = gaussian_inject(logits, spec.target_snr_db, rng);
      break;
  }
  return r;
}

}  // namespace cyseg
