#pragma once

#include <cmath>
#include <stdexcept>

#include "cyseg/domain.hpp"

namespace cyseg {

inline constexpr double kProbFloor = 1e-12;

struct LossWeights {
  double alpha = 0.5;
  double beta = 1.0 / 11.0;
  double gamma = 20.0 / 31.0;

  void validate() const {
    if (alpha < 0 || alpha > 1 || beta < 0 || beta > 1 || gamma < 0 || gamma > 1)
      throw std::invalid_argument("LossWeights: alpha, beta, gamma must lie in [0,1]");
  }
};

// Cross entropy against one-hot labels, averaged over pixels; probabilities
// are floored at 1e-12 before the log.
inline double seg_loss(const SegProbs& y, const OneHotMask& y_bar) {
  if (!y.t.same_shape(y_bar.t))
    throw std::invalid_argument("seg_loss: shape mismatch");
  double sum = 0.0;
  for (std::int64_t i = 0; i < y.t.size(); ++i) {
    if (y_bar.t[i] != 0.0)
      sum += y_bar.t[i] * std::log(std::max(y.t[i], kProbFloor));
  }
  double npix = static_cast<double>(y.t.dim(1)) * y.t.dim(2);
  return -sum / npix;
}

// d seg_loss / d y. Positions at or below the floor get zero gradient (the
// floor is a constant there).
inline Tensor seg_loss_grad(const SegProbs& y, const OneHotMask& y_bar) {
  if (!y.t.same_shape(y_bar.t))
    throw std::invalid_argument("seg_loss_grad: shape mismatch");
  double npix = static_cast<double>(y.t.dim(1)) * y.t.dim(2);
  Tensor g(y.t.shape());
  for (std::int64_t i = 0; i < y.t.size(); ++i) {
    if (y_bar.t[i] != 0.0 && y.t[i] > kProbFloor)
      g[i] = -y_bar.t[i] / (y.t[i] * npix);
  }
  return g;
}

// MSE against the all-ones target.
inline double adv_loss(const RealismMap& p) {
  double sum = 0.0;
  for (std::int64_t i = 0; i < p.t.size(); ++i) {
    double d = p.t[i] - 1.0;
    sum += d * d;
  }
  return sum / static_cast<double>(p.t.size());
}

inline Tensor adv_loss_grad(const RealismMap& p) {
  Tensor g(p.t.shape());
  double n = static_cast<double>(p.t.size());
  for (std::int64_t i = 0; i < p.t.size(); ++i)
    g[i] = 2.0 * (p.t[i] - 1.0) / n;
  return g;
}

// L1 over all C*H*W elements, normalized by H*W only (the color channels
// are summed, not averaged).
inline double rec_loss_image(const Image& x_rec, const Image& x_bar) {
  if (!x_rec.t.same_shape(x_bar.t))
    throw std::invalid_argument("rec_loss_image: shape mismatch");
  double sum = 0.0;
  for (std::int64_t i = 0; i < x_rec.t.size(); ++i)
    sum += std::abs(x_rec.t[i] - x_bar.t[i]);
  double npix = static_cast<double>(x_rec.t.dim(1)) * x_rec.t.dim(2);
  return sum / npix;
}

// Subgradient: sign(x_rec - x_bar)/(H*W), zero where the difference is zero.
inline Tensor rec_loss_image_grad(const Image& x_rec, const Image& x_bar) {
  if (!x_rec.t.same_shape(x_bar.t))
    throw std::invalid_argument("rec_loss_image_grad: shape mismatch");
  double npix = static_cast<double>(x_rec.t.dim(1)) * x_rec.t.dim(2);
  Tensor g(x_rec.t.shape());
  for (std::int64_t i = 0; i < x_rec.t.size(); ++i) {
    double d = x_rec.t[i] - x_bar.t[i];
    g[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / npix;
  }
  return g;
}

// Same kernel as seg_loss, applied to the backward-cycle reconstruction.
inline double rec_loss_seg(const SegProbs& y_rec, const OneHotMask& y_bar) {
  return seg_loss(y_rec, y_bar);
}

inline Tensor rec_loss_seg_grad(const SegProbs& y_rec, const OneHotMask& y_bar) {
  return seg_loss_grad(y_rec, y_bar);
}

struct GeneratorLoss {
  double forward = 0.0;
  double backward = 0.0;
  double total = 0.0;
};

inline GeneratorLoss generator_loss(double j_seg, double j_rec_x, double j_adv,
                                    double j_rec_y, const LossWeights& w) {
  w.validate();
  GeneratorLoss out;
  out.forward = w.alpha * j_seg + (1.0 - w.alpha) * j_rec_x;
  out.backward = w.beta * j_adv + (1.0 - w.beta) * j_rec_y;
  out.total = w.gamma * out.forward + (1.0 - w.gamma) * out.backward;
  return out;
}

// LS-GAN discriminator objective: real patches toward 1, buffered generated
// patches toward 0, no extra 1/2 factor.
inline double discriminator_loss(const RealismMap& p_real, const RealismMap& p_gen_buf) {
  if (!p_real.t.same_shape(p_gen_buf.t))
    throw std::invalid_argument("discriminator_loss: shape mismatch");
  double n = static_cast<double>(p_real.t.size());
  double sum = 0.0;
  for (std::int64_t i = 0; i < p_real.t.size(); ++i) {
    double dr = p_real.t[i] - 1.0;
    double dg = p_gen_buf.t[i];
    sum += dr * dr + dg * dg;
  }
  return sum / n;
}

inline Tensor discriminator_loss_grad_real(const RealismMap& p_real) {
  Tensor g(p_real.t.shape());
  double n = static_cast<double>(p_real.t.size());
  for (std::int64_t i = 0; i < p_real.t.size(); ++i)
    g[i] = 2.0 * (p_real.t[i] - 1.0) / n;
  return g;
}

inline Tensor discriminator_loss_grad_gen(const RealismMap& p_gen_buf) {
  Tensor g(p_gen_buf.t.shape());
  double n = static_cast<double>(p_gen_buf.t.size());
  for (std::int64_t i = 0; i < p_gen_buf.t.size(); ++i)
    g[i] = 2.0 * p_gen_buf.t[i] / n;
  return g;
}

}  // namespace cyseg
