#pragma once

#include <Eigen/Dense>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "cyseg/rng.hpp"
#include "cyseg/tensor.hpp"

namespace cyseg {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

enum class ParamKind { kConvWeight, kBias, kNormGain, kNormBias };

struct Param {
  Tensor value;
  Tensor grad;
  ParamKind kind;
  std::string name;

  Param(std::vector<int> shape, ParamKind k, std::string n)
      : value(std::move(shape)), grad(value.shape()), kind(k), name(std::move(n)) {}

  void zero_grad() { grad.fill(0.0); }
};

// Per-call activation storage. Networks hand one Cache tree per forward
// pass so the same parameter set can run several passes per iteration.
struct Cache {
  Tensor in;
  Tensor out;
  std::vector<Tensor> t;
  std::vector<int> idx;
  std::vector<Cache> kids;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, Cache& c) = 0;
  // Returns dL/dinput. Parameter gradients accumulate only when
  // accumulate=true (a frozen network still propagates input gradients).
  virtual Tensor backward(const Tensor& gy, const Cache& c, bool accumulate) = 0;
  virtual void collect_params(std::vector<Param*>& /*out*/) {}
};

struct ConvGeom {
  int kh = 3, kw = 3;
  int sh = 1, sw = 1;
  int ph = 1, pw = 1;
  int dh = 1, dw = 1;

  int out_h(int h) const { return (h + 2 * ph - dh * (kh - 1) - 1) / sh + 1; }
  int out_w(int w) const { return (w + 2 * pw - dw * (kw - 1) - 1) / sw + 1; }
};

// (C*kh*kw, Oh*Ow) patch matrix; out-of-bounds taps are zero.
inline Tensor im2col(const Tensor& x, const ConvGeom& g, int oh, int ow) {
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor col({c * g.kh * g.kw, oh * ow});
  double* cd = col.data();
  for (int ci = 0; ci < c; ++ci) {
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        const std::int64_t row = (static_cast<std::int64_t>(ci) * g.kh + ki) * g.kw + kj;
        double* dst = cd + row * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.sh - g.ph + ki * g.dh;
          if (iy < 0 || iy >= h) {
            dst += ow;
            continue;
          }
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.sw - g.pw + kj * g.dw;
            *dst++ = (ix < 0 || ix >= w) ? 0.0 : x.at(ci, iy, ix);
          }
        }
      }
    }
  }
  return col;
}

// Scatter-add inverse of im2col.
inline Tensor col2im(const Tensor& col, const ConvGeom& g, int c, int h, int w,
                     int oh, int ow) {
  Tensor x({c, h, w});
  const double* cd = col.data();
  for (int ci = 0; ci < c; ++ci) {
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        const std::int64_t row = (static_cast<std::int64_t>(ci) * g.kh + ki) * g.kw + kj;
        const double* src = cd + row * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.sh - g.ph + ki * g.dh;
          if (iy < 0 || iy >= h) {
            src += ow;
            continue;
          }
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.sw - g.pw + kj * g.dw;
            double v = *src++;
            if (ix >= 0 && ix < w) x.at(ci, iy, ix) += v;
          }
        }
      }
    }
  }
  return x;
}

class Conv2d : public Layer {
 public:
  Conv2d(int in_ch, int out_ch, ConvGeom geom, std::string name)
      : in_ch_(in_ch), out_ch_(out_ch), g_(geom),
        weight_({out_ch, in_ch, geom.kh, geom.kw}, ParamKind::kConvWeight, name + ".weight"),
        bias_({out_ch}, ParamKind::kBias, name + ".bias") {}

  Tensor forward(const Tensor& x, Cache& c) override {
    if (x.dim(0) != in_ch_)
      throw std::invalid_argument(weight_.name + ": channel mismatch");
    const int oh = g_.out_h(x.dim(1)), ow = g_.out_w(x.dim(2));
    if (oh <= 0 || ow <= 0)
      throw std::invalid_argument(weight_.name + ": input too small");
    c.in = x;
    c.t.assign(1, im2col(x, g_, oh, ow));
    const int k = in_ch_ * g_.kh * g_.kw, n = oh * ow;
    Tensor y({out_ch_, oh, ow});
    CMapM wm(weight_.value.data(), out_ch_, k);
    CMapM colm(c.t[0].data(), k, n);
    MapM ym(y.data(), out_ch_, n);
    ym.noalias() = wm * colm;
    for (int co = 0; co < out_ch_; ++co) ym.row(co).array() += bias_.value[co];
    return y;
  }

  Tensor backward(const Tensor& gy, const Cache& c, bool accumulate) override {
    const int oh = gy.dim(1), ow = gy.dim(2), n = oh * ow;
    const int k = in_ch_ * g_.kh * g_.kw;
    CMapM gym(gy.data(), out_ch_, n);
    if (accumulate) {
      CMapM colm(c.t[0].data(), k, n);
      MapM gwm(weight_.grad.data(), out_ch_, k);
      gwm.noalias() += gym * colm.transpose();
      for (int co = 0; co < out_ch_; ++co) bias_.grad[co] += gym.row(co).sum();
    }
    Tensor gcol({k, n});
    MapM gcolm(gcol.data(), k, n);
    CMapM wm(weight_.value.data(), out_ch_, k);
    gcolm.noalias() = wm.transpose() * gym;
    return col2im(gcol, g_, in_ch_, c.in.dim(1), c.in.dim(2), oh, ow);
  }

  void collect_params(std::vector<Param*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  const ConvGeom& geom() const { return g_; }

 private:
  int in_ch_, out_ch_;
  ConvGeom g_;
  Param weight_, bias_;
};

// Transposed convolution; weight layout (in_ch, out_ch, kh, kw). Output
// size (H-1)*s - 2p + k + output_padding.
class ConvTranspose2d : public Layer {
 public:
  ConvTranspose2d(int in_ch, int out_ch, ConvGeom geom, int out_pad, std::string name)
      : in_ch_(in_ch), out_ch_(out_ch), g_(geom), out_pad_(out_pad),
        weight_({in_ch, out_ch, geom.kh, geom.kw}, ParamKind::kConvWeight, name + ".weight"),
        bias_({out_ch}, ParamKind::kBias, name + ".bias") {}

  int out_h(int h) const { return (h - 1) * g_.sh - 2 * g_.ph + g_.kh + out_pad_; }
  int out_w(int w) const { return (w - 1) * g_.sw - 2 * g_.pw + g_.kw + out_pad_; }

  Tensor forward(const Tensor& x, Cache& c) override {
    if (x.dim(0) != in_ch_)
      throw std::invalid_argument(weight_.name + ": channel mismatch");
    c.in = x;
    const int ih = x.dim(1), iw = x.dim(2);
    const int oh = out_h(ih), ow = out_w(iw);
    if (oh <= 0 || ow <= 0)
      throw std::invalid_argument(weight_.name + ": input too small");
    const int k = out_ch_ * g_.kh * g_.kw, n = ih * iw;
    Tensor cols({k, n});
    CMapM am(weight_.value.data(), in_ch_, k);
    CMapM xm(x.data(), in_ch_, n);
    MapM colm(cols.data(), k, n);
    colm.noalias() = am.transpose() * xm;
    // col2im with the forward conv geometry maps (oh,ow)-sized images back
    // from (ih,iw) patch grids, which is exactly the deconv output scatter.
    Tensor y = col2im(cols, g_, out_ch_, oh, ow, ih, iw);
    for (int co = 0; co < out_ch_; ++co)
      for (int p = 0; p < oh * ow; ++p)
        y[static_cast<std::int64_t>(co) * oh * ow + p] += bias_.value[co];
    return y;
  }

  Tensor backward(const Tensor& gy, const Cache& c, bool accumulate) override {
    const int ih = c.in.dim(1), iw = c.in.dim(2);
    const int oh = gy.dim(1), ow = gy.dim(2);
    const int k = out_ch_ * g_.kh * g_.kw, n = ih * iw;
    Tensor gcols = im2col(gy, g_, ih, iw);
    CMapM gcolm(gcols.data(), k, n);
    CMapM xm(c.in.data(), in_ch_, n);
    if (accumulate) {
      MapM gwm(weight_.grad.data(), in_ch_, k);
      gwm.noalias() += xm * gcolm.transpose();
      CMapM gym(gy.data(), out_ch_, oh * ow);
      for (int co = 0; co < out_ch_; ++co) bias_.grad[co] += gym.row(co).sum();
    }
    Tensor gx({in_ch_, ih, iw});
    MapM gxm(gx.data(), in_ch_, n);
    CMapM am(weight_.value.data(), in_ch_, k);
    gxm.noalias() = am * gcolm;
    return gx;
  }

  void collect_params(std::vector<Param*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  int in_ch_, out_ch_;
  ConvGeom g_;
  int out_pad_;
  Param weight_, bias_;
};

class MaxPool2x2 : public Layer {
 public:
  Tensor forward(const Tensor& x, Cache& c) override {
    const int ch = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (h % 2 || w % 2)
      throw std::invalid_argument("MaxPool2x2: odd spatial dims");
    const int oh = h / 2, ow = w / 2;
    Tensor y({ch, oh, ow});
    c.in = x;
    c.idx.assign(static_cast<size_t>(ch) * oh * ow, 0);
    std::int64_t o = 0;
    for (int ci = 0; ci < ch; ++ci) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++o) {
          int by = 2 * oy, bx = 2 * ox;
          double best = x.at(ci, by, bx);
          int bi = 0;
          const double cand[3] = {x.at(ci, by, bx + 1), x.at(ci, by + 1, bx),
                                  x.at(ci, by + 1, bx + 1)};
          for (int q = 0; q < 3; ++q)
            if (cand[q] > best) { best = cand[q]; bi = q + 1; }
          y[o] = best;
          c.idx[o] = bi;
        }
      }
    }
    return y;
  }

  Tensor backward(const Tensor& gy, const Cache& c, bool) override {
    const int ch = c.in.dim(0), h = c.in.dim(1), w = c.in.dim(2);
    const int oh = h / 2, ow = w / 2;
    Tensor gx({ch, h, w});
    std::int64_t o = 0;
    for (int ci = 0; ci < ch; ++ci) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++o) {
          int bi = c.idx[o];
          int iy = 2 * oy + bi / 2, ix = 2 * ox + bi % 2;
          gx.at(ci, iy, ix) += gy[o];
        }
      }
    }
    return gx;
  }
};

// Per-channel normalization over the spatial extent with affine params.
class InstanceNorm : public Layer {
 public:
  explicit InstanceNorm(int ch, std::string name, double eps = 1e-5)
      : ch_(ch), eps_(eps),
        gain_({ch}, ParamKind::kNormGain, name + ".gain"),
        bias_({ch}, ParamKind::kNormBias, name + ".bias") {
    gain_.value.fill(1.0);
  }

  Tensor forward(const Tensor& x, Cache& c) override {
    const int h = x.dim(1), w = x.dim(2);
    const std::int64_t n = static_cast<std::int64_t>(h) * w;
    Tensor y(x.shape());
    Tensor xhat(x.shape());
    Tensor invstd({ch_});
    for (int ci = 0; ci < ch_; ++ci) {
      const double* xd = x.data() + ci * n;
      double mean = 0.0;
      for (std::int64_t i = 0; i < n; ++i) mean += xd[i];
      mean /= n;
      double var = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        double d = xd[i] - mean;
        var += d * d;
      }
      var /= n;
      double is = 1.0 / std::sqrt(var + eps_);
      invstd[ci] = is;
      double* xh = xhat.data() + ci * n;
      double* yd = y.data() + ci * n;
      for (std::int64_t i = 0; i < n; ++i) {
        xh[i] = (xd[i] - mean) * is;
        yd[i] = gain_.value[ci] * xh[i] + bias_.value[ci];
      }
    }
    c.t = {std::move(xhat), std::move(invstd)};
    return y;
  }

  Tensor backward(const Tensor& gy, const Cache& c, bool accumulate) override {
    const Tensor& xhat = c.t[0];
    const Tensor& invstd = c.t[1];
    const int h = gy.dim(1), w = gy.dim(2);
    const std::int64_t n = static_cast<std::int64_t>(h) * w;
    Tensor gx(gy.shape());
    for (int ci = 0; ci < ch_; ++ci) {
      const double* gyd = gy.data() + ci * n;
      const double* xh = xhat.data() + ci * n;
      double sum_gy = 0.0, sum_gyxh = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        sum_gy += gyd[i];
        sum_gyxh += gyd[i] * xh[i];
      }
      if (accumulate) {
        gain_.grad[ci] += sum_gyxh;
        bias_.grad[ci] += sum_gy;
      }
      const double g = gain_.value[ci], is = invstd[ci];
      const double m_gy = sum_gy / n, m_gyxh = sum_gyxh / n;
      double* gxd = gx.data() + ci * n;
      for (std::int64_t i = 0; i < n; ++i)
        gxd[i] = g * is * (gyd[i] - m_gy - xh[i] * m_gyxh);
    }
    return gx;
  }

  void collect_params(std::vector<Param*>& out) override {
    out.push_back(&gain_);
    out.push_back(&bias_);
  }

 private:
  int ch_;
  double eps_;
  Param gain_, bias_;
};

class ReLU : public Layer {
 public:
  Tensor forward(const Tensor& x, Cache& c) override {
    Tensor y(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    c.out = y;
    return y;
  }
  Tensor backward(const Tensor& gy, const Cache& c, bool) override {
    Tensor gx(gy.shape());
    for (std::int64_t i = 0; i < gy.size(); ++i)
      gx[i] = c.out[i] > 0.0 ? gy[i] : 0.0;
    return gx;
  }
};

class LeakyReLU : public Layer {
 public:
  explicit LeakyReLU(double slope = 0.2) : slope_(slope) {}
  Tensor forward(const Tensor& x, Cache& c) override {
    c.in = x;
    Tensor y(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i)
      y[i] = x[i] > 0.0 ? x[i] : slope_ * x[i];
    return y;
  }
  Tensor backward(const Tensor& gy, const Cache& c, bool) override {
    Tensor gx(gy.shape());
    for (std::int64_t i = 0; i < gy.size(); ++i)
      gx[i] = c.in[i] > 0.0 ? gy[i] : slope_ * gy[i];
    return gx;
  }

 private:
  double slope_;
};

class Sigmoid : public Layer {
 public:
  Tensor forward(const Tensor& x, Cache& c) override {
    Tensor y(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i)
      y[i] = 1.0 / (1.0 + std::exp(-x[i]));
    c.out = y;
    return y;
  }
  Tensor backward(const Tensor& gy, const Cache& c, bool) override {
    Tensor gx(gy.shape());
    for (std::int64_t i = 0; i < gy.size(); ++i)
      gx[i] = gy[i] * c.out[i] * (1.0 - c.out[i]);
    return gx;
  }
};

// Chain of layers with externally owned per-pass caches.
class Sequential : public Layer {
 public:
  void add(std::unique_ptr<Layer> l) { layers_.push_back(std::move(l)); }
  size_t size() const { return layers_.size(); }

  Tensor forward(const Tensor& x, Cache& c) override {
    c.kids.resize(layers_.size());
    Tensor cur = x;
    for (size_t i = 0; i < layers_.size(); ++i)
      cur = layers_[i]->forward(cur, c.kids[i]);
    return cur;
  }

  Tensor backward(const Tensor& gy, const Cache& c, bool accumulate) override {
    Tensor cur = gy;
    for (size_t i = layers_.size(); i-- > 0;)
      cur = layers_[i]->backward(cur, c.kids[i], accumulate);
    return cur;
  }

  void collect_params(std::vector<Param*>& out) override {
    for (auto& l : layers_) l->collect_params(out);
  }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace cyseg
