#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "cyseg/domain.hpp"
#include "cyseg/layers.hpp"
#include "cyseg/rng.hpp"

namespace cyseg {

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
    throw std::invalid_argument("concat_channels: spatial mismatch");
  Tensor y({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  std::copy(a.data(), a.data() + a.size(), y.data());
  std::copy(b.data(), b.data() + b.size(), y.data() + a.size());
  return y;
}

// Strided conv and max-pool side by side, channel-concatenated, normalized,
// rectified. The conv branch carries out_ch - in_ch channels, so out_ch must
// exceed in_ch.
class DownsamplerBlock : public Layer {
 public:
  DownsamplerBlock(int in_ch, int out_ch, const std::string& name)
      : in_ch_(in_ch), out_ch_(out_ch),
        conv_(in_ch, out_ch - in_ch, ConvGeom{3, 3, 2, 2, 1, 1, 1, 1}, name + ".conv"),
        norm_(out_ch, name + ".norm") {
    if (out_ch <= in_ch)
      throw std::invalid_argument(name + ": feature count must exceed input channels");
  }

  Tensor forward(const Tensor& x, Cache& c) override {
    c.kids.resize(4);
    Tensor a = conv_.forward(x, c.kids[0]);
    Tensor b = pool_.forward(x, c.kids[1]);
    Tensor y = norm_.forward(concat_channels(a, b), c.kids[2]);
    return relu_.forward(y, c.kids[3]);
  }

  Tensor backward(const Tensor& gy, const Cache& c, bool acc) override {
    Tensor g = relu_.backward(gy, c.kids[3], acc);
    g = norm_.backward(g, c.kids[2], acc);
    const int conv_ch = out_ch_ - in_ch_;
    const int oh = g.dim(1), ow = g.dim(2);
    Tensor ga({conv_ch, oh, ow}), gb({in_ch_, oh, ow});
    std::copy(g.data(), g.data() + ga.size(), ga.data());
    std::copy(g.data() + ga.size(), g.data() + g.size(), gb.data());
    Tensor gx = conv_.backward(ga, c.kids[0], acc);
    gx += pool_.backward(gb, c.kids[1], acc);
    return gx;
  }

  void collect_params(std::vector<Param*>& out) override {
    conv_.collect_params(out);
    norm_.collect_params(out);
  }

 private:
  int in_ch_, out_ch_;
  Conv2d conv_;
  MaxPool2x2 pool_;
  InstanceNorm norm_;
  ReLU relu_;
};

// Factorized residual block: 3x1/1x3 pairs, the second pair dilated.
class NonBottleneck1d : public Layer {
 public:
  NonBottleneck1d(int ch, int dil, const std::string& name)
      : c1_(ch, ch, ConvGeom{3, 1, 1, 1, 1, 0, 1, 1}, name + ".c1"),
        c2_(ch, ch, ConvGeom{1, 3, 1, 1, 0, 1, 1, 1}, name + ".c2"),
        n1_(ch, name + ".n1"),
        c3_(ch, ch, ConvGeom{3, 1, 1, 1, dil, 0, dil, 1}, name + ".c3"),
        c4_(ch, ch, ConvGeom{1, 3, 1, 1, 0, dil, 1, dil}, name + ".c4"),
        n2_(ch, name + ".n2") {}

  Tensor forward(const Tensor& x, Cache& c) override {
    c.kids.resize(10);
    Tensor t = r1_.forward(c1_.forward(x, c.kids[0]), c.kids[1]);
    t = r2_.forward(n1_.forward(c2_.forward(t, c.kids[2]), c.kids[3]), c.kids[4]);
    t = r3_.forward(c3_.forward(t, c.kids[5]), c.kids[6]);
    t = n2_.forward(c4_.forward(t, c.kids[7]), c.kids[8]);
    t += x;
    return rout_.forward(t, c.kids[9]);
  }

  Tensor backward(const Tensor& gy, const Cache& c, bool acc) override {
    Tensor g = rout_.backward(gy, c.kids[9], acc);
    Tensor gres = g;  // residual shortcut
    g = c4_.backward(n2_.backward(g, c.kids[8], acc), c.kids[7], acc);
    g = c3_.backward(r3_.backward(g, c.kids[6], acc), c.kids[5], acc);
    g = c2_.backward(n1_.backward(r2_.backward(g, c.kids[4], acc), c.kids[3], acc),
                     c.kids[2], acc);
    g = c1_.backward(r1_.backward(g, c.kids[1], acc), c.kids[0], acc);
    g += gres;
    return g;
  }

  void collect_params(std::vector<Param*>& out) override {
    c1_.collect_params(out);
    c2_.collect_params(out);
    n1_.collect_params(out);
    c3_.collect_params(out);
    c4_.collect_params(out);
    n2_.collect_params(out);
  }

 private:
  Conv2d c1_, c2_;
  InstanceNorm n1_;
  Conv2d c3_, c4_;
  InstanceNorm n2_;
  ReLU r1_, r2_, r3_, rout_;
};

inline std::unique_ptr<Layer> make_upsampler(int in_ch, int out_ch, const std::string& name) {
  auto seq = std::make_unique<Sequential>();
  seq->add(std::make_unique<ConvTranspose2d>(in_ch, out_ch,
                                             ConvGeom{3, 3, 2, 2, 1, 1, 1, 1}, 1,
                                             name + ".deconv"));
  seq->add(std::make_unique<InstanceNorm>(out_ch, name + ".norm"));
  seq->add(std::make_unique<ReLU>());
  return seq;
}

enum class NetScale { kFull, kTiny };

struct NetworkConfig {
  NetScale scale = NetScale::kTiny;
  int in_channels = 3;
  int out_channels = 4;
  int first_stage_features = 16;  // 32 for the full-scale logits->image generator
  std::uint64_t seed = 0;
};

inline std::string to_string(NetScale s) { return s == NetScale::kFull ? "full" : "tiny"; }
inline NetScale net_scale_from_string(const std::string& s) {
  if (s == "full") return NetScale::kFull;
  if (s == "tiny") return NetScale::kTiny;
  throw std::invalid_argument("unknown scale '" + s + "'");
}

// A generator or discriminator: a Sequential plus the input contract.
class Network {
 public:
  Network(std::unique_ptr<Sequential> seq, int in_ch, int min_hw, std::string name)
      : seq_(std::move(seq)), in_ch_(in_ch), min_hw_(min_hw), name_(std::move(name)) {
    seq_->collect_params(params_);
  }

  Tensor forward(const Tensor& x, Cache& c) const {
    check_input(x);
    return seq_->forward(x, c);
  }

  Tensor backward(const Tensor& gy, const Cache& c, bool accumulate) const {
    return seq_->backward(gy, c, accumulate);
  }

  const std::vector<Param*>& params() const { return params_; }
  const std::string& name() const { return name_; }

  void zero_grad() {
    for (Param* p : params_) p->zero_grad();
  }

  std::int64_t param_count() const {
    std::int64_t n = 0;
    for (Param* p : params_) n += p->value.size();
    return n;
  }

  void check_input(const Tensor& x) const {
    if (x.rank() != 3 || x.dim(0) != in_ch_)
      throw std::invalid_argument(name_ + ": expected (" + std::to_string(in_ch_) +
                                  ",H,W), got " + x.shape_str());
    if (x.dim(1) % 8 || x.dim(2) % 8)
      throw std::invalid_argument(name_ + ": H and W must be multiples of 8");
    if (x.dim(1) < min_hw_ || x.dim(2) < min_hw_)
      throw std::invalid_argument(name_ + ": input smaller than " +
                                  std::to_string(min_hw_) + "x" + std::to_string(min_hw_));
  }

 private:
  std::unique_ptr<Sequential> seq_;
  int in_ch_;
  int min_hw_;
  std::string name_;
  std::vector<Param*> params_;
};

// Encoder-decoder generator. Full scale follows the ERFNet stage schedule;
// tiny keeps the same block kinds at <=16 features for desk-scale runs.
inline std::unique_ptr<Network> make_generator(const NetworkConfig& cfg, const std::string& name) {
  auto seq = std::make_unique<Sequential>();
  const int in = cfg.in_channels, out = cfg.out_channels;
  if (cfg.scale == NetScale::kFull) {
    const int f0 = cfg.first_stage_features;
    seq->add(std::make_unique<DownsamplerBlock>(in, f0, name + ".down1"));
    seq->add(std::make_unique<DownsamplerBlock>(f0, 64, name + ".down2"));
    for (int i = 0; i < 5; ++i)
      seq->add(std::make_unique<NonBottleneck1d>(64, 1, name + ".enc" + std::to_string(i)));
    seq->add(std::make_unique<DownsamplerBlock>(64, 128, name + ".down3"));
    int b = 0;
    for (int rep = 0; rep < 2; ++rep)
      for (int dil : {2, 4, 8, 16})
        seq->add(std::make_unique<NonBottleneck1d>(128, dil, name + ".ctx" + std::to_string(b++)));
    seq->add(make_upsampler(128, 64, name + ".up1"));
    seq->add(std::make_unique<NonBottleneck1d>(64, 1, name + ".dec1a"));
    seq->add(std::make_unique<NonBottleneck1d>(64, 1, name + ".dec1b"));
    seq->add(make_upsampler(64, 16, name + ".up2"));
    seq->add(std::make_unique<NonBottleneck1d>(16, 1, name + ".dec2a"));
    seq->add(std::make_unique<NonBottleneck1d>(16, 1, name + ".dec2b"));
    seq->add(std::make_unique<ConvTranspose2d>(16, out, ConvGeom{2, 2, 2, 2, 0, 0, 1, 1}, 0,
                                               name + ".head"));
  } else {
    seq->add(std::make_unique<DownsamplerBlock>(in, 8, name + ".down1"));
    seq->add(std::make_unique<NonBottleneck1d>(8, 1, name + ".enc0"));
    seq->add(std::make_unique<DownsamplerBlock>(8, 16, name + ".down2"));
    seq->add(std::make_unique<NonBottleneck1d>(16, 2, name + ".ctx0"));
    seq->add(make_upsampler(16, 8, name + ".up1"));
    seq->add(std::make_unique<NonBottleneck1d>(8, 1, name + ".dec0"));
    seq->add(std::make_unique<ConvTranspose2d>(8, out, ConvGeom{3, 3, 2, 2, 1, 1, 1, 1}, 1,
                                               name + ".head"));
  }
  return std::make_unique<Network>(std::move(seq), in, 8, name);
}

// Least-squares patchGAN discriminator with instance normalization from the
// second stage on: strides (2,2,2,1) plus a 1-channel head, sigmoid output.
// Output geometry is (H/8-2, W/8-2).
inline std::unique_ptr<Network> make_discriminator(const NetworkConfig& cfg, const std::string& name) {
  const int b = cfg.scale == NetScale::kFull ? 64 : 8;
  auto seq = std::make_unique<Sequential>();
  ConvGeom k4s2{4, 4, 2, 2, 1, 1, 1, 1};
  ConvGeom k4s1{4, 4, 1, 1, 1, 1, 1, 1};
  seq->add(std::make_unique<Conv2d>(cfg.in_channels, b, k4s2, name + ".s1"));
  seq->add(std::make_unique<LeakyReLU>(0.2));
  seq->add(std::make_unique<Conv2d>(b, 2 * b, k4s2, name + ".s2"));
  seq->add(std::make_unique<InstanceNorm>(2 * b, name + ".s2n"));
  seq->add(std::make_unique<LeakyReLU>(0.2));
  seq->add(std::make_unique<Conv2d>(2 * b, 4 * b, k4s2, name + ".s3"));
  seq->add(std::make_unique<InstanceNorm>(4 * b, name + ".s3n"));
  seq->add(std::make_unique<LeakyReLU>(0.2));
  seq->add(std::make_unique<Conv2d>(4 * b, 8 * b, k4s1, name + ".s4"));
  seq->add(std::make_unique<InstanceNorm>(8 * b, name + ".s4n"));
  seq->add(std::make_unique<LeakyReLU>(0.2));
  seq->add(std::make_unique<Conv2d>(8 * b, 1, k4s1, name + ".head"));
  seq->add(std::make_unique<Sigmoid>());
  return std::make_unique<Network>(std::move(seq), cfg.in_channels, 32, name);
}

// Convolution weights ~ N(0, 0.02^2), biases zero, norm affine identity.
inline void init_weights(Network& net, std::uint64_t seed) {
  Rng rng(seed);
  for (Param* p : net.params()) {
    switch (p->kind) {
      case ParamKind::kConvWeight:
        for (std::int64_t i = 0; i < p->value.size(); ++i)
          p->value[i] = rng.normal(0.0, 0.02);
        break;
      case ParamKind::kBias:
      case ParamKind::kNormBias:
        p->value.fill(0.0);
        break;
      case ParamKind::kNormGain:
        p->value.fill(1.0);
        break;
    }
  }
}

// Convenience wrappers carrying the domain types through the raw nets.
inline SegLogits generator_g_forward(const Network& g, const Image& x, Cache& c) {
  return SegLogits(g.forward(x.t, c));
}
inline Image generator_f_forward(const Network& f, const SegLogits& y, Cache& c) {
  return Image(f.forward(y.t, c));
}
inline RealismMap discriminator_forward(const Network& d, const Image& x, Cache& c) {
  Tensor out = d.forward(x.t, c);
  // (1,Hd,Wd) -> (Hd,Wd)
  return RealismMap(Tensor::from({out.dim(1), out.dim(2)},
                                 std::vector<double>(out.data(), out.data() + out.size())));
}

}  // namespace cyseg
