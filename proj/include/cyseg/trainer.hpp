#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "cyseg/checkpoint.hpp"
#include "cyseg/config.hpp"
#include "cyseg/data.hpp"
#include "cyseg/domain.hpp"
#include "cyseg/losses.hpp"
#include "cyseg/metrics.hpp"
#include "cyseg/networks.hpp"
#include "cyseg/noise.hpp"
#include "cyseg/optim.hpp"
#include "cyseg/pool.hpp"

namespace cyseg {

inline constexpr const char* kVersion = "cyseg 0.1.0";

struct TrainConfig {
  int epochs_total = 200;
  int epochs_constant_lr = 100;
  double lr_initial = 0.0002;
  int batch_size = 4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  LossWeights weights;
  NoiseSpec noise;
  std::uint64_t seed = 0;
  NetScale scale = NetScale::kTiny;
  int class_count = 4;
  int pool_capacity = 50;
  PoolPolicy pool_policy = PoolPolicy::kUniform;
  // Noise on the reconstruction branch during evaluation (PSNR); the
  // segmentation branch is always evaluated without noise.
  bool noise_at_eval = true;
  int checkpoint_every = 1;

  void validate() const {
    std::vector<std::string> bad;
    if (epochs_total < 1) bad.push_back("epochs_total");
    if (epochs_constant_lr > epochs_total) bad.push_back("epochs_constant_lr");
    if (lr_initial <= 0) bad.push_back("lr_initial");
    if (batch_size < 1) bad.push_back("batch_size");
    if (class_count < 2) bad.push_back("class_count");
    if (pool_capacity < 1) bad.push_back("pool_capacity");
    if (!bad.empty()) {
      std::string msg = "TrainConfig: invalid keys:";
      for (const auto& k : bad) msg += " " + k;
      throw std::invalid_argument(msg);
    }
    weights.validate();
    noise.validate();
  }

  static TrainConfig from_config(const KeyValueConfig& kv) {
    TrainConfig c;
    c.epochs_total = kv.get_int("epochs", c.epochs_total);
    c.epochs_constant_lr = kv.get_int("epochs_constant_lr", c.epochs_constant_lr);
    c.lr_initial = kv.get_double("lr", c.lr_initial);
    c.batch_size = kv.get_int("batch_size", c.batch_size);
    c.adam_beta1 = kv.get_double("adam_beta1", c.adam_beta1);
    c.adam_beta2 = kv.get_double("adam_beta2", c.adam_beta2);
    c.weights.alpha = kv.get_double("alpha", c.weights.alpha);
    c.weights.beta = kv.get_double("beta", c.weights.beta);
    c.weights.gamma = kv.get_double("gamma", c.weights.gamma);
    c.noise = NoiseSpec::parse(kv.get("noise", "none"));
    c.seed = static_cast<std::uint64_t>(kv.get_int64("seed", 0));
    c.scale = net_scale_from_string(kv.get("scale", "tiny"));
    c.class_count = kv.get_int("classes", c.class_count);
    c.pool_capacity = kv.get_int("pool_capacity", c.pool_capacity);
    c.pool_policy = kv.get("pool_policy", "uniform") == "keep-or-swap"
                        ? PoolPolicy::kKeepOrSwap
                        : PoolPolicy::kUniform;
    c.noise_at_eval = kv.get_bool("noise_at_eval", c.noise_at_eval);
    c.checkpoint_every = kv.get_int("checkpoint_every", c.checkpoint_every);
    c.validate();
    return c;
  }

  KeyValueConfig to_config() const {
    KeyValueConfig kv;
    kv.set("epochs", std::to_string(epochs_total));
    kv.set("epochs_constant_lr", std::to_string(epochs_constant_lr));
    kv.set("lr", fmt_double(lr_initial));
    kv.set("batch_size", std::to_string(batch_size));
    kv.set("adam_beta1", fmt_double(adam_beta1));
    kv.set("adam_beta2", fmt_double(adam_beta2));
    kv.set("alpha", fmt_double(weights.alpha));
    kv.set("beta", fmt_double(weights.beta));
    kv.set("gamma", fmt_double(weights.gamma));
    kv.set("noise", noise.to_string());
    kv.set("seed", std::to_string(seed));
    kv.set("scale", to_string(scale));
    kv.set("classes", std::to_string(class_count));
    kv.set("pool_capacity", std::to_string(pool_capacity));
    kv.set("pool_policy", pool_policy == PoolPolicy::kKeepOrSwap ? "keep-or-swap" : "uniform");
    kv.set("noise_at_eval", noise_at_eval ? "true" : "false");
    kv.set("checkpoint_every", std::to_string(checkpoint_every));
    return kv;
  }

  static std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
  }
};

// Constant for the first epochs_constant_lr epochs, then linear decay that
// reaches zero at epochs_total. Epochs are 1-based.
inline double lr_at_epoch(int e, const TrainConfig& cfg) {
  if (e < 1 || e > cfg.epochs_total)
    throw std::invalid_argument("lr_at_epoch: epoch out of range");
  if (e <= cfg.epochs_constant_lr) return cfg.lr_initial;
  return cfg.lr_initial * static_cast<double>(cfg.epochs_total - e) /
         static_cast<double>(cfg.epochs_total - cfg.epochs_constant_lr);
}

struct IterationTrace {
  double j_seg = 0, j_adv = 0, j_rec_x = 0, j_rec_y = 0, j_gen = 0, j_disc = 0;
  double latent_snr_db = 0;
  bool gen_updated = false;
  bool disc_updated = false;
  double lr = 0;
};

// Hook for protocol-conformance instrumentation: called after each of the
// six batch steps with the 1-based step index.
struct StepObserver {
  virtual ~StepObserver() = default;
  virtual void on_step(int step) = 0;
};

class Trainer {
 public:
  explicit Trainer(TrainConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const int s = cfg_.class_count;
    NetworkConfig gc, fc, dc;
    gc.scale = fc.scale = dc.scale = cfg_.scale;
    gc.in_channels = 3;
    gc.out_channels = s;
    gc.first_stage_features = cfg_.scale == NetScale::kFull ? 16 : 8;
    fc.in_channels = s;
    fc.out_channels = 3;
    fc.first_stage_features = cfg_.scale == NetScale::kFull ? 32 : 8;
    if (cfg_.scale == NetScale::kTiny && s >= 8)
      throw std::invalid_argument("Trainer: tiny scale supports class counts below 8");
    dc.in_channels = 3;

    g_ = make_generator(gc, "G");
    f_cfg_first_features_ = fc.first_stage_features;
    f_ = make_generator(fc, "F");
    d_ = make_discriminator(dc, "D");
    init_weights(*g_, cfg_.seed);
    init_weights(*f_, cfg_.seed + 1);
    init_weights(*d_, cfg_.seed + 2);

    std::vector<Param*> gen_params = g_->params();
    gen_params.insert(gen_params.end(), f_->params().begin(), f_->params().end());
    Adam::Hyper hp{cfg_.adam_beta1, cfg_.adam_beta2, 1e-8};
    opt_gen_ = std::make_unique<Adam>(gen_params, hp);
    opt_disc_ = std::make_unique<Adam>(d_->params(), hp);

    pool_ = std::make_unique<ImagePool>(cfg_.pool_capacity, cfg_.seed + 3, cfg_.pool_policy);
    noise_rng_ = Rng(cfg_.seed + 4);
    shuffle_rng_ = Rng(cfg_.seed + 5);
  }

  const TrainConfig& config() const { return cfg_; }
  Network& g() { return *g_; }
  Network& f() { return *f_; }
  Network& d() { return *d_; }
  ImagePool& pool() { return *pool_; }
  Rng& noise_rng() { return noise_rng_; }
  int epoch() const { return epoch_; }
  std::int64_t iteration() const { return iter_; }

  // ---- inference-side forwards (no gradient bookkeeping kept) ----

  SegLogits predict_logits(const Image& x) const {
    Cache c;
    return SegLogits(g_->forward(x.t, c));
  }

  Image reconstruct(const SegLogits& y_hat) const {
    Cache c;
    return Image(f_->forward(y_hat.t, c));
  }

  // One full training iteration on a batch. Steps: load, forward everything,
  // generator loss, generator update (D fixed), discriminator loss,
  // discriminator update (G/F fixed).
  IterationTrace run_iteration(const std::vector<Sample>& batch, double lr,
                               StepObserver* obs = nullptr) {
    if (batch.empty()) throw std::invalid_argument("run_iteration: empty batch");
    const int b = static_cast<int>(batch.size());
    const LossWeights& w = cfg_.weights;

    // step 1: inputs are already loaded in `batch`
    if (obs) obs->on_step(1);

    // step 2: all network and function outputs
    struct PerSample {
      Cache c_g_fwd, c_f_fwd, c_f_bwd, c_g_bwd, c_d_gen;
      SegLogits y_tilde, y_rec_tilde;
      SegProbs y, y_rec;
      InjectResult inj;
      Image x_rec, x_gen;
      RealismMap p_gen;
    };
    std::vector<PerSample> ps(b);
    double snr_sum = 0.0;
    bool snr_inf = false;
    for (int i = 0; i < b; ++i) {
      PerSample& p = ps[i];
      const Sample& smp = batch[i];
      // forward cycle
      p.y_tilde = SegLogits(g_->forward(smp.image.t, p.c_g_fwd));
      check_finite(p.y_tilde.t, "y_tilde (G output)");
      p.y = softmax(p.y_tilde);
      p.inj = inject(p.y_tilde, cfg_.noise, noise_rng_);
      p.x_rec = Image(f_->forward(p.inj.noisy.t, p.c_f_fwd));
      check_finite(p.x_rec.t, "x_rec (F output, forward cycle)");
      // backward cycle
      p.x_gen = Image(f_->forward(smp.mask.t, p.c_f_bwd));
      check_finite(p.x_gen.t, "x (F output, backward cycle)");
      p.y_rec_tilde = SegLogits(g_->forward(p.x_gen.t, p.c_g_bwd));
      check_finite(p.y_rec_tilde.t, "y_rec_tilde (G output, backward cycle)");
      p.y_rec = softmax(p.y_rec_tilde);
      p.p_gen = discriminator_forward(*d_, p.x_gen, p.c_d_gen);
      check_finite(p.p_gen.t, "P_gen (discriminator output)");

      double snr = measure_snr(p.y_tilde, p.inj.noisy);
      if (std::isinf(snr))
        snr_inf = true;
      else
        snr_sum += snr;
    }
    if (obs) obs->on_step(2);

    // step 3: generator loss
    IterationTrace tr;
    tr.lr = lr;
    tr.latent_snr_db = snr_inf ? kInfDb : snr_sum / b;
    for (int i = 0; i < b; ++i) {
      tr.j_seg += seg_loss(ps[i].y, batch[i].mask);
      tr.j_adv += adv_loss(ps[i].p_gen);
      tr.j_rec_x += rec_loss_image(ps[i].x_rec, batch[i].image);
      tr.j_rec_y += rec_loss_seg(ps[i].y_rec, batch[i].mask);
    }
    tr.j_seg /= b;
    tr.j_adv /= b;
    tr.j_rec_x /= b;
    tr.j_rec_y /= b;
    GeneratorLoss gl = generator_loss(tr.j_seg, tr.j_rec_x, tr.j_adv, tr.j_rec_y, w);
    tr.j_gen = gl.total;
    check_finite_scalar(tr.j_gen, "j_gen");
    if (obs) obs->on_step(3);

    // step 4: backprop and update G and F only
    g_->zero_grad();
    f_->zero_grad();
    for (int i = 0; i < b; ++i) {
      PerSample& p = ps[i];
      const Sample& smp = batch[i];
      const double inv_b = 1.0 / b;

      // forward cycle: J_seg reaches y_tilde through softmax; J_rec_X
      // reaches it through F and the noise straight-through.
      Tensor g_probs = seg_loss_grad(p.y, smp.mask);
      g_probs *= w.gamma * w.alpha * inv_b;
      Tensor g_logits = softmax_backward(p.y, g_probs);

      Tensor g_xrec = rec_loss_image_grad(p.x_rec, smp.image);
      g_xrec *= w.gamma * (1.0 - w.alpha) * inv_b;
      Tensor g_noisy = f_->backward(g_xrec, p.c_f_fwd, true);
      g_logits += p.inj.backward(g_noisy);
      g_->backward(g_logits, p.c_g_fwd, true);

      // backward cycle: J_adv through the frozen discriminator, J_rec_Y
      // through G; both meet at the synthetic image x.
      Tensor g_p = adv_loss_grad(p.p_gen);
      g_p *= (1.0 - w.gamma) * w.beta * inv_b;
      Tensor g_p3 = Tensor::from({1, g_p.dim(0), g_p.dim(1)},
                                 std::vector<double>(g_p.data(), g_p.data() + g_p.size()));
      Tensor g_x = d_->backward(g_p3, p.c_d_gen, /*accumulate=*/false);

      Tensor g_yrec_probs = rec_loss_seg_grad(p.y_rec, smp.mask);
      g_yrec_probs *= (1.0 - w.gamma) * (1.0 - w.beta) * inv_b;
      Tensor g_yrec_logits = softmax_backward(p.y_rec, g_yrec_probs);
      g_x += g_->backward(g_yrec_logits, p.c_g_bwd, true);

      f_->backward(g_x, p.c_f_bwd, true);
    }
    opt_gen_->step(lr);
    tr.gen_updated = true;
    if (obs) obs->on_step(4);

    // step 5: discriminator loss on real images and ring-buffered fakes
    struct DiscSample {
      Cache c_real, c_buf;
      RealismMap p_real, p_buf;
    };
    std::vector<DiscSample> ds(b);
    tr.j_disc = 0.0;
    for (int i = 0; i < b; ++i) {
      ds[i].p_real = discriminator_forward(*d_, batch[i].image, ds[i].c_real);
      Image x_prime = pool_->push_and_sample(ps[i].x_gen);
      ds[i].p_buf = discriminator_forward(*d_, x_prime, ds[i].c_buf);
      tr.j_disc += discriminator_loss(ds[i].p_real, ds[i].p_buf);
    }
    tr.j_disc /= b;
    check_finite_scalar(tr.j_disc, "j_disc");
    if (obs) obs->on_step(5);

    // step 6: update the discriminator only
    d_->zero_grad();
    for (int i = 0; i < b; ++i) {
      Tensor gr = discriminator_loss_grad_real(ds[i].p_real);
      gr *= 1.0 / b;
      Tensor gg = discriminator_loss_grad_gen(ds[i].p_buf);
      gg *= 1.0 / b;
      d_->backward(lift_map(gr), ds[i].c_real, true);
      d_->backward(lift_map(gg), ds[i].c_buf, true);
    }
    opt_disc_->step(lr);
    tr.disc_updated = true;
    if (obs) obs->on_step(6);

    ++iter_;
    return tr;
  }

  // Full epoch loop with shuffling, CSV metric logging, per-epoch
  // checkpoints, and a run manifest.
  void train(const Dataset& dataset, const std::string& run_dir) {
    if (dataset.size() == 0) throw std::invalid_argument("train: dataset is empty");
    namespace fs = std::filesystem;
    fs::create_directories(run_dir);

    const std::string manifest_path = run_dir + "/manifest.txt";
    const std::string metrics_path = run_dir + "/metrics.csv";
    const bool fresh = epoch_ == 0;
    write_manifest_header(manifest_path, fresh);

    std::ofstream csv(metrics_path, fresh ? std::ios::trunc : std::ios::app);
    if (!csv) throw std::runtime_error("train: cannot write " + metrics_path);
    if (fresh)
      csv << "epoch,iteration,j_seg,j_adv,j_rec_x,j_rec_y,j_gen,j_disc,latent_snr_db,lr\n";

    std::vector<int> order(dataset.size());

    for (int e = epoch_ + 1; e <= cfg_.epochs_total; ++e) {
      const double lr = lr_at_epoch(e, cfg_);
      // reshuffle from identity so the epoch's order depends only on the
      // shuffle RNG state, which checkpoints carry across resumes
      std::iota(order.begin(), order.end(), 0);
      for (size_t i = order.size(); i > 1; --i) {
        auto j = static_cast<size_t>(shuffle_rng_.uniform_int(0, static_cast<std::int64_t>(i) - 1));
        std::swap(order[i - 1], order[j]);
      }
      double epoch_jseg = 0, epoch_jgen = 0, epoch_jdisc = 0;
      int epoch_iters = 0;
      for (size_t start = 0; start < order.size(); start += cfg_.batch_size) {
        std::vector<Sample> batch;
        for (size_t k = start; k < std::min(order.size(), start + cfg_.batch_size); ++k)
          batch.push_back(dataset.get(order[k]));
        IterationTrace tr = run_iteration(batch, lr);
        epoch_jseg += tr.j_seg;
        epoch_jgen += tr.j_gen;
        epoch_jdisc += tr.j_disc;
        ++epoch_iters;
        csv << e << ',' << iter_ << ',' << csv_num(tr.j_seg) << ',' << csv_num(tr.j_adv)
            << ',' << csv_num(tr.j_rec_x) << ',' << csv_num(tr.j_rec_y) << ','
            << csv_num(tr.j_gen) << ',' << csv_num(tr.j_disc) << ','
            << csv_num(tr.latent_snr_db) << ',' << csv_num(tr.lr) << '\n';
      }
      epoch_ = e;
      append_manifest_epoch(manifest_path, e, epoch_jseg / epoch_iters,
                            epoch_jgen / epoch_iters, epoch_jdisc / epoch_iters);
      if (e % cfg_.checkpoint_every == 0 || e == cfg_.epochs_total)
        save_checkpoint(run_dir + "/checkpoint_epoch_" + std::to_string(e) + ".ckpt");
    }
    csv.flush();
    if (!csv) throw std::runtime_error("train: metrics write failure");
  }

  void save_checkpoint(const std::string& path) const {
    Checkpoint ck;
    ck.meta["version"] = kVersion;
    ck.meta["config"] = cfg_.to_config().to_text();
    ck.meta["epoch"] = std::to_string(epoch_);
    ck.meta["iteration"] = std::to_string(iter_);
    ck.meta["rng_noise"] = noise_rng_.save_state();
    ck.meta["rng_shuffle"] = shuffle_rng_.save_state();
    ck.meta["rng_pool"] = pool_->rng().save_state();
    ck.meta["adam_gen_steps"] = std::to_string(opt_gen_->step_count());
    ck.meta["adam_disc_steps"] = std::to_string(opt_disc_->step_count());
    ck.meta["pool_size"] = std::to_string(pool_->size());
    ck.meta["pool_cursor"] = std::to_string(pool_->cursor());
    for (int i = 0; i < pool_->size(); ++i)
      ck.tensors["pool.slot." + std::to_string(i)] = pool_->slot(i).t;
    store_params(ck, *g_);
    store_params(ck, *f_);
    store_params(ck, *d_);
    store_moments(ck, "adam_gen", *opt_gen_);
    store_moments(ck, "adam_disc", *opt_disc_);
    ck.save(path);
  }

  static std::unique_ptr<Trainer> load_checkpoint(const std::string& path) {
    Checkpoint ck = Checkpoint::load(path);
    std::istringstream cfg_text(ck.require("config"));
    TrainConfig cfg = TrainConfig::from_config(KeyValueConfig::parse(cfg_text));
    auto tr = std::make_unique<Trainer>(cfg);
    tr->epoch_ = std::stoi(ck.require("epoch"));
    tr->iter_ = std::stoll(ck.require("iteration"));
    tr->noise_rng_.load_state(ck.require("rng_noise"));
    tr->shuffle_rng_.load_state(ck.require("rng_shuffle"));
    tr->pool_->rng().load_state(ck.require("rng_pool"));
    {
      int n = std::stoi(ck.require("pool_size"));
      std::vector<Image> slots;
      slots.reserve(n);
      for (int i = 0; i < n; ++i)
        slots.emplace_back(ck.require_tensor("pool.slot." + std::to_string(i)));
      tr->pool_->restore(std::move(slots), std::stoi(ck.require("pool_cursor")));
    }
    load_params(ck, *tr->g_);
    load_params(ck, *tr->f_);
    load_params(ck, *tr->d_);
    load_moments(ck, "adam_gen", *tr->opt_gen_);
    load_moments(ck, "adam_disc", *tr->opt_disc_);
    tr->opt_gen_->set_step_count(std::stoll(ck.require("adam_gen_steps")));
    tr->opt_disc_->set_step_count(std::stoll(ck.require("adam_disc_steps")));
    return tr;
  }

  static std::string csv_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
  }

 private:
  static void check_finite(const Tensor& t, const char* what) {
    if (!t.all_finite())
      throw std::runtime_error(std::string("non-finite tensor: ") + what);
  }
  static void check_finite_scalar(double v, const char* what) {
    if (!std::isfinite(v))
      throw std::runtime_error(std::string("non-finite loss: ") + what);
  }

  static Tensor lift_map(const Tensor& m) {
    return Tensor::from({1, m.dim(0), m.dim(1)},
                        std::vector<double>(m.data(), m.data() + m.size()));
  }

  static void store_params(Checkpoint& ck, const Network& net) {
    for (const Param* p : net.params()) ck.tensors[p->name] = p->value;
  }
  static void load_params(const Checkpoint& ck, Network& net) {
    for (Param* p : net.params()) {
      const Tensor& t = ck.require_tensor(p->name);
      if (!t.same_shape(p->value))
        throw std::runtime_error("checkpoint: shape mismatch for " + p->name);
      p->value = t;
    }
  }
  static void store_moments(Checkpoint& ck, const std::string& prefix, Adam& opt) {
    auto& m1 = opt.moment1();
    auto& m2 = opt.moment2();
    for (size_t i = 0; i < m1.size(); ++i) {
      ck.tensors[prefix + ".m1." + std::to_string(i)] = m1[i];
      ck.tensors[prefix + ".m2." + std::to_string(i)] = m2[i];
    }
  }
  static void load_moments(const Checkpoint& ck, const std::string& prefix, Adam& opt) {
    auto& m1 = opt.moment1();
    auto& m2 = opt.moment2();
    for (size_t i = 0; i < m1.size(); ++i) {
      m1[i] = ck.require_tensor(prefix + ".m1." + std::to_string(i));
      m2[i] = ck.require_tensor(prefix + ".m2." + std::to_string(i));
    }
  }

  void write_manifest_header(const std::string& path, bool fresh) const {
    if (!fresh && std::filesystem::exists(path)) return;
    std::ofstream mf(path);
    if (!mf) throw std::runtime_error("train: cannot write " + path);
    mf << "# run manifest\n";
    mf << "code_version = " << kVersion << "\n";
    mf << "pool_seed = " << cfg_.seed + 3 << "\n";
    mf << cfg_.to_config().to_text();
  }

  void append_manifest_epoch(const std::string& path, int e, double jseg, double jgen,
                             double jdisc) const {
    std::ofstream mf(path, std::ios::app);
    mf << "epoch_" << e << " = j_seg:" << csv_num(jseg) << " j_gen:" << csv_num(jgen)
       << " j_disc:" << csv_num(jdisc) << "\n";
  }

  TrainConfig cfg_;
  int f_cfg_first_features_ = 0;
  std::unique_ptr<Network> g_, f_, d_;
  std::unique_ptr<Adam> opt_gen_, opt_disc_;
  std::unique_ptr<ImagePool> pool_;
  Rng noise_rng_, shuffle_rng_;
  int epoch_ = 0;
  std::int64_t iter_ = 0;
};

}  // namespace cyseg
