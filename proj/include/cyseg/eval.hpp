#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "cyseg/data.hpp"
#include "cyseg/metrics.hpp"
#include "cyseg/noise.hpp"
#include "cyseg/trainer.hpp"

namespace cyseg {

struct EvalReport {
  int class_count = 0;
  std::vector<std::optional<double>> class_iou;
  double miou_strict = 0;
  double miou_skip = 0;
  double mean_psnr_db = 0;
  double mean_snr_db = 0;  // measured latent SNR; inf when no noise
  std::string label;
};

// mIoU is always computed on the noise-free segmentation branch; the
// reconstruction PSNR uses the run's noise spec when noise_at_eval is set.
inline EvalReport evaluate(const Trainer& trainer, const Dataset& dataset,
                           bool noise_at_eval, std::uint64_t eval_seed = 1234) {
  if (dataset.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  const TrainConfig& cfg = trainer.config();
  ConfusionAccumulator conf(cfg.class_count);
  Rng rng(eval_seed);
  double psnr_sum = 0.0, snr_sum = 0.0;
  bool psnr_inf = false, snr_inf = false;
  NoiseSpec eval_noise = noise_at_eval ? cfg.noise : NoiseSpec{};

  for (int i = 0; i < dataset.size(); ++i) {
    Sample smp = dataset.get(i);
    if (smp.mask.classes() != cfg.class_count)
      throw std::invalid_argument("evaluate: class count mismatch between checkpoint and dataset");
    SegLogits y_tilde = trainer.predict_logits(smp.image);
    Tensor pred = argmax_mask(y_tilde);
    conf.accumulate(pred, smp.labels, smp.ignore_mask.empty() ? nullptr : &smp.ignore_mask);

    InjectResult inj = inject(y_tilde, eval_noise, rng);
    Image x_rec = trainer.reconstruct(inj.noisy);
    double psnr = compute_psnr(smp.image, x_rec);
    if (std::isinf(psnr)) psnr_inf = true; else psnr_sum += psnr;
    double snr = measure_snr(y_tilde, inj.noisy);
    if (std::isinf(snr)) snr_inf = true; else snr_sum += snr;
  }

  EvalReport r;
  r.class_count = cfg.class_count;
  for (int s = 0; s < cfg.class_count; ++s) r.class_iou.push_back(conf.iou(s));
  r.miou_strict = conf.miou(ConfusionAccumulator::MiouMode::kStrict);
  r.miou_skip = conf.miou(ConfusionAccumulator::MiouMode::kSkipUndefined);
  r.mean_psnr_db = psnr_inf ? kInfDb : psnr_sum / dataset.size();
  r.mean_snr_db = snr_inf ? kInfDb : snr_sum / dataset.size();
  return r;
}

inline std::string fmt_db(double v) {
  if (std::isinf(v)) return "inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// One row per class IoU, then a summary row.
inline void write_report_csv(const EvalReport& r, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_report_csv: cannot write " + path);
  f << "class,iou\n";
  for (int s = 0; s < r.class_count; ++s) {
    f << s << ',';
    if (r.class_iou[s])
      f << fmt_db(*r.class_iou[s]);
    else
      f << "undefined";
    f << '\n';
  }
  f << "summary,miou_strict:" << fmt_db(r.miou_strict)
    << ";miou_skip:" << fmt_db(r.miou_skip)
    << ";psnr_db:" << fmt_db(r.mean_psnr_db)
    << ";snr_db:" << fmt_db(r.mean_snr_db) << '\n';
  if (!f) throw std::runtime_error("write_report_csv: write failure");
}

struct WatermarkProbeResult {
  double mean_psnr_soft_db = 0;   // F applied to the raw logits
  double mean_psnr_hard_db = 0;   // F applied to the hard extreme-level latent
  double delta_db = 0;            // soft - hard; large => F leans on sub-max structure
  int images = 0;
};

// Replaces the latent with its hard argmax rendering at the codebook
// extremes (+1 for the winning class, -1 elsewhere) and reports how much
// reconstruction quality that costs.
inline SegLogits harden_latent(const SegLogits& y_tilde) {
  Tensor hard(y_tilde.t.shape());
  hard.fill(-1.0);
  Tensor am = argmax_mask(y_tilde);
  for (int y = 0; y < y_tilde.height(); ++y)
    for (int x = 0; x < y_tilde.width(); ++x)
      hard.at(static_cast<int>(am.at(y, x)), y, x) = 1.0;
  return SegLogits(std::move(hard));
}

inline WatermarkProbeResult watermark_probe(const Trainer& trainer, const Dataset& dataset) {
  if (dataset.size() == 0) throw std::invalid_argument("watermark_probe: empty dataset");
  WatermarkProbeResult r;
  double soft_sum = 0, hard_sum = 0;
  for (int i = 0; i < dataset.size(); ++i) {
    Sample smp = dataset.get(i);
    SegLogits y_tilde = trainer.predict_logits(smp.image);
    double psnr_soft = compute_psnr(smp.image, trainer.reconstruct(y_tilde));
    double psnr_hard = compute_psnr(smp.image, trainer.reconstruct(harden_latent(y_tilde)));
    soft_sum += psnr_soft;
    hard_sum += psnr_hard;
  }
  r.images = dataset.size();
  r.mean_psnr_soft_db = soft_sum / r.images;
  r.mean_psnr_hard_db = hard_sum / r.images;
  r.delta_db = r.mean_psnr_soft_db - r.mean_psnr_hard_db;
  return r;
}

}  // namespace cyseg
