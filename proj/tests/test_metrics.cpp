#include <gtest/gtest.h>

#include <cmath>

#include "cyseg/metrics.hpp"
#include "cyseg/rng.hpp"

using namespace cyseg;
using Mode = ConfusionAccumulator::MiouMode;

namespace {

TEST(Snr, ZeroNoiseIsInfinite) {
  SegLogits c(Tensor({2, 4, 4}, 1.0));
  EXPECT_TRUE(std::isinf(measure_snr(c, c)));
  EXPECT_GT(measure_snr(c, c), 0.0);
}

TEST(Snr, ZeroSignalRejected) {
  SegLogits zero(Tensor({2, 4, 4}));
  SegLogits n(Tensor({2, 4, 4}, 0.1));
  EXPECT_THROW(measure_snr(zero, n), std::invalid_argument);
}

TEST(Snr, ClosedFormDecades) {
  // signal energy 100, noise energy 1 -> 20 dB
  SegLogits c(Tensor({1, 10, 10}, 1.0));  // sum_sq = 100
  Tensor noisy = c.t;
  noisy[0] += 1.0;  // noise energy 1
  EXPECT_NEAR(measure_snr(c, SegLogits(noisy)), 20.0, 1e-12);
}

TEST(Snr, EqualEnergiesGiveZeroDb) {
  SegLogits c(Tensor({1, 1, 1}, 2.0));
  SegLogits n(Tensor({1, 1, 1}, 4.0));  // noise (4-2)^2 = 4 = signal
  EXPECT_NEAR(measure_snr(c, n), 0.0, 1e-12);
}

TEST(Snr, RoundTripWithSigma) {
  // sigma_for_snr then the exact-energy noise reproduces the target when
  // the realized noise energy equals npix*sigma^2
  Rng rng(3);
  Tensor t({5, 8, 8});
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-2.0, 2.0);
  SegLogits clean(t);
  for (double target : {-10.0, 0.0, 7.38, 13.84, 25.0}) {
    double sigma = sigma_for_snr(clean, target);
    double npix = 8.0 * 8.0;
    double implied = 10.0 * std::log10(clean.t.sum_sq() / (npix * sigma * sigma));
    EXPECT_NEAR(implied, target, 1e-9);
  }
}

TEST(Psnr, IdenticalIsInfinite) {
  Image a(Tensor({3, 4, 4}, 0.5));
  EXPECT_TRUE(std::isinf(compute_psnr(a, a)));
}

TEST(Psnr, FullScaleErrorIsZeroDb) {
  // constant error of 2 (the peak-to-peak range): MSE = 4 -> 0 dB
  Image a(Tensor({3, 4, 4}, -1.0));
  Image b(Tensor({3, 4, 4}, 1.0));
  EXPECT_NEAR(compute_psnr(a, b), 0.0, 1e-12);
}

TEST(Psnr, ClosedFormConstantError) {
  // error 0.2 everywhere: 10 log10(4/0.04) = 20 dB
  Image a(Tensor({3, 2, 2}, 0.0));
  Image b(Tensor({3, 2, 2}, 0.2));
  EXPECT_NEAR(compute_psnr(a, b), 20.0, 1e-9);
}

TEST(Psnr, AveragesOverAllElements) {
  // single wrong element out of 12: MSE = 1/12
  Tensor a({3, 2, 2}), b({3, 2, 2});
  b[5] = 1.0;
  EXPECT_NEAR(compute_psnr(Image(a), Image(b)), 10.0 * std::log10(4.0 * 12.0), 1e-9);
}

TEST(Iou, PerfectPrediction) {
  ConfusionAccumulator acc(3);
  Tensor labels({4, 4});
  for (std::int64_t i = 0; i < labels.size(); ++i) labels[i] = i % 3;
  acc.accumulate(labels, labels);
  for (int s = 0; s < 3; ++s) EXPECT_DOUBLE_EQ(*acc.iou(s), 1.0);
  EXPECT_DOUBLE_EQ(acc.miou(), 1.0);
}

TEST(Iou, HandComputedCounts) {
  // pred: [0 0 1 1], truth: [0 1 1 2]
  Tensor pred = Tensor::from({1, 4}, {0, 0, 1, 1});
  Tensor truth = Tensor::from({1, 4}, {0, 1, 1, 2});
  ConfusionAccumulator acc(3);
  acc.accumulate(pred, truth);
  // class 0: tp=1 fp=1 fn=0 -> 1/2; class 1: tp=1 fp=1 fn=1 -> 1/3
  // class 2: tp=0 fp=0 fn=1 -> 0
  EXPECT_DOUBLE_EQ(*acc.iou(0), 0.5);
  EXPECT_DOUBLE_EQ(*acc.iou(1), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(*acc.iou(2), 0.0);
  EXPECT_NEAR(acc.miou(Mode::kStrict), (0.5 + 1.0 / 3.0) / 3.0, 1e-15);
  EXPECT_NEAR(acc.miou(Mode::kSkipUndefined), (0.5 + 1.0 / 3.0 + 0.0) / 3.0, 1e-15);
}

TEST(Iou, UndefinedClassReported) {
  // class 2 never appears in pred or truth
  Tensor pred = Tensor::from({1, 2}, {0, 1});
  Tensor truth = Tensor::from({1, 2}, {0, 1});
  ConfusionAccumulator acc(3);
  acc.accumulate(pred, truth);
  EXPECT_FALSE(acc.iou(2).has_value());
  EXPECT_NEAR(acc.miou(Mode::kStrict), 2.0 / 3.0, 1e-15);       // undefined counts as 0
  EXPECT_NEAR(acc.miou(Mode::kSkipUndefined), 1.0, 1e-15);      // undefined skipped
}

TEST(Iou, AllUndefinedRejected) {
  ConfusionAccumulator acc(3);
  EXPECT_THROW(acc.miou(), std::runtime_error);
}

TEST(Iou, IgnoreMaskExcludesPixels) {
  Tensor pred = Tensor::from({1, 3}, {0, 1, 2});
  Tensor truth = Tensor::from({1, 3}, {0, 0, 99});  // 99 out of range but ignored
  Tensor ignore = Tensor::from({1, 3}, {0, 0, 1});
  ConfusionAccumulator acc(3);
  acc.accumulate(pred, truth, &ignore);
  EXPECT_EQ(acc.tp(0), 1);
  EXPECT_EQ(acc.fp(1), 1);
  EXPECT_EQ(acc.fn(0), 1);
  EXPECT_EQ(acc.tp(2) + acc.fp(2) + acc.fn(2), 0);
}

TEST(Iou, OutOfRangeLabelRejected) {
  Tensor pred = Tensor::from({1, 1}, {5});
  Tensor truth = Tensor::from({1, 1}, {0});
  ConfusionAccumulator acc(3);
  EXPECT_THROW(acc.accumulate(pred, truth), std::invalid_argument);
}

TEST(Iou, MergeEqualsSinglePassAnyOrder) {
  Rng rng(21);
  const int s = 5;
  std::vector<Tensor> preds, truths;
  for (int k = 0; k < 6; ++k) {
    Tensor p({8, 8}), t({8, 8});
    for (std::int64_t i = 0; i < p.size(); ++i) {
      p[i] = rng.uniform_int(0, s - 1);
      t[i] = rng.uniform_int(0, s - 1);
    }
    preds.push_back(p);
    truths.push_back(t);
  }
  ConfusionAccumulator whole(s);
  for (int k = 0; k < 6; ++k) whole.accumulate(preds[k], truths[k]);
  ConfusionAccumulator a(s), b(s);
  for (int k = 0; k < 3; ++k) a.accumulate(preds[k], truths[k]);
  for (int k = 3; k < 6; ++k) b.accumulate(preds[k], truths[k]);
  // merge in both orders
  ConfusionAccumulator ab = a;
  ab.merge(b);
  ConfusionAccumulator ba = b;
  ba.merge(a);
  for (int c = 0; c < s; ++c) {
    EXPECT_EQ(ab.tp(c), whole.tp(c));
    EXPECT_EQ(ab.fp(c), whole.fp(c));
    EXPECT_EQ(ab.fn(c), whole.fn(c));
    EXPECT_EQ(ba.tp(c), whole.tp(c));
  }
  EXPECT_DOUBLE_EQ(ab.miou(), whole.miou());
}

TEST(Iou, MatchesPerPixelOracleOnRandomPairs) {
  Rng rng(31);
  const int s = 4;
  for (int rep = 0; rep < 25; ++rep) {
    Tensor p({8, 8}), t({8, 8});
    for (std::int64_t i = 0; i < p.size(); ++i) {
      p[i] = rng.uniform_int(0, s - 1);
      t[i] = rng.uniform_int(0, s - 1);
    }
    // brute-force set-based oracle
    for (int c = 0; c < s; ++c) {
      std::int64_t inter = 0, uni = 0;
      for (std::int64_t i = 0; i < p.size(); ++i) {
        bool in_p = static_cast<int>(p[i]) == c;
        bool in_t = static_cast<int>(t[i]) == c;
        inter += in_p && in_t;
        uni += in_p || in_t;
      }
      ConfusionAccumulator acc(s);
      acc.accumulate(p, t);
      auto v = acc.iou(c);
      if (uni == 0) {
        EXPECT_FALSE(v.has_value());
      } else {
        EXPECT_DOUBLE_EQ(*v, static_cast<double>(inter) / uni);
      }
    }
  }
}

}  // namespace
