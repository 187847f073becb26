#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "cyseg/losses.hpp"
#include "cyseg/rng.hpp"

using namespace cyseg;

namespace {

Tensor random_probs(int s, int h, int w, Rng& rng) {
  // strictly interior simplex points so finite differences stay smooth
  Tensor t({s, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double z = 0;
      for (int c = 0; c < s; ++c) {
        double v = rng.uniform(0.1, 1.0);
        t.at(c, y, x) = v;
        z += v;
      }
      for (int c = 0; c < s; ++c) t.at(c, y, x) /= z;
    }
  return t;
}

Tensor random_labels_one_hot(int s, int h, int w, Rng& rng) {
  Tensor labels({h, w});
  for (std::int64_t i = 0; i < labels.size(); ++i)
    labels[i] = static_cast<double>(rng.uniform_int(0, s - 1));
  return one_hot_encode(labels, s).t;
}

// central-difference check of an analytic gradient
void check_gradient(const Tensor& point, const Tensor& analytic,
                    const std::function<double(const Tensor&)>& f,
                    double eps = 1e-6, double tol = 1e-6) {
  Tensor x = point;
  for (std::int64_t i = 0; i < x.size(); ++i) {
    double keep = x[i];
    x[i] = keep + eps;
    double hi = f(x);
    x[i] = keep - eps;
    double lo = f(x);
    x[i] = keep;
    double fd = (hi - lo) / (2.0 * eps);
    EXPECT_NEAR(analytic[i], fd, tol * std::max(1.0, std::abs(fd)))
        << "element " << i;
  }
}

TEST(SegLoss, UniformPrediction) {
  const int s = 4;
  SegProbs y(Tensor({s, 2, 2}, 1.0 / s));
  Rng rng(1);
  OneHotMask yb(random_labels_one_hot(s, 2, 2, rng));
  EXPECT_NEAR(seg_loss(y, yb), std::log(static_cast<double>(s)), 1e-12);
}

TEST(SegLoss, PerfectPredictionIsZero) {
  Rng rng(2);
  Tensor yb = random_labels_one_hot(3, 4, 4, rng);
  EXPECT_DOUBLE_EQ(seg_loss(SegProbs(yb), OneHotMask(yb)), 0.0);
}

TEST(SegLoss, FloorCapsTheLoss) {
  // true-class probability of zero is floored at 1e-12, so each pixel
  // contributes -log(1e-12)
  Tensor y({2, 1, 1});
  y.at(0, 0, 0) = 0.0;
  y.at(1, 0, 0) = 1.0;
  Tensor labels({1, 1});
  OneHotMask yb = one_hot_encode(labels, 2);  // true class 0
  EXPECT_NEAR(seg_loss(SegProbs(y), yb), -std::log(kProbFloor), 1e-9);
}

TEST(SegLoss, MatchesScalarOracle) {
  Rng rng(3);
  const int s = 3, h = 2, w = 3;
  SegProbs y(random_probs(s, h, w, rng));
  OneHotMask yb(random_labels_one_hot(s, h, w, rng));
  double expect = 0;
  for (int yy = 0; yy < h; ++yy)
    for (int xx = 0; xx < w; ++xx)
      for (int c = 0; c < s; ++c)
        expect -= yb.t.at(c, yy, xx) * std::log(std::max(y.t.at(c, yy, xx), kProbFloor));
  expect /= h * w;
  EXPECT_NEAR(seg_loss(y, yb), expect, 1e-12);
}

TEST(SegLoss, GradientMatchesFiniteDifference) {
  Rng rng(5);
  const int s = 3, h = 2, w = 2;
  SegProbs y(random_probs(s, h, w, rng));
  OneHotMask yb(random_labels_one_hot(s, h, w, rng));
  Tensor g = seg_loss_grad(y, yb);
  check_gradient(y.t, g, [&](const Tensor& t) { return seg_loss(SegProbs(t), yb); });
}

TEST(SegLoss, ShapeMismatchRejected) {
  SegProbs y(Tensor({2, 2, 2}, 0.5));
  OneHotMask yb(Tensor({2, 2, 3}));
  EXPECT_THROW(seg_loss(y, yb), std::invalid_argument);
}

TEST(AdvLoss, AllOnesIsZero) {
  RealismMap p(Tensor({4, 4}, 1.0));
  EXPECT_DOUBLE_EQ(adv_loss(p), 0.0);
}

TEST(AdvLoss, AllHalvesIsQuarter) {
  RealismMap p(Tensor({6, 14}, 0.5));
  EXPECT_DOUBLE_EQ(adv_loss(p), 0.25);
}

TEST(AdvLoss, GradientMatchesFiniteDifference) {
  Rng rng(7);
  Tensor t({3, 5});
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(0.0, 1.0);
  Tensor g = adv_loss_grad(RealismMap(t));
  check_gradient(t, g, [](const Tensor& x) { return adv_loss(RealismMap(x)); });
}

TEST(RecImage, IdenticalImagesGiveZero) {
  Image a(Tensor({3, 4, 4}, 0.3));
  EXPECT_DOUBLE_EQ(rec_loss_image(a, a), 0.0);
}

TEST(RecImage, NormalizedByPixelsNotElements) {
  // constant difference d on every element: loss = C*|d|, not |d|
  const double d = 0.25;
  Image rec(Tensor({3, 8, 8}, d));
  Image bar(Tensor({3, 8, 8}, 0.0));
  EXPECT_NEAR(rec_loss_image(rec, bar), 3.0 * d, 1e-12);
}

TEST(RecImage, MatchesScalarOracle) {
  Rng rng(9);
  Tensor a({3, 4, 5}), b({3, 4, 5});
  for (std::int64_t i = 0; i < a.size(); ++i) {
    a[i] = rng.uniform(-1.0, 1.0);
    b[i] = rng.uniform(-1.0, 1.0);
  }
  double expect = 0;
  for (std::int64_t i = 0; i < a.size(); ++i) expect += std::abs(a[i] - b[i]);
  expect /= 4.0 * 5.0;
  EXPECT_NEAR(rec_loss_image(Image(a), Image(b)), expect, 1e-12);
}

TEST(RecImage, SubgradientMatchesFiniteDifferenceAwayFromKinks) {
  Rng rng(11);
  Tensor a({3, 3, 3}), b({3, 3, 3});
  for (std::int64_t i = 0; i < a.size(); ++i) {
    a[i] = rng.uniform(-1.0, 1.0);
    b[i] = rng.uniform(-1.0, 1.0);
    if (std::abs(a[i] - b[i]) < 1e-3) a[i] += 2e-3;  // keep clear of |.| kink
  }
  Tensor g = rec_loss_image_grad(Image(a), Image(b));
  check_gradient(a, g, [&](const Tensor& t) { return rec_loss_image(Image(t), Image(b)); });
}

TEST(RecSeg, SharesSegLossKernel) {
  Rng rng(13);
  SegProbs y(random_probs(4, 3, 3, rng));
  OneHotMask yb(random_labels_one_hot(4, 3, 3, rng));
  EXPECT_DOUBLE_EQ(rec_loss_seg(y, yb), seg_loss(y, yb));
  EXPECT_EQ(rec_loss_seg_grad(y, yb), seg_loss_grad(y, yb));
}

TEST(GeneratorLoss, DefaultWeights) {
  LossWeights w;
  EXPECT_DOUBLE_EQ(w.alpha, 0.5);
  EXPECT_DOUBLE_EQ(w.beta, 1.0 / 11.0);
  EXPECT_DOUBLE_EQ(w.gamma, 20.0 / 31.0);
  w.validate();
}

TEST(GeneratorLoss, ClosedFormComposition) {
  LossWeights w;
  w.alpha = 0.25;
  w.beta = 0.5;
  w.gamma = 0.75;
  GeneratorLoss g = generator_loss(2.0, 4.0, 6.0, 8.0, w);
  EXPECT_DOUBLE_EQ(g.forward, 0.25 * 2.0 + 0.75 * 4.0);
  EXPECT_DOUBLE_EQ(g.backward, 0.5 * 6.0 + 0.5 * 8.0);
  EXPECT_DOUBLE_EQ(g.total, 0.75 * g.forward + 0.25 * g.backward);
}

TEST(GeneratorLoss, AlphaOneDropsImageReconstruction) {
  LossWeights w;
  w.alpha = 1.0;
  w.gamma = 1.0;
  GeneratorLoss g = generator_loss(3.0, 999.0, 777.0, 555.0, w);
  EXPECT_DOUBLE_EQ(g.total, 3.0);
}

TEST(GeneratorLoss, RejectsOutOfRangeWeights) {
  LossWeights w;
  w.beta = 1.5;
  EXPECT_THROW(generator_loss(1, 1, 1, 1, w), std::invalid_argument);
}

TEST(DiscLoss, PerfectDiscriminatorIsZero) {
  RealismMap real(Tensor({3, 3}, 1.0));
  RealismMap gen(Tensor({3, 3}, 0.0));
  EXPECT_DOUBLE_EQ(discriminator_loss(real, gen), 0.0);
}

TEST(DiscLoss, MaximallyConfusedIsHalf) {
  // both maps at 0.5: (0.5-1)^2 + 0.5^2 = 0.5 per patch, no extra 1/2
  RealismMap real(Tensor({5, 7}, 0.5));
  RealismMap gen(Tensor({5, 7}, 0.5));
  EXPECT_DOUBLE_EQ(discriminator_loss(real, gen), 0.5);
}

TEST(DiscLoss, GradientsMatchFiniteDifference) {
  Rng rng(17);
  Tensor pr({2, 3}), pg({2, 3});
  for (std::int64_t i = 0; i < pr.size(); ++i) {
    pr[i] = rng.uniform(0.0, 1.0);
    pg[i] = rng.uniform(0.0, 1.0);
  }
  Tensor gr = discriminator_loss_grad_real(RealismMap(pr));
  Tensor gg = discriminator_loss_grad_gen(RealismMap(pg));
  check_gradient(pr, gr, [&](const Tensor& t) {
    return discriminator_loss(RealismMap(t), RealismMap(pg));
  });
  check_gradient(pg, gg, [&](const Tensor& t) {
    return discriminator_loss(RealismMap(pr), RealismMap(t));
  });
}

}  // namespace
