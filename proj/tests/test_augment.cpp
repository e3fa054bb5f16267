// Augmentation transforms, mixup pairing semantics, and label smoothing.

#include <gtest/gtest.h>

#include <cmath>

#include "uwf/augment.hpp"

using namespace uwf;

namespace {
Image noise_image(int h, int w, int c, std::uint64_t seed) {
  Image img(h, w, c);
  Rng rng(seed);
  for (auto& v : img.pix) v = static_cast<float>(rng.uniform());
  return img;
}
}  // namespace

TEST(LabelSmoothing, AsymmetricEndpoints) {
  EXPECT_DOUBLE_EQ(smooth_label(0.0), 0.05);
  EXPECT_DOUBLE_EQ(smooth_label(1.0), 0.99);
  // linear: a mixup-blended target maps to the blend of smoothed targets
  const double lam = 0.37;
  EXPECT_NEAR(smooth_label(lam * 1.0 + (1 - lam) * 0.0),
              lam * smooth_label(1.0) + (1 - lam) * smooth_label(0.0), 1e-15);
}

TEST(Mixup, BlendIsExactConvexCombination) {
  MixupSample a{noise_image(4, 5, 2, 1), {}};
  MixupSample b{noise_image(4, 5, 2, 2), {}};
  a.labels.fill(1.0);
  b.labels.fill(0.0);
  b.labels[3] = 1.0;
  const double lam = 0.25;
  auto m = blend(a, b, lam);
  for (std::size_t i = 0; i < m.image.pix.size(); ++i)
    EXPECT_NEAR(m.image.pix[i], lam * a.image.pix[i] + (1 - lam) * b.image.pix[i],
                1e-6);
  EXPECT_NEAR(m.labels[0], 0.25, 1e-15);
  EXPECT_NEAR(m.labels[3], 1.0, 1e-15);
}

TEST(Mixup, EmitsTwoBlendsPerInputWithCyclicPairing) {
  AugmentConfig cfg;
  std::vector<MixupSample> in;
  for (int i = 0; i < 5; ++i) {
    MixupSample s{Image(2, 2, 1), {}};
    std::fill(s.image.pix.begin(), s.image.pix.end(), static_cast<float>(i));
    s.labels.fill(0.0);
    s.labels[0] = i;  // encode identity in a label slot
    in.push_back(std::move(s));
  }
  Rng rng(3);
  auto out = mixup_batch(in, cfg, rng);
  ASSERT_EQ(out.size(), 10u);
  // every output is a convex combination of exactly two inputs, and pixel
  // blends agree with label blends
  for (const auto& m : out) {
    double lv = m.labels[0];
    EXPECT_NEAR(m.image.pix[0], lv, 1e-5);
    EXPECT_GE(lv, 0.0);
    EXPECT_LE(lv, 4.0);
  }
}

TEST(Mixup, SingletonBatchPassesThrough) {
  AugmentConfig cfg;
  std::vector<MixupSample> in(1);
  in[0].image = noise_image(3, 3, 1, 7);
  in[0].labels.fill(0.0);
  Rng rng(1);
  auto out = mixup_batch(in, cfg, rng);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].image.pix, in[0].image.pix);
}

TEST(Mixup, BetaSamplerMatchesDistribution) {
  // Johnk's sampler for Beta(0.6, 0.6): symmetric around 0.5, U-shaped;
  // check mean and that mass concentrates near the endpoints
  Rng rng(99);
  double sum = 0.0;
  int extreme = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double x = rng.beta(0.6, 0.6);
    EXPECT_GT(x, 0.0);
    EXPECT_LT(x, 1.0);
    sum += x;
    if (x < 0.1 || x > 0.9) ++extreme;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.01);
  // P(X<0.1) + P(X>0.9) for Beta(0.6,0.6) is about 0.354
  EXPECT_NEAR(double(extreme) / n, 0.354, 0.02);
}

TEST(Transforms, ChannelScaleIsPerChannel) {
  Image img(2, 2, 2);
  std::fill(img.pix.begin(), img.pix.end(), 1.0f);
  channel_scale(img, 1, 0.5);
  EXPECT_FLOAT_EQ(img.at(0, 0, 0), 1.0f);
  EXPECT_FLOAT_EQ(img.at(1, 0, 0), 0.5f);
}

TEST(Transforms, BlurPreservesConstantAndMass) {
  Image img(9, 9, 1);
  std::fill(img.pix.begin(), img.pix.end(), 0.4f);
  gaussian_blur(img, 7, 0.8);
  for (float v : img.pix) EXPECT_NEAR(v, 0.4f, 1e-5f);

  // an impulse spreads but keeps total mass (away from borders)
  Image imp(15, 15, 1);
  imp.at(0, 7, 7) = 1.0f;
  gaussian_blur(imp, 7, 1.0);
  double mass = 0.0;
  for (float v : imp.pix) mass += v;
  EXPECT_NEAR(mass, 1.0, 1e-4);
  EXPECT_LT(imp.at(0, 7, 7), 0.5f);
}

TEST(Transforms, AffineIdentityIsNoOp) {
  Image img = noise_image(8, 10, 2, 5);
  Image copy = img;
  affine_transform(copy, 0.0, 1.0, 0.0);
  for (std::size_t i = 0; i < img.pix.size(); ++i)
    EXPECT_NEAR(copy.pix[i], img.pix[i], 1e-5f);
}

TEST(Transforms, AffineRotation180IsFlipBoth) {
  Image img = noise_image(6, 6, 1, 8);
  Image rot = img;
  affine_transform(rot, 180.0, 1.0, 0.0);
  Image flipped = hflip(vflip(img));
  for (std::size_t i = 0; i < img.pix.size(); ++i)
    EXPECT_NEAR(rot.pix[i], flipped.pix[i], 1e-4f);
}

TEST(Transforms, RandomEraseFillsOneRectangle) {
  Image img(20, 30, 2);
  std::fill(img.pix.begin(), img.pix.end(), 5.0f);  // sentinel outside N(0,1)
  Rng rng(4);
  random_erase(img, rng, 0.1, 0.1, 1.0, 1.0);
  // area 0.1 of 600 = 60 px, aspect 1 -> 8x8 = 64 erased pixels per channel
  int changed0 = 0, changed1 = 0;
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 30; ++j) {
      if (img.at(0, i, j) != 5.0f) ++changed0;
      if (img.at(1, i, j) != 5.0f) ++changed1;
    }
  EXPECT_EQ(changed0, 64);
  EXPECT_EQ(changed1, 64);
}

TEST(Pipeline, DeterministicGivenSeed) {
  AugmentConfig cfg;
  Image a = noise_image(16, 24, 2, 6);
  Image b = a;
  Rng r1(123), r2(123);
  apply_augmentations(a, cfg, r1);
  apply_augmentations(b, cfg, r2);
  EXPECT_EQ(a.pix, b.pix);
}

TEST(Pipeline, ConfigValidation) {
  AugmentConfig cfg;
  cfg.p_erase = 1.2;
  EXPECT_THROW(cfg.validate(), ConfigError);
  AugmentConfig cfg2;
  cfg2.erase_area_lo = 0.5;
  cfg2.erase_area_hi = 0.1;
  EXPECT_THROW(cfg2.validate(), ConfigError);
}
