// Synthetic population invariants: label consistency, lesion-region
// geometry, determinism, and the distribution-shifted variant.

#include <gtest/gtest.h>

#include "uwf/synthdata.hpp"

using namespace uwf;

namespace {
GenConfig small_cfg(std::uint64_t seed = 1) {
  GenConfig cfg;
  cfg.n_patients = 120;
  cfg.seed = seed;
  return cfg;
}
}  // namespace

TEST(Population, LabelsAreConsistent) {
  Dataset ds = generate_population(small_cfg());
  ASSERT_GT(ds.samples.size(), 100u);
  for (const auto& s : ds.samples) {
    bool any = false;
    for (int d = 0; d < kNumDiseases; ++d) {
      double v = s.labels[disease_to_label(d)];
      EXPECT_TRUE(v == 0.0 || v == 1.0);
      any = any || v == 1.0;
    }
    EXPECT_EQ(s.labels[0], any ? 1.0 : 0.0);
    EXPECT_GE(s.age, 18.0);
    EXPECT_LE(s.age, 95.0);
    EXPECT_EQ(s.pixels.h, 96);
    EXPECT_EQ(s.pixels.w, 128);
    EXPECT_EQ(s.pixels.c, 2);
    for (float v : s.pixels.pix) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
}

TEST(Population, PatientImagesShareDemographicsAndLabels) {
  Dataset ds = generate_population(small_cfg(3));
  for (const auto& [pid, rec] : ds.patients) {
    int first = rec.eyes.begin()->second.front();
    for (const auto& [eye, idxs] : rec.eyes) {
      EXPECT_LE(idxs.size(), 4u);
      for (int i : idxs) {
        EXPECT_EQ(ds.samples[i].age, ds.samples[first].age);
        EXPECT_EQ(ds.samples[i].sex, ds.samples[first].sex);
        EXPECT_EQ(ds.samples[i].labels, ds.samples[first].labels);
      }
    }
  }
}

TEST(Population, SameSeedIsByteIdentical) {
  Dataset a = generate_population(small_cfg(9));
  Dataset b = generate_population(small_cfg(9));
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].path, b.samples[i].path);
    EXPECT_EQ(a.samples[i].pixels.pix, b.samples[i].pixels.pix);
  }
  Dataset c = generate_population(small_cfg(10));
  bool differs = a.samples.size() != c.samples.size();
  for (std::size_t i = 0; !differs && i < a.samples.size(); ++i)
    differs = a.samples[i].pixels.pix != c.samples[i].pixels.pix;
  EXPECT_TRUE(differs);
}

TEST(LesionRegions, AreaBoundsAndCentralOverlap) {
  const int h = 96, w = 128;
  // the central high-attention analogue: middle third of the image
  auto central = [&](int i, int j) {
    return i >= h / 3 && i < 2 * h / 3 && j >= w / 3 && j < 2 * w / 3;
  };
  for (int label = 1; label < kNumLabels; ++label) {
    auto mask = SynthGenerator::lesion_region(label, Eye::Left, h, w);
    std::size_t area = 0, central_overlap = 0;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        if (mask[static_cast<std::size_t>(i) * w + j]) {
          ++area;
          if (central(i, j)) ++central_overlap;
        }
    EXPECT_GT(area, 0u) << "label " << label;
    EXPECT_LE(area, static_cast<std::size_t>(0.15 * h * w)) << "label " << label;
    EXPECT_GT(central_overlap, 0u) << "label " << label;
  }
}

TEST(LesionRegions, RightEyeIsMirrored) {
  const int h = 48, w = 64;
  for (int label = 1; label < kNumLabels; ++label) {
    auto left = SynthGenerator::lesion_region(label, Eye::Left, h, w);
    auto right = SynthGenerator::lesion_region(label, Eye::Right, h, w);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        EXPECT_EQ(left[static_cast<std::size_t>(i) * w + j],
                  right[static_cast<std::size_t>(i) * w + (w - 1 - j)]);
  }
}

TEST(LesionRegions, DiseasedLabelHasNoRegion) {
  EXPECT_THROW(SynthGenerator::lesion_region(0, Eye::Left, 8, 8),
               ContractError);
  EXPECT_THROW(SynthGenerator::lesion_region(8, Eye::Left, 8, 8),
               ContractError);
}

TEST(LesionRegions, LesionRaisesInRegionIntensity) {
  // a diseased eye should be brighter inside its lesion region than a
  // healthy render of the same background statistics
  GenConfig cfg = small_cfg(21);
  cfg.n_patients = 400;
  Dataset ds = generate_population(cfg);
  for (int d = 0; d < kNumDiseases; ++d) {
    const int label = disease_to_label(d);
    double in_pos = 0, in_neg = 0;
    std::size_t n_pos = 0, n_neg = 0;
    for (const auto& s : ds.samples) {
      auto mask = SynthGenerator::lesion_region(label, s.eye, s.pixels.h,
                                                s.pixels.w);
      double acc = 0;
      std::size_t cnt = 0;
      for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) {
          acc += s.pixels.pix[i] + s.pixels.pix[mask.size() + i];
          ++cnt;
        }
      if (s.labels[label] == 1.0) {
        in_pos += acc / cnt;
        ++n_pos;
      } else {
        in_neg += acc / cnt;
        ++n_neg;
      }
    }
    if (n_pos == 0) continue;  // ultra-rare disease may miss a small draw
    EXPECT_GT(in_pos / n_pos, in_neg / n_neg + 0.05) << "disease " << d;
  }
}

TEST(Prevalence, InvalidTablesRejected) {
  GenConfig cfg;
  cfg.prevalence.healthy = 0.9;  // sums beyond 1 with the disease mass
  EXPECT_THROW(SynthGenerator{cfg}, ConfigError);
  GenConfig cfg2;
  cfg2.prevalence.disease[0] = -0.1;
  EXPECT_THROW(SynthGenerator{cfg2}, ConfigError);
  GenConfig cfg3;
  cfg3.n_patients = 0;
  EXPECT_THROW(SynthGenerator{cfg3}, ConfigError);
}

TEST(ShiftedSet, PreservesLabelsAndShape) {
  Dataset ds = generate_population(small_cfg(4));
  Dataset shifted = generate_shifted(77, ds);
  ASSERT_EQ(shifted.samples.size(), ds.samples.size());
  bool any_pixels_differ = false, any_width_differs = false;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    EXPECT_EQ(shifted.samples[i].labels, ds.samples[i].labels);
    EXPECT_EQ(shifted.samples[i].patient_id, ds.samples[i].patient_id);
    EXPECT_EQ(shifted.samples[i].pixels.h, ds.samples[i].pixels.h);
    EXPECT_NE(shifted.samples[i].path, ds.samples[i].path);
    if (shifted.samples[i].pixels.w != ds.samples[i].pixels.w)
      any_width_differs = true;
    else if (shifted.samples[i].pixels.pix != ds.samples[i].pixels.pix)
      any_pixels_differ = true;
  }
  EXPECT_TRUE(any_width_differs);
  EXPECT_TRUE(any_pixels_differ || any_width_differs);
}
