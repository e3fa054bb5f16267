// Mask-schedule arithmetic, nesting, retained attention mass, and noise
// filling for the erasure/restoration audit.

#include <gtest/gtest.h>

#include "uwf/peppr.hpp"

using namespace uwf;

namespace {
AttentionMap ramp_map(int h, int w) {
  AttentionMap m;
  m.h = h;
  m.w = w;
  m.values.resize(static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < m.values.size(); ++i)
    m.values[i] = static_cast<double>(i) / m.values.size();
  return m;
}
}  // namespace

TEST(KeepCount, ExactArithmetic) {
  // 96x128 = 12288 pixels at q=30: floor(30*12288/100) = 3686 erased,
  // 8602 kept
  EXPECT_EQ(keep_count(12288, 30), 8602u);
  EXPECT_EQ(keep_count(12288, 0), 12288u);
  EXPECT_EQ(keep_count(12288, 100), 0u);
  EXPECT_EQ(keep_count(10, 55), 10u - 5u);
  EXPECT_EQ(keep_count(7, 50), 7u - 3u);
  EXPECT_THROW(keep_count(10, -1), ConfigError);
  EXPECT_THROW(keep_count(10, 101), ConfigError);
}

TEST(Schedule, OrderingBreaksTiesByIndex) {
  AttentionMap m;
  m.h = 1;
  m.w = 5;
  m.values = {0.5, 0.9, 0.5, 0.1, 0.9};
  auto sched = build_mask_schedule(m);
  EXPECT_EQ(sched.order, (std::vector<int>{1, 4, 0, 2, 3}));
}

TEST(Schedule, ErasureKeepsTopRestorationKeepsBottom) {
  auto m = ramp_map(4, 5);  // importance grows with index
  auto sched = build_mask_schedule(m, 20);
  for (const auto& st : sched.steps) {
    if (st.q != 40) continue;
    // 20 pixels, q=40: erasure keeps the 12 highest, restoration the 8 lowest
    if (st.direction == MaskDirection::Erasure) {
      EXPECT_EQ(st.kept, 12u);
      for (int i = 0; i < 20; ++i) EXPECT_EQ(st.keep[i], i >= 8);
    } else {
      EXPECT_EQ(st.kept, 8u);
      for (int i = 0; i < 20; ++i) EXPECT_EQ(st.keep[i], i < 8);
    }
  }
}

TEST(Schedule, MasksAreNestedAndMassMonotone) {
  AttentionMap m;
  m.h = 8;
  m.w = 16;
  Rng rng(5);
  m.values.resize(128);
  for (auto& v : m.values) v = rng.uniform();
  auto sched = build_mask_schedule(m);

  const MaskStep* prev_e = nullptr;
  const MaskStep* prev_r = nullptr;
  for (const auto& st : sched.steps) {
    const MaskStep*& prev =
        st.direction == MaskDirection::Erasure ? prev_e : prev_r;
    if (prev) {
      if (st.direction == MaskDirection::Erasure) {
        // each erasure keep-set contains the next (larger q keeps less)
        EXPECT_LE(st.kept, prev->kept);
        EXPECT_LE(st.retained_mass, prev->retained_mass + 1e-12);
        for (std::size_t i = 0; i < st.keep.size(); ++i)
          if (st.keep[i]) EXPECT_TRUE(prev->keep[i]);
      } else {
        EXPECT_GE(st.kept, prev->kept);
        EXPECT_GE(st.retained_mass, prev->retained_mass - 1e-12);
        for (std::size_t i = 0; i < st.keep.size(); ++i)
          if (prev->keep[i]) EXPECT_TRUE(st.keep[i]);
      }
    }
    prev = &st;
  }
}

TEST(Schedule, ErasureDominatesRestorationAtEqualKeptCount) {
  // 100 pixels so every q keeps an exact count: erasure(q) and
  // restoration(100-q) keep the same number of pixels, but erasure keeps
  // the highest-attention ones and so retains strictly more mass
  AttentionMap m;
  m.h = 10;
  m.w = 10;
  Rng rng(6);
  m.values.resize(100);
  for (auto& v : m.values) v = rng.uniform();
  auto sched = build_mask_schedule(m);
  for (int q = 10; q <= 90; q += 10) {
    double e = -1, r = -1;
    std::size_t ek = 0, rk = 0;
    for (const auto& st : sched.steps) {
      if (st.direction == MaskDirection::Erasure && st.q == q) {
        e = st.retained_mass;
        ek = st.kept;
      }
      if (st.direction == MaskDirection::Restoration && st.q == 100 - q) {
        r = st.retained_mass;
        rk = st.kept;
      }
    }
    EXPECT_EQ(ek, rk);
    EXPECT_GT(e, r);
  }
}

TEST(Schedule, EndpointsKeepEverythingOrNothing) {
  auto m = ramp_map(3, 4);
  auto sched = build_mask_schedule(m);
  for (const auto& st : sched.steps) {
    bool keep_all = (st.direction == MaskDirection::Erasure && st.q == 0) ||
                    (st.direction == MaskDirection::Restoration && st.q == 100);
    bool keep_none = (st.direction == MaskDirection::Erasure && st.q == 100) ||
                     (st.direction == MaskDirection::Restoration && st.q == 0);
    if (keep_all) {
      EXPECT_EQ(st.kept, 12u);
      EXPECT_NEAR(st.retained_mass, 1.0, 1e-12);
    }
    if (keep_none) {
      EXPECT_EQ(st.kept, 0u);
      EXPECT_NEAR(st.retained_mass, 0.0, 1e-12);
    }
  }
}

TEST(ApplyMask, KeepAllIsBitwiseIdentity) {
  auto m = ramp_map(4, 6);
  auto sched = build_mask_schedule(m);
  Image img(4, 6, 2);
  Rng rng(7);
  for (auto& v : img.pix) v = static_cast<float>(rng.uniform());
  for (const auto& st : sched.steps) {
    if (st.kept != 24u) continue;
    Rng noise(1);
    Image out = apply_mask(img, st, noise);
    EXPECT_EQ(out.pix, img.pix);
    // the noise stream must not have been consumed
    Rng fresh(1);
    EXPECT_EQ(noise.next_u64(), fresh.next_u64());
  }
}

TEST(ApplyMask, NoisesExactlyTheDroppedPixels) {
  auto m = ramp_map(4, 6);
  auto sched = build_mask_schedule(m);
  Image img(4, 6, 2);
  std::fill(img.pix.begin(), img.pix.end(), 50.0f);  // outside N(0,1) range
  for (const auto& st : sched.steps) {
    if (st.q != 50 || st.direction != MaskDirection::Erasure) continue;
    Rng noise(3);
    Image out = apply_mask(img, st, noise);
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < 24; ++i) {
        float v = out.pix[c * 24 + i];
        if (st.keep[i])
          EXPECT_EQ(v, 50.0f);
        else
          EXPECT_LT(std::abs(v), 10.0f);
      }
    // repeat with the same seed is identical, another seed differs
    Rng n2(3), n3(4);
    EXPECT_EQ(apply_mask(img, st, n2).pix, out.pix);
    EXPECT_NE(apply_mask(img, st, n3).pix, out.pix);
  }
}

TEST(ApplyMask, ShapeMismatchRejected) {
  auto m = ramp_map(4, 6);
  auto sched = build_mask_schedule(m);
  Image img(5, 6, 2);
  Rng rng(1);
  EXPECT_THROW(apply_mask(img, sched.steps[0], rng), ShapeError);
}

TEST(Report, MeanAucAveragesRepeats) {
  PepprReport rep;
  for (int r = 0; r < 3; ++r) {
    PepprRow row;
    row.direction = MaskDirection::Erasure;
    row.q = 50;
    row.repeat = r;
    row.auc = {0.8 + 0.01 * r, std::numeric_limits<double>::quiet_NaN()};
    rep.rows.push_back(row);
  }
  EXPECT_NEAR(rep.mean_auc(MaskDirection::Erasure, 50, 0), 0.81, 1e-12);
  EXPECT_TRUE(std::isnan(rep.mean_auc(MaskDirection::Erasure, 50, 1)));
  EXPECT_TRUE(std::isnan(rep.mean_auc(MaskDirection::Restoration, 50, 0)));
}
