// Eye-weighted metrics: AUC against a brute-force pairwise oracle, Brier,
// ROC sweep, and FPR-constrained threshold selection.

#include <gtest/gtest.h>

#include <cmath>

#include "uwf/eval.hpp"

using namespace uwf;

namespace {

// O(n^2) weighted Mann-Whitney with half credit for ties
double auc_oracle(const std::vector<double>& s, const std::vector<int>& y,
                  const std::vector<double>& w) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      double ww = w[i] * w[j];
      den += ww;
      if (s[i] > s[j])
        num += ww;
      else if (s[i] == s[j])
        num += 0.5 * ww;
    }
  }
  return num / den;
}

}  // namespace

TEST(Auc, HandComputedCase) {
  // scores [0.9, 0.8, 0.4, 0.3], labels [1, 0, 1, 0]: 3 of 4 pairs
  // concordant -> 0.75
  std::vector<double> s = {0.9, 0.8, 0.4, 0.3};
  std::vector<int> y = {1, 0, 1, 0};
  std::vector<double> w = {1, 1, 1, 1};
  EXPECT_NEAR(weighted_auc(s, y, w), 0.75, 1e-12);
}

TEST(Auc, MatchesBruteForceOracle) {
  Rng rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    int n = 5 + static_cast<int>(rng.below(40));
    std::vector<double> s(n), w(n);
    std::vector<int> y(n);
    bool has_pos = false, has_neg = false;
    for (int i = 0; i < n; ++i) {
      // quantized scores so ties occur often
      s[i] = std::round(rng.uniform() * 8.0) / 8.0;
      y[i] = rng.bernoulli(0.4) ? 1 : 0;
      w[i] = rng.uniform(0.25, 1.0);
      has_pos = has_pos || y[i];
      has_neg = has_neg || !y[i];
    }
    if (!has_pos || !has_neg) continue;
    EXPECT_NEAR(weighted_auc(s, y, w), auc_oracle(s, y, w), 1e-12);
  }
}

TEST(Auc, MonotoneTransformInvariant) {
  std::vector<double> s = {0.1, 0.7, 0.3, 0.9, 0.5, 0.5};
  std::vector<int> y = {0, 1, 0, 1, 1, 0};
  std::vector<double> w = {1, 0.5, 1, 2, 1, 1};
  double base = weighted_auc(s, y, w);
  std::vector<double> t = s;
  for (auto& v : t) v = std::exp(3.0 * v) - 2.0;
  EXPECT_NEAR(weighted_auc(t, y, w), base, 1e-12);
}

TEST(Auc, SingleClassIsUndefined) {
  std::vector<double> s = {0.1, 0.2};
  std::vector<double> w = {1, 1};
  EXPECT_THROW(weighted_auc(s, {1, 1}, w), UndefinedMetricError);
  EXPECT_THROW(weighted_auc(s, {0, 0}, w), UndefinedMetricError);
}

TEST(EyeWeights, DuplicatedEyeLeavesMetricsUnchanged) {
  // duplicating one eye's image (same score) must not move AUC or Brier,
  // because the duplicate halves that eye's weights
  std::vector<WeightedPrediction> preds(4);
  const double scores[4] = {0.9, 0.2, 0.6, 0.4};
  const double targets[4] = {1, 0, 1, 0};
  for (int i = 0; i < 4; ++i) {
    preds[i].patient_id = "P" + std::to_string(i);
    preds[i].eye = Eye::Left;
    preds[i].scores.fill(scores[i]);
    preds[i].targets.fill(targets[i]);
  }
  assign_eye_weights(preds);
  double auc0 = label_auc(preds, 0);
  double brier0 = label_brier(preds, 0);

  auto dup = preds;
  dup.push_back(dup[2]);  // image the same eye twice
  assign_eye_weights(dup);
  EXPECT_NEAR(dup[2].weight, 0.5, 1e-15);
  EXPECT_NEAR(label_auc(dup, 0), auc0, 1e-12);
  EXPECT_NEAR(label_brier(dup, 0), brier0, 1e-12);
}

TEST(Brier, WeightedMeanSquaredError) {
  std::vector<double> s = {0.8, 0.3};
  std::vector<double> y = {1.0, 0.0};
  std::vector<double> w = {2.0, 1.0};
  double expected = (2.0 * 0.04 + 1.0 * 0.09) / 3.0;
  EXPECT_NEAR(brier(s, y, w), expected, 1e-15);
  EXPECT_THROW(brier({0.5}, {1.5}, {1.0}), ContractError);
}

TEST(Roc, SweepStartsAtOriginEndsAtOne) {
  std::vector<double> s = {0.9, 0.8, 0.4, 0.3};
  std::vector<int> y = {1, 0, 1, 0};
  std::vector<double> w = {1, 1, 1, 1};
  auto roc = roc_curve(s, y, w);
  ASSERT_EQ(roc.points.size(), 5u);
  EXPECT_EQ(roc.points.front().tpr, 0.0);
  EXPECT_EQ(roc.points.front().fpr, 0.0);
  EXPECT_TRUE(std::isinf(roc.points.front().threshold));
  EXPECT_EQ(roc.points.back().tpr, 1.0);
  EXPECT_EQ(roc.points.back().fpr, 1.0);
  // thresholds strictly decreasing, tpr/fpr non-decreasing
  for (std::size_t i = 1; i < roc.points.size(); ++i) {
    EXPECT_LT(roc.points[i].threshold, roc.points[i - 1].threshold);
    EXPECT_GE(roc.points[i].tpr, roc.points[i - 1].tpr);
    EXPECT_GE(roc.points[i].fpr, roc.points[i - 1].fpr);
  }
}

TEST(Threshold, MaxTprUnderFprCap) {
  std::vector<double> s = {0.9, 0.8, 0.4, 0.3};
  std::vector<int> y = {1, 0, 1, 0};
  std::vector<double> w = {1, 1, 1, 1};
  auto roc = roc_curve(s, y, w);
  // cap 0.40: the achievable points are fpr 0 (tpr .5) and fpr .5 -> pick .9
  auto strict = select_threshold(roc, 0.40);
  EXPECT_NEAR(strict.threshold, 0.9, 1e-15);
  EXPECT_NEAR(strict.tpr, 0.5, 1e-15);
  EXPECT_NEAR(strict.fpr, 0.0, 1e-15);
  // cap 0.60 admits fpr 0.5 with tpr 1.0
  auto loose = select_threshold(roc, 0.60);
  EXPECT_NEAR(loose.threshold, 0.4, 1e-15);
  EXPECT_NEAR(loose.tpr, 1.0, 1e-15);
  EXPECT_NEAR(loose.fpr, 0.5, 1e-15);
  EXPECT_THROW(select_threshold(roc, 0.0), ConfigError);
  EXPECT_THROW(select_threshold(roc, 1.5), ConfigError);
}

TEST(Threshold, NothingAchievableFlagsNothing) {
  // all positives score below all negatives: under a tight cap only the
  // (0,0) point qualifies, leaving the +inf threshold
  std::vector<double> s = {0.1, 0.9};
  std::vector<int> y = {1, 0};
  std::vector<double> w = {1, 1};
  auto roc = roc_curve(s, y, w);
  auto pol = select_threshold(roc, 0.40);
  EXPECT_TRUE(std::isinf(pol.threshold));
  EXPECT_EQ(pol.tpr, 0.0);
}

TEST(Ensemble, AggregationStatistics) {
  std::vector<double> v = {0.2, 0.9, 0.4};
  EXPECT_DOUBLE_EQ(ensemble_aggregate(v, EnsembleStat::Min), 0.2);
  EXPECT_DOUBLE_EQ(ensemble_aggregate(v, EnsembleStat::Max), 0.9);
  EXPECT_NEAR(ensemble_aggregate(v, EnsembleStat::Mean), 0.5, 1e-15);
  EXPECT_DOUBLE_EQ(ensemble_aggregate(v, EnsembleStat::Median), 0.4);
  std::vector<double> v4 = {0.1, 0.2, 0.6, 0.8};
  EXPECT_NEAR(ensemble_aggregate(v4, EnsembleStat::Median), 0.4, 1e-15);
  EXPECT_THROW(ensemble_aggregate({}, EnsembleStat::Max), ContractError);
}

TEST(Preprocess, MirrorsRightEyesAndResizes) {
  ImageSample s;
  s.eye = Eye::Right;
  s.pixels = Image(4, 6, 2);
  for (int j = 0; j < 6; ++j) s.pixels.at(0, 1, j) = static_cast<float>(j);
  Image out = preprocess(s, 4, 6);
  EXPECT_FLOAT_EQ(out.at(0, 1, 0), 5.0f);
  s.eye = Eye::Left;
  Image same = preprocess(s, 4, 6);
  EXPECT_EQ(same.pix, s.pixels.pix);
  Image small = preprocess(s, 2, 3);
  EXPECT_EQ(small.h, 2);
  EXPECT_EQ(small.w, 3);
  s.pixels = Image(4, 6, 3);
  EXPECT_THROW(preprocess(s, 4, 6), FormatError);
}
