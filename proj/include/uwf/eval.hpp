#pragma once

// Eye-weighted evaluation: every distinct eye contributes total weight 1 to
// the metrics regardless of how many times it was imaged. AUC is the
// weighted Mann-Whitney statistic with ties counting one half.

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "uwf/common.hpp"
#include "uwf/data.hpp"
#include "uwf/model.hpp"
#include "uwf/tensor.hpp"

namespace uwf {

struct WeightedPrediction {
  int image_index = 0;
  std::string patient_id;
  Eye eye = Eye::Left;
  double weight = 1.0;
  LabelVector scores{};   // predicted probabilities
  LabelVector targets{};  // ground truth
};

// weight = 1 / (images of that eye within the evaluated subset)
inline void assign_eye_weights(std::vector<WeightedPrediction>& preds) {
  std::map<std::pair<std::string, Eye>, int> counts;
  for (const auto& p : preds) ++counts[{p.patient_id, p.eye}];
  for (auto& p : preds) p.weight = 1.0 / counts[{p.patient_id, p.eye}];
}

inline double weighted_auc(const std::vector<double>& scores,
                           const std::vector<int>& labels,
                           const std::vector<double>& weights) {
  if (scores.size() != labels.size() || scores.size() != weights.size())
    throw ShapeError("weighted_auc: input length mismatch");
  std::vector<int> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return scores[a] < scores[b]; });

  double w_pos = 0.0, w_neg = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    (labels[i] ? w_pos : w_neg) += weights[i];
  if (w_pos <= 0.0 || w_neg <= 0.0)
    throw UndefinedMetricError("weighted_auc needs both classes present");

  double concordant = 0.0, cum_neg = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    double grp_pos = 0.0, grp_neg = 0.0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? grp_pos : grp_neg) += weights[order[j]];
      ++j;
    }
    concordant += grp_pos * cum_neg + 0.5 * grp_pos * grp_neg;
    cum_neg += grp_neg;
    i = j;
  }
  return concordant / (w_pos * w_neg);
}

inline double brier(const std::vector<double>& scores,
                    const std::vector<double>& labels,
                    const std::vector<double>& weights) {
  if (scores.size() != labels.size() || scores.size() != weights.size())
    throw ShapeError("brier: input length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!(labels[i] >= 0.0 && labels[i] <= 1.0))
      throw ContractError("brier label outside [0,1]");
    double d = scores[i] - labels[i];
    num += weights[i] * d * d;
    den += weights[i];
  }
  return den > 0.0 ? num / den : 0.0;
}

// ---------------------------------------------------------------------------
// ROC and FPR-constrained threshold selection
// ---------------------------------------------------------------------------

struct RocPoint {
  double threshold;  // predict positive if score >= threshold
  double tpr;
  double fpr;
};

struct RocCurve {
  std::vector<RocPoint> points;  // threshold decreasing: (0,0) ... (1,1)
};

inline RocCurve roc_curve(const std::vector<double>& scores,
                          const std::vector<int>& labels,
                          const std::vector<double>& weights) {
  double w_pos = 0.0, w_neg = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    (labels[i] ? w_pos : w_neg) += weights[i];
  if (w_pos <= 0.0 || w_neg <= 0.0)
    throw UndefinedMetricError("roc_curve needs both classes present");

  std::vector<int> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return scores[a] > scores[b]; });

  RocCurve roc;
  roc.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  double tp = 0.0, fp = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double thr = scores[order[i]];
    while (i < order.size() && scores[order[i]] == thr) {
      (labels[order[i]] ? tp : fp) += weights[order[i]];
      ++i;
    }
    roc.points.push_back({thr, tp / w_pos, fp / w_neg});
  }
  return roc;
}

struct ThresholdPolicy {
  std::string name;
  double max_fpr = 1.0;
  double threshold = std::numeric_limits<double>::infinity();
  double tpr = 0.0;
  double fpr = 0.0;
};

// Among achievable ROC points with FPR <= max_fpr, picks maximal TPR; ties
// break to lowest FPR, then to the highest threshold. If nothing satisfies
// the constraint the policy flags nothing (threshold +inf).
inline ThresholdPolicy select_threshold(const RocCurve& roc, double max_fpr,
                                        std::string name = "") {
  if (!(max_fpr > 0.0 && max_fpr <= 1.0))
    throw ConfigError("max_fpr must be in (0,1]");
  ThresholdPolicy best;
  best.name = std::move(name);
  best.max_fpr = max_fpr;
  for (const auto& pt : roc.points) {
    if (pt.fpr > max_fpr) continue;
    if (pt.tpr > best.tpr ||
        (pt.tpr == best.tpr &&
         (pt.fpr < best.fpr ||
          (pt.fpr == best.fpr && pt.threshold > best.threshold)))) {
      best.threshold = pt.threshold;
      best.tpr = pt.tpr;
      best.fpr = pt.fpr;
    }
  }
  return best;
}

enum class EnsembleStat { Min, Mean, Median, Max };

inline double ensemble_aggregate(const std::vector<double>& expert_scores,
                                 EnsembleStat stat = EnsembleStat::Max) {
  if (expert_scores.empty())
    throw ContractError("ensemble_aggregate: no expert scores");
  std::vector<double> v = expert_scores;
  switch (stat) {
    case EnsembleStat::Min:
      return *std::min_element(v.begin(), v.end());
    case EnsembleStat::Max:
      return *std::max_element(v.begin(), v.end());
    case EnsembleStat::Mean: {
      double s = 0.0;
      for (double x : v) s += x;
      return s / v.size();
    }
    case EnsembleStat::Median: {
      std::sort(v.begin(), v.end());
      std::size_t n = v.size();
      return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Preprocessing: right eyes mirrored to left-eye-canonical orientation,
// resized to model resolution.
// ---------------------------------------------------------------------------

inline Image preprocess(const ImageSample& sample, int target_h,
                        int target_w) {
  if (sample.pixels.c != 2)
    throw FormatError("preprocess expects 2-channel images, got " +
                      std::to_string(sample.pixels.c));
  Image img = sample.eye == Eye::Right ? hflip(sample.pixels) : sample.pixels;
  return bilinear_resize(img, target_h, target_w);
}

// ---------------------------------------------------------------------------
// Batched model scoring
// ---------------------------------------------------------------------------

template <typename T>
std::vector<LabelVector> predict_probabilities(
    ParameterSet<T>& params, const ModelConfig& cfg,
    const std::vector<Image>& images, int batch_size = 32) {
  std::vector<LabelVector> out(images.size());
  Rng dummy(0);
  const std::size_t plane =
      static_cast<std::size_t>(cfg.in_channels) * cfg.height * cfg.width;
  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    const std::size_t n = std::min<std::size_t>(batch_size,
                                                images.size() - start);
    auto x = make_tensor<T>(
        Shape{static_cast<int>(n), cfg.in_channels, cfg.height, cfg.width});
    for (std::size_t b = 0; b < n; ++b) {
      const Image& im = images[start + b];
      if (static_cast<std::size_t>(im.c) * im.h * im.w != plane)
        throw ShapeError("predict: image does not match model resolution");
      for (std::size_t k = 0; k < plane; ++k)
        x->value[b * plane + k] = static_cast<T>(im.pix[k]);
    }
    Tape<T> tape;
    auto fwd = model_forward(tape, params, cfg, x, /*train=*/false, dummy);
    auto probs = tape.sigmoid(fwd.logits);
    for (std::size_t b = 0; b < n; ++b) {
      LabelVector& lv = out[start + b];
      lv.fill(0.0);
      for (int l = 0; l < cfg.n_outputs; ++l)
        lv[l] = static_cast<double>(probs->value[b * cfg.n_outputs + l]);
    }
  }
  return out;
}

// Builds eye-weighted predictions for a subset of dataset samples.
template <typename T>
std::vector<WeightedPrediction> score_samples(ParameterSet<T>& params,
                                              const ModelConfig& cfg,
                                              const Dataset& ds,
                                              const std::vector<int>& indices) {
  std::vector<Image> imgs;
  imgs.reserve(indices.size());
  for (int i : indices)
    imgs.push_back(preprocess(ds.samples[i], cfg.height, cfg.width));
  auto probs = predict_probabilities(params, cfg, imgs);
  std::vector<WeightedPrediction> preds;
  preds.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    WeightedPrediction p;
    p.image_index = indices[k];
    p.patient_id = ds.samples[indices[k]].patient_id;
    p.eye = ds.samples[indices[k]].eye;
    p.scores = probs[k];
    p.targets = ds.samples[indices[k]].labels;
    preds.push_back(std::move(p));
  }
  assign_eye_weights(preds);
  return preds;
}

inline double label_auc(const std::vector<WeightedPrediction>& preds,
                        int label) {
  std::vector<double> s, w;
  std::vector<int> y;
  for (const auto& p : preds) {
    s.push_back(p.scores[label]);
    y.push_back(p.targets[label] >= 0.5 ? 1 : 0);
    w.push_back(p.weight);
  }
  return weighted_auc(s, y, w);
}

inline double label_brier(const std::vector<WeightedPrediction>& preds,
                          int label) {
  std::vector<double> s, yv, w;
  for (const auto& p : preds) {
    s.push_back(p.scores[label]);
    yv.push_back(p.targets[label]);
    w.push_back(p.weight);
  }
  return brier(s, yv, w);
}

inline RocCurve label_roc(const std::vector<WeightedPrediction>& preds,
                          int label) {
  std::vector<double> s, w;
  std::vector<int> y;
  for (const auto& p : preds) {
    s.push_back(p.scores[label]);
    y.push_back(p.targets[label] >= 0.5 ? 1 : 0);
    w.push_back(p.weight);
  }
  return roc_curve(s, y, w);
}

}  // namespace uwf
