#pragma once

// Pixel erasure/restoration audit against a global attention map. Pixels
// are ranked once (attention descending, index ascending as the tie-break)
// and a nested mask schedule is built over q = 0,10,...,100:
//   erasure(q)      keeps the N - floor(qN/100) highest-ranked pixels,
//   restoration(q)  keeps the floor(qN/100) lowest-ranked pixels,
// so restoration(100) and erasure(0) both keep everything. Pixels outside
// the kept set are replaced with standard-normal noise; the model is then
// re-scored and eye-weighted per-label AUCs recorded.

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <vector>

#include "uwf/common.hpp"
#include "uwf/eval.hpp"
#include "uwf/explain.hpp"

namespace uwf {

inline std::size_t keep_count(std::size_t n_pixels, int q) {
  if (q < 0 || q > 100) throw ConfigError("q must be in [0,100]");
  return n_pixels - (static_cast<std::size_t>(q) * n_pixels) / 100;
}

enum class MaskDirection { Erasure, Restoration };

inline std::string to_string(MaskDirection d) {
  return d == MaskDirection::Erasure ? "erasure" : "restoration";
}

struct MaskStep {
  MaskDirection direction = MaskDirection::Erasure;
  int q = 0;
  std::size_t kept = 0;      // pixels left untouched
  double retained_mass = 0;  // attention mass on kept pixels / total mass
  std::vector<bool> keep;    // h*w
};

struct MaskSchedule {
  int h = 0, w = 0;
  std::vector<int> order;  // pixel indices, most important first
  std::vector<MaskStep> steps;
};

inline MaskSchedule build_mask_schedule(const AttentionMap& map,
                                        int q_step = 10) {
  if (map.values.empty()) throw ConfigError("mask schedule over empty map");
  if (q_step < 1 || 100 % q_step != 0)
    throw ConfigError("q_step must divide 100");
  MaskSchedule sched;
  sched.h = map.h;
  sched.w = map.w;
  const std::size_t n = map.values.size();

  sched.order.resize(n);
  for (std::size_t i = 0; i < n; ++i) sched.order[i] = static_cast<int>(i);
  std::sort(sched.order.begin(), sched.order.end(), [&](int a, int b) {
    if (map.values[a] != map.values[b]) return map.values[a] > map.values[b];
    return a < b;
  });

  double total_mass = 0.0;
  for (double v : map.values) total_mass += v;
  // prefix[i]: attention mass on the i highest-ranked pixels
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    prefix[i + 1] = prefix[i] + map.values[sched.order[i]];

  auto make_step = [&](MaskDirection dir, int q) {
    MaskStep st;
    st.direction = dir;
    st.q = q;
    st.keep.assign(n, false);
    if (dir == MaskDirection::Erasure) {
      st.kept = keep_count(n, q);
      for (std::size_t i = 0; i < st.kept; ++i) st.keep[sched.order[i]] = true;
      st.retained_mass =
          total_mass > 0.0 ? prefix[st.kept] / total_mass : 0.0;
    } else {
      st.kept = n - keep_count(n, q);  // lowest-ranked floor(qN/100) pixels
      for (std::size_t i = n - st.kept; i < n; ++i)
        st.keep[sched.order[i]] = true;
      st.retained_mass =
          total_mass > 0.0 ? (total_mass - prefix[n - st.kept]) / total_mass
                           : 0.0;
    }
    return st;
  };

  for (int q = 0; q <= 100; q += q_step) {
    sched.steps.push_back(make_step(MaskDirection::Erasure, q));
    sched.steps.push_back(make_step(MaskDirection::Restoration, q));
  }
  return sched;
}

// Non-kept pixels become standard-normal noise on every channel. A mask that
// keeps everything returns the input bitwise unchanged (the noise stream is
// not consumed).
inline Image apply_mask(const Image& img, const MaskStep& step, Rng& rng) {
  const std::size_t npix = static_cast<std::size_t>(img.h) * img.w;
  if (step.keep.size() != npix)
    throw ShapeError("mask resolution does not match image");
  if (step.kept == npix) return img;
  Image out = img;
  for (int c = 0; c < img.c; ++c) {
    float* p = out.pix.data() + static_cast<std::size_t>(c) * npix;
    for (std::size_t i = 0; i < npix; ++i)
      if (!step.keep[i]) p[i] = static_cast<float>(rng.normal());
  }
  return out;
}

struct PepprRow {
  MaskDirection direction = MaskDirection::Erasure;
  int q = 0;
  std::size_t kept = 0;
  double retained_mass = 0.0;
  int repeat = 0;
  std::vector<double> auc;  // per label, NaN where undefined
};

struct PepprReport {
  std::vector<PepprRow> rows;

  // mean AUC over repeats for one (direction, q, label)
  double mean_auc(MaskDirection dir, int q, int label) const {
    double s = 0.0;
    int n = 0;
    for (const auto& r : rows)
      if (r.direction == dir && r.q == q && !std::isnan(r.auc[label])) {
        s += r.auc[label];
        ++n;
      }
    return n ? s / n : std::numeric_limits<double>::quiet_NaN();
  }
};

template <typename T>
PepprReport run_peppr(ParameterSet<T>& params, const ModelConfig& cfg,
                      const Dataset& ds, const std::vector<int>& indices,
                      const MaskSchedule& sched, int repeats,
                      std::uint64_t seed) {
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  if (indices.empty()) throw ConfigError("empty evaluation subset");
  if (sched.h != cfg.height || sched.w != cfg.width)
    throw ShapeError("mask schedule resolution does not match model input");

  std::vector<Image> canonical;
  canonical.reserve(indices.size());
  for (int i : indices)
    canonical.push_back(preprocess(ds.samples[i], cfg.height, cfg.width));

  PepprReport report;
  for (const auto& step : sched.steps) {
    for (int rep = 0; rep < repeats; ++rep) {
      std::vector<Image> masked;
      masked.reserve(canonical.size());
      for (std::size_t k = 0; k < canonical.size(); ++k) {
        const std::uint64_t dir_bit =
            step.direction == MaskDirection::Erasure ? 0 : 1;
        Rng rng(mix_seed(
            mix_seed(seed, (static_cast<std::uint64_t>(step.q) << 2) |
                               (dir_bit << 1) | 0x9E9911ull),
            mix_seed(static_cast<std::uint64_t>(rep),
                     static_cast<std::uint64_t>(indices[k]))));
        masked.push_back(apply_mask(canonical[k], step, rng));
      }
      auto probs = predict_probabilities(params, cfg, masked);
      std::vector<WeightedPrediction> preds(indices.size());
      for (std::size_t k = 0; k < indices.size(); ++k) {
        preds[k].image_index = indices[k];
        preds[k].patient_id = ds.samples[indices[k]].patient_id;
        preds[k].eye = ds.samples[indices[k]].eye;
        preds[k].scores = probs[k];
        preds[k].targets = ds.samples[indices[k]].labels;
      }
      assign_eye_weights(preds);

      PepprRow row;
      row.direction = step.direction;
      row.q = step.q;
      row.kept = step.kept;
      row.retained_mass = step.retained_mass;
      row.repeat = rep;
      row.auc.assign(cfg.n_outputs, std::numeric_limits<double>::quiet_NaN());
      for (int l = 0; l < cfg.n_outputs; ++l) {
        try {
          row.auc[l] = label_auc(preds, l);
        } catch (const UndefinedMetricError&) {
        }
      }
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

inline void write_peppr_csv(const PepprReport& report, int n_outputs,
                            const std::filesystem::path& path,
                            const ArtifactMeta& meta) {
  std::ofstream f(path);
  f << "# seed=" << meta.seed << " config_digest=" << meta.config_digest
    << " stage=" << meta.stage << "\n";
  f << "direction,q,kept_pixels,retained_mass,repeat";
  for (int l = 0; l < n_outputs; ++l) f << ",auc_" << kLabelNames[l];
  f << "\n" << std::setprecision(10);
  for (const auto& r : report.rows) {
    f << to_string(r.direction) << "," << r.q << "," << r.kept << ","
      << r.retained_mass << "," << r.repeat;
    for (double a : r.auc) f << "," << a;
    f << "\n";
  }
  if (!f) throw FormatError("failed writing " + path.string());
}

}  // namespace uwf
