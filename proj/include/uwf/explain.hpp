#pragma once

// Class-activation attention maps. Per image and label, channel weights are
// the spatial means of the logit's gradient on the last-stage feature maps;
// the map is the ReLU of the weighted channel sum, upsampled to input
// resolution and min-max normalized. Global maps aggregate per-image maps
// across a subset: label-wise maps weight images by predicted probability,
// the combined map is the unweighted mean of the eight label maps.

#include <algorithm>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "uwf/common.hpp"
#include "uwf/data.hpp"
#include "uwf/eval.hpp"
#include "uwf/model.hpp"

namespace uwf {

struct AttentionMap {
  int h = 0, w = 0;
  std::vector<double> values;  // h*w, row-major, in [0,1] after normalization
  std::string scope;           // "image", label name, or "combined"
  int n_images = 0;
  double weight_total = 0.0;

  double at(int i, int j) const { return values[static_cast<std::size_t>(i) * w + j]; }
};

namespace detail {

inline void minmax_normalize(std::vector<double>& v) {
  double lo = *std::min_element(v.begin(), v.end());
  double hi = *std::max_element(v.begin(), v.end());
  if (hi <= lo) {
    std::fill(v.begin(), v.end(), 0.0);
    return;
  }
  for (auto& x : v) x = (x - lo) / (hi - lo);
}

inline std::vector<double> bilinear_upsample(const std::vector<double>& src,
                                             int sh, int sw, int dh, int dw) {
  std::vector<double> out(static_cast<std::size_t>(dh) * dw);
  const double sy = double(sh) / dh, sx = double(sw) / dw;
  for (int i = 0; i < dh; ++i) {
    double fy = (i + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    double wy = fy - y0;
    int ya = std::min(std::max(y0, 0), sh - 1);
    int yb = std::min(std::max(y0 + 1, 0), sh - 1);
    for (int j = 0; j < dw; ++j) {
      double fx = (j + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      double wx = fx - x0;
      int xa = std::min(std::max(x0, 0), sw - 1);
      int xb = std::min(std::max(x0 + 1, 0), sw - 1);
      out[static_cast<std::size_t>(i) * dw + j] =
          (1 - wy) * ((1 - wx) * src[static_cast<std::size_t>(ya) * sw + xa] +
                      wx * src[static_cast<std::size_t>(ya) * sw + xb]) +
          wy * ((1 - wx) * src[static_cast<std::size_t>(yb) * sw + xa] +
                wx * src[static_cast<std::size_t>(yb) * sw + xb]);
    }
  }
  return out;
}

// Head forward on detached feature maps, so per-label gradients only replay
// the (cheap) head instead of the full backbone.
template <typename T>
TensorPtr<T> head_logits(Tape<T>& tape, ParameterSet<T>& p,
                         const ModelConfig& cfg, const TensorPtr<T>& feat) {
  Rng dummy(0);
  auto v = tape.global_avg_pool(feat);
  v = tape.dropout(v, cfg.dropout_pool, dummy, false);
  v = tape.linear(v, p.get("head.fc1.w"), p.get("head.fc1.b"));
  v = tape.prelu(v, p.get("head.prelu.alpha"));
  v = tape.dropout(v, cfg.dropout_hidden, dummy, false);
  return tape.linear(v, p.get("head.fc2.w"), p.get("head.fc2.b"));
}

}  // namespace detail

// Per-image, per-label maps plus the image's predicted probabilities,
// computed from one backbone pass.
template <typename T>
struct ImageAttention {
  std::vector<AttentionMap> label_maps;  // one per model output
  LabelVector probs{};
};

template <typename T>
ImageAttention<T> gradcam_all_labels(ParameterSet<T>& params,
                                     const ModelConfig& cfg,
                                     const Image& canonical) {
  const std::size_t plane =
      static_cast<std::size_t>(cfg.in_channels) * cfg.height * cfg.width;
  if (canonical.pix.size() != plane)
    throw ShapeError("gradcam: image does not match model resolution");

  Rng dummy(0);
  auto x = make_tensor<T>(Shape{1, cfg.in_channels, cfg.height, cfg.width});
  for (std::size_t k = 0; k < plane; ++k)
    x->value[k] = static_cast<T>(canonical.pix[k]);

  Tape<T> backbone_tape;
  auto fwd = model_forward(backbone_tape, params, cfg, x, false, dummy);
  const int fc = fwd.features->shape[1], fh = fwd.features->shape[2],
            fw = fwd.features->shape[3];
  const std::size_t fplane = static_cast<std::size_t>(fh) * fw;

  ImageAttention<T> out;
  out.probs.fill(0.0);
  for (int l = 0; l < cfg.n_outputs; ++l) {
    double z = static_cast<double>(fwd.logits->value[l]);
    out.probs[l] = 1.0 / (1.0 + std::exp(-z));
  }

  for (int l = 0; l < cfg.n_outputs; ++l) {
    auto feat = make_tensor<T>(fwd.features->shape, fwd.features->value, true);
    Tape<T> tape;
    auto logits = detail::head_logits(tape, params, cfg, feat);
    auto target = tape.select(logits, static_cast<std::size_t>(l));
    tape.backward(target);
    feat->ensure_grad();

    std::vector<double> map(fplane, 0.0);
    for (int ch = 0; ch < fc; ++ch) {
      double alpha = 0.0;
      const T* g = feat->grad.data() + static_cast<std::size_t>(ch) * fplane;
      for (std::size_t i = 0; i < fplane; ++i) alpha += static_cast<double>(g[i]);
      alpha /= static_cast<double>(fplane);
      const T* a = feat->value.data() + static_cast<std::size_t>(ch) * fplane;
      for (std::size_t i = 0; i < fplane; ++i)
        map[i] += alpha * static_cast<double>(a[i]);
    }
    for (auto& v : map) v = std::max(v, 0.0);

    AttentionMap am;
    am.h = cfg.height;
    am.w = cfg.width;
    am.values = detail::bilinear_upsample(map, fh, fw, cfg.height, cfg.width);
    detail::minmax_normalize(am.values);
    am.scope = "image";
    am.n_images = 1;
    am.weight_total = 1.0;
    out.label_maps.push_back(std::move(am));
  }
  return out;
}

template <typename T>
AttentionMap gradcam(ParameterSet<T>& params, const ModelConfig& cfg,
                     const Image& canonical, int label) {
  if (label < 0 || label >= cfg.n_outputs)
    throw ConfigError("gradcam label out of range");
  return gradcam_all_labels(params, cfg, canonical).label_maps[label];
}

// ---------------------------------------------------------------------------
// Global maps over a set of canonical images
// ---------------------------------------------------------------------------

struct GlobalMaps {
  std::vector<AttentionMap> label_maps;  // one per label, normalized
  AttentionMap combined;
};

template <typename T>
GlobalMaps build_global_maps(ParameterSet<T>& params, const ModelConfig& cfg,
                             const std::vector<Image>& images) {
  if (images.empty()) throw ConfigError("global attention map over empty set");
  const std::size_t npix = static_cast<std::size_t>(cfg.height) * cfg.width;

  std::vector<std::vector<double>> acc(cfg.n_outputs,
                                       std::vector<double>(npix, 0.0));
  std::vector<double> wsum(cfg.n_outputs, 0.0);

  for (const auto& img : images) {
    auto att = gradcam_all_labels(params, cfg, img);
    for (int l = 0; l < cfg.n_outputs; ++l) {
      const double w = att.probs[l];
      wsum[l] += w;
      const auto& m = att.label_maps[l].values;
      for (std::size_t i = 0; i < npix; ++i) acc[l][i] += w * m[i];
    }
  }

  GlobalMaps out;
  std::vector<double> combined(npix, 0.0);
  for (int l = 0; l < cfg.n_outputs; ++l) {
    AttentionMap am;
    am.h = cfg.height;
    am.w = cfg.width;
    am.scope = l < static_cast<int>(kNumLabels) ? kLabelNames[l] : "out";
    am.n_images = static_cast<int>(images.size());
    am.weight_total = wsum[l];
    if (wsum[l] <= 0.0)
      throw UndefinedMetricError("no predicted mass for label " + am.scope);
    am.values = acc[l];
    for (auto& v : am.values) v /= wsum[l];
    detail::minmax_normalize(am.values);
    for (std::size_t i = 0; i < npix; ++i) combined[i] += am.values[i];
    out.label_maps.push_back(std::move(am));
  }
  for (auto& v : combined) v /= cfg.n_outputs;
  detail::minmax_normalize(combined);
  out.combined.h = cfg.height;
  out.combined.w = cfg.width;
  out.combined.values = std::move(combined);
  out.combined.scope = "combined";
  out.combined.n_images = static_cast<int>(images.size());
  out.combined.weight_total = static_cast<double>(cfg.n_outputs);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization: map values as a single-channel raw image, a binary PGM
// preview with nested decile contours, and a JSON sidecar.
// ---------------------------------------------------------------------------

inline void write_attention_raw(const AttentionMap& map,
                                const std::filesystem::path& path) {
  Image img(map.h, map.w, 1);
  for (std::size_t i = 0; i < map.values.size(); ++i)
    img.pix[i] = static_cast<float>(map.values[i]);
  write_raw_image(path, img);
}

inline AttentionMap read_attention_raw(const std::filesystem::path& path) {
  Image img = read_raw_image(path);
  if (img.c != 1) throw FormatError("attention map must be single-channel");
  AttentionMap map;
  map.h = img.h;
  map.w = img.w;
  map.values.assign(img.pix.begin(), img.pix.end());
  return map;
}

// Value quantile thresholds at 10% steps (q10..q100), each defining a nested
// high-attention region {value >= threshold}.
inline std::vector<double> decile_thresholds(const AttentionMap& map) {
  std::vector<double> sorted = map.values;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> thr;
  const std::size_t n = sorted.size();
  for (int d = 1; d <= 10; ++d) {
    // nearest-rank d*10th percentile: ceil(d*n/10) smallest values below it
    std::size_t rank = (static_cast<std::size_t>(d) * n + 9) / 10;
    thr.push_back(sorted[std::min(n - 1, rank == 0 ? 0 : rank - 1)]);
  }
  return thr;
}

inline void render_heatmap(const AttentionMap& map,
                           const std::filesystem::path& pgm_path,
                           const std::filesystem::path& json_path,
                           const ArtifactMeta& meta) {
  auto thr = decile_thresholds(map);
  {
    std::ofstream f(pgm_path, std::ios::binary);
    if (!f) throw FormatError("cannot write " + pgm_path.string());
    f << "P5\n" << map.w << " " << map.h << "\n255\n";
    for (double v : map.values) {
      // quantize to the decile band the pixel falls in, 25..255
      int band = 0;
      while (band < 9 && v >= thr[band]) ++band;
      unsigned char px = static_cast<unsigned char>(25 * (band + 1) + 5);
      f.write(reinterpret_cast<const char*>(&px), 1);
    }
    if (!f) throw FormatError("write failed: " + pgm_path.string());
  }
  nlohmann::json j;
  j["meta"] = meta.to_json();
  j["scope"] = map.scope;
  j["height"] = map.h;
  j["width"] = map.w;
  j["n_images"] = map.n_images;
  j["weight_total"] = map.weight_total;
  j["decile_thresholds"] = thr;
  std::ofstream f(json_path);
  f << j.dump(2) << "\n";
  if (!f) throw FormatError("failed writing " + json_path.string());
}

}  // namespace uwf
